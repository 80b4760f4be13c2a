"""Bound optimisation of the Laplacian-regularised assignment energy.

The relaxed objective over soft assignments ``Y`` (rows on the simplex) is::

    R(Y) = sum_q y_q . log y_q  +  sum_q y_q . a_q  -  (lam / 2) sum_{q,p} w_qp y_q . y_p

Linearising the concave pairwise part at the current iterate gives a surrogate
that separates over query rows, and each row's minimiser is a softmax::

    y_q <- softmax(-a_q + lam * b_q),   b_q = sum_p w_qp y_p

All rows are updated from the same previous iterate, so the update is a
data-parallel map over queries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import DimMismatch, FeatureMatrix, InferenceConfig, NumericalFailure, SoftAssignment
from .graph import AffinityGraph
from .prototype import PrototypeSet, distance_matrix

LOG_FLOOR = 1e-300
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class UnaryPotentials:
    a: np.ndarray


@dataclass(frozen=True, eq=False)
class PairwisePotentials:
    b: np.ndarray


@dataclass
class SolverTrace:
    objective_values: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    monotone: bool = True
    # (iteration, increase) for every step where R went up by more than the slack
    violations: list = field(default_factory=list)


class Solution(NamedTuple):
    labels: np.ndarray
    y: SoftAssignment
    trace: SolverTrace


def _matrix(x) -> np.ndarray:
    for attr in ("matrix", "a", "b"):
        if hasattr(x, attr):
            return getattr(x, attr)
    return np.asarray(x, dtype=np.float64)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def unary_potentials(query, protos, metric: str = "euclidean") -> UnaryPotentials:
    x = query.data if isinstance(query, FeatureMatrix) else np.asarray(query, dtype=np.float64)
    m = protos.vectors if isinstance(protos, PrototypeSet) else np.asarray(protos, dtype=np.float64)
    return UnaryPotentials(distance_matrix(x, m, metric))


def initialize_assignment(a) -> SoftAssignment:
    return SoftAssignment(softmax_rows(-_matrix(a)), iteration=0)


def pairwise_potentials(graph: AffinityGraph, y) -> PairwisePotentials:
    return PairwisePotentials(graph.propagate(_matrix(y)))


def mm_update(a, b, lam: float, iteration: int = 0) -> SoftAssignment:
    a, b = _matrix(a), _matrix(b)
    if a.shape != b.shape:
        raise DimMismatch(f"unary shape {a.shape} != pairwise shape {b.shape}")
    return SoftAssignment(softmax_rows(lam * b - a), iteration=iteration)


def _entropy_and_unary(y: np.ndarray, a: np.ndarray) -> float:
    return float(np.sum(y * (np.log(np.maximum(y, LOG_FLOOR)) + a)))


def relaxed_objective(y, a, graph: Optional[AffinityGraph], lam: float) -> float:
    y, a = _matrix(y), _matrix(a)
    if y.shape != a.shape:
        raise DimMismatch(f"assignment shape {y.shape} != unary shape {a.shape}")
    value = _entropy_and_unary(y, a)
    if graph is not None and lam:
        value -= 0.5 * lam * float(np.sum(y * graph.propagate(y)))
    return value


def surrogate_value(y, a, b_prev, lam: float) -> float:
    """Surrogate at the previous iterate, without its additive constant."""
    y, a, b = _matrix(y), _matrix(a), _matrix(b_prev)
    return float(np.sum(y * (np.log(np.maximum(y, LOG_FLOOR)) + a - lam * b)))


def iterate(a: np.ndarray, graph: Optional[AffinityGraph], lam: float,
            max_iterations: int = 1000, rel_tolerance: float = 1e-6) -> tuple:
    """Run the MM iterations from the softmax initialisation.

    Returns the final assignment matrix and the trace.
    """
    trace = SolverTrace()
    y = softmax_rows(-a)
    use_graph = graph is not None and lam != 0
    if use_graph and graph.n != a.shape[0]:
        raise DimMismatch(f"graph has {graph.n} nodes, expected {a.shape[0]}")
    b = graph.propagate(y) if use_graph else np.zeros_like(a)

    prev = _entropy_and_unary(y, a) - 0.5 * lam * float(np.sum(y * b))
    trace.objective_values.append(prev)
    if not np.isfinite(prev):
        raise NumericalFailure("non-finite objective at initialisation", trace)

    for i in range(1, max_iterations + 1):
        y = softmax_rows(lam * b - a)
        if use_graph:
            b = graph.propagate(y)
        value = _entropy_and_unary(y, a) - 0.5 * lam * float(np.sum(y * b))
        trace.objective_values.append(value)
        trace.iterations = i
        if not np.isfinite(value):
            raise NumericalFailure(f"non-finite objective at iteration {i}", trace)
        if value > prev + MONOTONE_SLACK:
            trace.monotone = False
            trace.violations.append((i, value - prev))
        if abs(value - prev) <= rel_tolerance * (abs(prev) + 1.0):
            trace.converged = True
            break
        prev = value
    return y, trace


def solve(task, protos: PrototypeSet, graph: Optional[AffinityGraph],
          config: InferenceConfig) -> Solution:
    """Transductive labels for ``task.query``.

    ``graph`` may be None, which is only meaningful with ``lam = 0``.
    """
    query = task.query if hasattr(task, "query") else task
    a = unary_potentials(query, protos, config.distance).a
    y, trace = iterate(a, graph, config.lam, config.max_iterations, config.rel_tolerance)
    assignment = SoftAssignment(y, iteration=trace.iterations)
    return Solution(assignment.labels, assignment, trace)
