"""Episode sampling, the per-episode pipeline and benchmark aggregation."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import FeatureMatrix, FewShotTask, InferenceConfig, LaplacianShotError, Rng, remap_labels
from .graph import build_knn_graph
from .prototype import (
    mean_prototypes,
    nearest_prototype,
    normalize_task,
    rectify_prototypes,
    shift_correction,
)
from .solver import solve

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.1, 0.3, 0.5, 0.7, 0.8, 1.0, 1.2, 1.5)
DEFAULT_KNN_GRID = (3, 5, 10)
CI_Z = 1.96


class SamplingError(LaplacianShotError):
    pass


class EpisodeFailure(LaplacianShotError):
    def __init__(self, index, seed, cause):
        super().__init__(f"episode {index} (seed {seed}) failed: {cause}")
        self.index = index
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class EpisodeSpec:
    ways: int = 5
    shots: Union[int, tuple] = 1
    queries_per_class: int = 15
    num_episodes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.ways < 2:
            raise ValueError(f"ways must be >= 2, got {self.ways}")
        if isinstance(self.shots, (list, tuple)):
            object.__setattr__(self, "shots", tuple(int(s) for s in self.shots))
            if len(self.shots) != self.ways:
                raise ValueError(f"got {len(self.shots)} shot counts for {self.ways} ways")
        if min(self.shot_list) < 1:
            raise ValueError("every class needs at least one shot")
        if self.queries_per_class < 1:
            raise ValueError("queries_per_class must be >= 1")
        if self.num_episodes < 1:
            raise ValueError("num_episodes must be >= 1")

    @property
    def shot_list(self) -> tuple:
        if isinstance(self.shots, tuple):
            return self.shots
        return (int(self.shots),) * self.ways

    @property
    def imbalanced(self) -> bool:
        return len(set(self.shot_list)) > 1

    def episode_seeds(self) -> list:
        return [Rng.derive_seed(self.seed, i) for i in range(self.num_episodes)]


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 20
    dim: int = 64
    cluster_std: float = 1.0
    center_scale: float = 10.0
    points_per_class: int = 40
    seed: int = 0

    def __post_init__(self):
        if not self.cluster_std > 0:
            raise ValueError("cluster_std must be > 0")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


def generate_synthetic(spec: SyntheticSpec) -> FeatureMatrix:
    """Isotropic Gaussian blobs.

    Centres are drawn uniformly from ``[0, center_scale)^dim`` before any noise,
    so the centres for a given seed do not depend on ``points_per_class``.
    Rows are grouped by class.
    """
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(0.0, spec.center_scale, size=(spec.num_classes, spec.dim))
    noise = rng.standard_normal((spec.num_classes, spec.points_per_class, spec.dim))
    data = centers[:, None, :] + spec.cluster_std * noise
    labels = np.repeat(np.arange(spec.num_classes), spec.points_per_class)
    return FeatureMatrix(data.reshape(-1, spec.dim), labels)


def _class_index(pool: FeatureMatrix) -> dict:
    order = np.argsort(pool.labels, kind="stable")
    classes, starts = np.unique(pool.labels[order], return_index=True)
    bounds = list(starts[1:]) + [order.size]
    return {int(c): order[s:e] for c, s, e in zip(classes, starts, bounds)}


def sample_episode(pool: FeatureMatrix, spec: EpisodeSpec, rng, _index=None) -> FewShotTask:
    """Draw ``ways`` classes, then disjoint support and query rows per class.

    Query labels are kept (remapped) for scoring only.
    """
    if pool.labels is None:
        raise SamplingError("pool has no labels")
    gen = rng.generator if isinstance(rng, Rng) else rng
    index = _index if _index is not None else _class_index(pool)
    classes = np.array(sorted(index))
    if classes.size < spec.ways:
        raise SamplingError(f"pool has {classes.size} classes, episode needs {spec.ways}")

    chosen = gen.choice(classes, size=spec.ways, replace=False)
    support_rows, query_rows = [], []
    for cls, shots in zip(chosen, spec.shot_list):
        rows = index[int(cls)]
        need = shots + spec.queries_per_class
        if rows.size < need:
            raise SamplingError(f"class {int(cls)} has {rows.size} rows, episode needs {need}")
        picked = gen.choice(rows, size=need, replace=False)
        support_rows.append(picked[:shots])
        query_rows.append(picked[shots:])
    task = FewShotTask(pool.take(np.concatenate(support_rows)), pool.take(np.concatenate(query_rows)))
    return remap_labels(task)


@dataclass
class EpisodeResult:
    index: int
    seed: int
    accuracy: float
    per_class_accuracy: float
    iterations: int
    converged: bool
    monotone: bool
    seconds: float
    classes: tuple
    predictions: Optional[list] = None
    warnings: list = field(default_factory=list)


def prepare_task(task: FewShotTask, config: InferenceConfig, base_mean=None):
    """Normalisation, shift correction and prototype estimation.

    Returns the transformed task and its prototypes.
    """
    task = normalize_task(remap_labels(task), config.normalization, base_mean)
    if config.shift_correction:
        task, _ = shift_correction(task)
    protos = mean_prototypes(task)
    if config.rectify_prototypes:
        protos = rectify_prototypes(task, protos, config.distance)
    return task, protos


def infer(task: FewShotTask, config: InferenceConfig, base_mean=None):
    """Full transductive pipeline for one task; returns a ``Solution`` and warnings."""
    task, protos = prepare_task(task, config, base_mean)
    warnings = []
    graph = None
    if config.lam != 0 and task.query.rows >= 2:
        graph = build_knn_graph(task.query, config.knn, config.symmetrize_affinity)
        if graph.clamped:
            warnings.append(f"knn clamped from {graph.k_requested} to {graph.k}")
    return solve(task, protos, graph, config), warnings


def infer_nearest_prototype(task: FewShotTask, config: InferenceConfig, base_mean=None):
    """Inductive baseline: nearest prototype under the configured metric."""
    task, protos = prepare_task(task, config, base_mean)
    return nearest_prototype(task.query.data, protos, config.distance)


def score(predicted: np.ndarray, truth: np.ndarray, num_classes: int) -> tuple:
    """Mean accuracy over query rows and macro accuracy over classes."""
    correct = predicted == truth
    acc = float(np.mean(correct))
    per_class = [np.mean(correct[truth == c]) for c in range(num_classes) if np.any(truth == c)]
    return acc, float(np.mean(per_class))


def run_episode(pool, spec, config, index, method="laplacian", base_mean=None,
                keep_predictions=False, _index=None) -> EpisodeResult:
    seed = Rng.derive_seed(spec.seed, index)
    try:
        task = sample_episode(pool, spec, Rng(seed), _index)
        start = time.perf_counter()
        if method == "laplacian":
            solution, warnings = infer(task, config, base_mean)
            labels, trace = solution.labels, solution.trace
            iterations, converged, monotone = trace.iterations, trace.converged, trace.monotone
        elif method == "nearest_prototype":
            labels = infer_nearest_prototype(task, config, base_mean)
            warnings, iterations, converged, monotone = [], 0, True, True
        else:
            raise ValueError(f"unknown method {method!r}")
        seconds = time.perf_counter() - start
    except LaplacianShotError as exc:
        raise EpisodeFailure(index, seed, exc) from exc

    acc, macro = score(labels, task.query.labels, task.num_classes)
    return EpisodeResult(
        index=index,
        seed=seed,
        accuracy=acc,
        per_class_accuracy=macro,
        iterations=iterations,
        converged=converged,
        monotone=monotone,
        seconds=seconds,
        classes=task.classes,
        predictions=[task.classes[c] for c in labels] if keep_predictions else None,
        warnings=warnings,
    )


@dataclass
class EpisodeReport:
    config: InferenceConfig
    spec: EpisodeSpec
    method: str
    per_episode: list

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([e.accuracy for e in self.per_episode])

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def ci95(self) -> float:
        return confidence_halfwidth(self.accuracies)

    @property
    def mean_per_class_accuracy(self) -> float:
        return float(np.mean([e.per_class_accuracy for e in self.per_episode]))

    @property
    def per_class_ci95(self) -> float:
        return confidence_halfwidth([e.per_class_accuracy for e in self.per_episode])

    @property
    def mean_iterations(self) -> float:
        return float(np.mean([e.iterations for e in self.per_episode]))

    @property
    def median_iterations(self) -> float:
        return float(np.median([e.iterations for e in self.per_episode]))

    @property
    def mean_seconds(self) -> float:
        return float(np.mean([e.seconds for e in self.per_episode]))

    @property
    def non_monotone_episodes(self) -> int:
        return sum(not e.monotone for e in self.per_episode)

    @property
    def seeds(self) -> list:
        return [e.seed for e in self.per_episode]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": asdict(self.config),
            "spec": asdict(self.spec),
            "aggregate": {
                "mean_accuracy": self.mean_accuracy,
                "ci95": self.ci95,
                "mean_per_class_accuracy": self.mean_per_class_accuracy,
                "per_class_ci95": self.per_class_ci95,
                "mean_iterations": self.mean_iterations,
                "median_iterations": self.median_iterations,
                "non_monotone_episodes": self.non_monotone_episodes,
                "mean_seconds": self.mean_seconds,
            },
            "episodes": [asdict(e) for e in self.per_episode],
        }


def confidence_halfwidth(values) -> float:
    """Normal-approximation 95% half-width, ``1.96 * s / sqrt(T)`` with the sample std."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return CI_Z * float(np.std(values, ddof=1)) / math.sqrt(values.size)


def run_benchmark(pool: FeatureMatrix, spec: EpisodeSpec, config: InferenceConfig,
                  method: str = "laplacian", base_mean=None, workers: int = 1,
                  keep_predictions: bool = False) -> EpisodeReport:
    index = _class_index(pool) if pool.labels is not None else None
    if index is None:
        raise SamplingError("pool has no labels")

    def one(i):
        return run_episode(pool, spec, config, i, method, base_mean, keep_predictions, index)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(spec.num_episodes)))
    else:
        results = [one(i) for i in range(spec.num_episodes)]
    results.sort(key=lambda r: r.index)
    return EpisodeReport(config, spec, method, results)


@dataclass
class TuningRow:
    lam: float
    knn: int
    mean_accuracy: float
    ci95: float
    seeds: list


def tune_lambda(pool, spec, config, grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                base_mean=None, workers: int = 1) -> tuple:
    """Pick the lambda with the best mean accuracy over a shared set of episodes.

    Ties go to the smaller lambda. Returns ``(best_lambda, rows)``.
    """
    if not len(grid):
        raise ValueError("lambda grid is empty")
    rows = []
    for lam in grid:
        report = run_benchmark(pool, spec, config.replace(lam=float(lam)),
                               base_mean=base_mean, workers=workers)
        rows.append(TuningRow(float(lam), config.knn, report.mean_accuracy, report.ci95,
                              report.seeds))
        log.info("lambda=%g knn=%d acc=%.4f", lam, config.knn, report.mean_accuracy)
    best = max(rows, key=lambda r: (r.mean_accuracy, -r.lam))
    return best.lam, rows


def tune(pool, spec, config, lambdas=DEFAULT_LAMBDA_GRID, knns=DEFAULT_KNN_GRID,
         base_mean=None, workers: int = 1) -> tuple:
    """Joint lambda/k grid. Ties go to the smaller k, then the smaller lambda."""
    rows = []
    for k in knns:
        _, part = tune_lambda(pool, spec, config.replace(knn=int(k)), lambdas, base_mean, workers)
        rows.extend(part)
    best = max(rows, key=lambda r: (r.mean_accuracy, -r.knn, -r.lam))
    return best.lam, best.knn, rows


ABLATIONS = (
    ("N(Y)", dict(lam=0.0, rectify_prototypes=False)),
    ("N(Y) + L(Y)", dict(rectify_prototypes=False)),
    ("N(Y) + rectified", dict(lam=0.0, rectify_prototypes=True)),
    ("N(Y) + L(Y) + rectified", dict(rectify_prototypes=True)),
)


def ablation(pool, spec, config, base_mean=None, workers: int = 1) -> dict:
    """Nearest prototype with and without the Laplacian term and rectification."""
    return {
        name: run_benchmark(pool, spec, config.replace(**changes), base_mean=base_mean,
                            workers=workers)
        for name, changes in ABLATIONS
    }


def time_inference(pool, spec, config, base_mean=None) -> tuple:
    """Mean per-episode wall time of the transductive pipeline and the baseline.

    Both are timed single-threaded on identical episodes; sampling is excluded.
    """
    lap = run_benchmark(pool, spec, config, "laplacian", base_mean)
    base = run_benchmark(pool, spec, config, "nearest_prototype", base_mean)
    return lap.mean_seconds, base.mean_seconds
