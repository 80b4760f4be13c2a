"""Domain types shared by every stage of the inference pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class LaplacianShotError(Exception):
    """Base class for all errors raised by this package."""


class InvalidTask(LaplacianShotError):
    pass


class DimMismatch(LaplacianShotError):
    pass


class InvalidConfig(LaplacianShotError):
    pass


class NumericalFailure(LaplacianShotError):
    """Raised when the solver meets a non-finite objective.

    The partial :class:`~laplacianshot.solver.SolverTrace` is kept on
    ``self.trace`` for post-mortem inspection.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


DISTANCES = ("euclidean", "squared_euclidean", "cosine_distance")
NORMALIZATIONS = ("none", "l2", "cl2")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Row-major embedding matrix with optional labels and ids.

    Data is always stored as float64 and is rejected if it contains NaN or Inf.
    """

    data: np.ndarray
    labels: Optional[np.ndarray] = None
    ids: Optional[tuple] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 1 and data.size == 0:
            data = data.reshape(0, 0)
        if data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise ValueError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
            if labels.shape[0] != data.shape[0]:
                raise ValueError(
                    f"labels have length {labels.shape[0]}, expected {data.shape[0]}"
                )
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.ids is not None:
            ids = tuple(self.ids)
            if len(ids) != data.shape[0]:
                raise ValueError(f"ids have length {len(ids)}, expected {data.shape[0]}")
            object.__setattr__(self, "ids", ids)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def with_data(self, data) -> "FeatureMatrix":
        return replace(self, data=data)

    def take(self, index) -> "FeatureMatrix":
        index = np.asarray(index, dtype=np.int64)
        labels = None if self.labels is None else self.labels[index]
        ids = None if self.ids is None else tuple(self.ids[i] for i in index)
        return FeatureMatrix(self.data[index], labels, ids)

    def equals(self, other: "FeatureMatrix") -> bool:
        if self.data.shape != other.data.shape or not np.array_equal(self.data, other.data):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class FewShotTask:
    """A support/query pair.

    ``classes`` holds the original label values in ascending order once the
    task has been through :func:`remap_labels`; position ``c`` of that tuple
    is the original id of class ``c``.
    """

    support: FeatureMatrix
    query: FeatureMatrix
    classes: Optional[tuple] = None

    def __post_init__(self):
        if self.support.labels is None:
            raise InvalidTask("support set has no labels")
        if self.query.rows and self.support.dim != self.query.dim:
            raise DimMismatch(
                f"support dim {self.support.dim} != query dim {self.query.dim}"
            )

    @property
    def num_classes(self) -> int:
        if self.classes is not None:
            return len(self.classes)
        return len(np.unique(self.support.labels))

    @property
    def shots_per_class(self) -> np.ndarray:
        return np.bincount(self.support.labels, minlength=self.num_classes)

    @property
    def is_remapped(self) -> bool:
        return self.classes is not None

    def with_query(self, query: FeatureMatrix) -> "FewShotTask":
        return replace(self, query=query)

    def with_support(self, support: FeatureMatrix) -> "FewShotTask":
        return replace(self, support=support)


def remap_labels(task: FewShotTask) -> FewShotTask:
    """Map support labels onto ``0..C-1`` by ascending original value.

    Query labels, when present, are mapped with the same table. Applying the
    function to an already remapped task returns it unchanged.
    """
    if task.is_remapped:
        return task
    classes = np.unique(task.support.labels)
    if classes.size < 2:
        raise InvalidTask(f"need at least 2 distinct classes, got {classes.size}")
    support = replace(task.support, labels=np.searchsorted(classes, task.support.labels))

    query = task.query
    if query.labels is not None and query.rows:
        pos = np.searchsorted(classes, query.labels)
        pos_clipped = np.minimum(pos, classes.size - 1)
        unknown = classes[pos_clipped] != query.labels
        if np.any(unknown):
            raise InvalidTask(
                f"query label {query.labels[np.argmax(unknown)]} has no support examples"
            )
        query = replace(query, labels=pos)
    return FewShotTask(support, query, tuple(int(c) for c in classes))


@dataclass(frozen=True)
class SoftAssignment:
    """Row-stochastic N x C matrix of relaxed label assignments."""

    matrix: np.ndarray
    iteration: int = 0

    @property
    def labels(self) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.matrix, axis=1)

    def is_on_simplex(self, atol: float = 1e-9) -> bool:
        m = self.matrix
        return bool(np.all(m >= 0) and np.allclose(m.sum(axis=1), 1.0, rtol=0, atol=atol))


@dataclass(frozen=True)
class InferenceConfig:
    lam: float = 1.0
    knn: int = 3
    distance: str = "euclidean"
    normalization: str = "none"
    rectify_prototypes: bool = False
    shift_correction: bool = False
    symmetrize_affinity: bool = False
    max_iterations: int = 1000
    rel_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidConfig(f"lambda must be >= 0, got {self.lam}")
        if int(self.knn) != self.knn or self.knn < 1:
            raise InvalidConfig(f"knn must be a positive integer, got {self.knn}")
        if not self.rel_tolerance > 0:
            raise InvalidConfig(f"rel_tolerance must be > 0, got {self.rel_tolerance}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidConfig(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.distance not in DISTANCES:
            raise InvalidConfig(f"unknown distance {self.distance!r}; choose from {DISTANCES}")
        if self.normalization not in NORMALIZATIONS:
            raise InvalidConfig(
                f"unknown normalization {self.normalization!r}; choose from {NORMALIZATIONS}"
            )

    def replace(self, **changes) -> "InferenceConfig":
        return replace(self, **changes)


@dataclass
class Rng:
    """Seeded generator owned by a single episode."""

    seed: int
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.default_rng(self.seed)

    @staticmethod
    def derive_seed(root_seed: int, index: int) -> int:
        """Per-episode seed: first 64-bit word of ``SeedSequence([root_seed, index])``."""
        ss = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    @classmethod
    def for_episode(cls, root_seed: int, index: int) -> "Rng":
        return cls(cls.derive_seed(root_seed, index))
