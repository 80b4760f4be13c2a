"""Feature transforms and class-prototype estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DimMismatch, FeatureMatrix, FewShotTask, LaplacianShotError


class MissingBaseMean(LaplacianShotError):
    pass


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    vectors: np.ndarray
    kind: str = "plain"
    # rows whose cosine similarity had to be taken as 0 because of a zero norm
    zero_norm_rows: tuple = field(default=())

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True, eq=False)
class ShiftVector:
    delta: np.ndarray


@dataclass(frozen=True, eq=False)
class Normalized:
    features: FeatureMatrix
    zero_rows: np.ndarray  # indices of rows left untouched because their norm was 0


def normalize_l2(features: FeatureMatrix) -> Normalized:
    x = features.data
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0
    scale = np.where(zero, 1.0, norms)
    return Normalized(features.with_data(x / scale[:, None]), np.flatnonzero(zero))


def normalize_cl2(features: FeatureMatrix, base_mean) -> Normalized:
    """Subtract the base-class mean, then L2-normalise."""
    if base_mean is None:
        raise MissingBaseMean("CL2 normalization requires a base-class mean vector")
    base_mean = np.asarray(base_mean, dtype=np.float64).reshape(-1)
    if base_mean.shape[0] != features.dim:
        raise DimMismatch(f"base mean has dim {base_mean.shape[0]}, features have {features.dim}")
    return normalize_l2(features.with_data(features.data - base_mean))


def normalize_task(task: FewShotTask, method: str, base_mean=None) -> FewShotTask:
    if method == "none":
        return task
    if method == "l2":
        fn = normalize_l2
    elif method == "cl2":
        if base_mean is None:
            raise MissingBaseMean("CL2 normalization requires a base-class mean vector")

        def fn(f):
            return normalize_cl2(f, base_mean)
    else:
        raise ValueError(f"unknown normalization {method!r}")
    support = fn(task.support).features
    query = fn(task.query).features if task.query.rows else task.query
    return FewShotTask(support, query, task.classes)


def mean_prototypes(task: FewShotTask) -> PrototypeSet:
    labels = task.support.labels
    c = task.num_classes
    counts = np.bincount(labels, minlength=c).astype(np.float64)
    sums = np.zeros((c, task.support.dim))
    np.add.at(sums, labels, task.support.data)
    return PrototypeSet(sums / counts[:, None], kind="plain")


def shift_correction(task: FewShotTask) -> tuple:
    """Move the query cloud so its mean coincides with the support mean."""
    delta = task.support.data.mean(axis=0) - task.query.data.mean(axis=0)
    query = task.query.with_data(task.query.data + delta)
    return task.with_query(query), ShiftVector(delta)


def cosine_similarity(x: np.ndarray, m: np.ndarray):
    """Pairwise cosine similarity; pairs involving a zero vector get 0.

    Returns the similarity matrix and a boolean mask of zero-norm rows of ``x``.
    """
    xn = np.linalg.norm(x, axis=1)
    mn = np.linalg.norm(m, axis=1)
    denom = np.outer(xn, mn)
    dots = x @ m.T
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return cos, xn == 0


def distance_matrix(x: np.ndarray, m: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """``d(x_q, m_c)`` for every query row and prototype."""
    if x.shape[1] != m.shape[1]:
        raise DimMismatch(f"query dim {x.shape[1]} != prototype dim {m.shape[1]}")
    if metric == "cosine_distance":
        cos, _ = cosine_similarity(x, m)
        return 1.0 - cos
    # explicit differences: the Gram expansion loses exact zeros under sqrt
    diff = x[:, None, :] - m[None, :, :]
    sq = np.einsum("qcm,qcm->qc", diff, diff)
    if metric == "squared_euclidean":
        return sq
    if metric == "euclidean":
        return np.sqrt(sq)
    raise ValueError(f"unknown distance {metric!r}")


def nearest_prototype(query: np.ndarray, protos: PrototypeSet, metric: str = "euclidean"):
    return np.argmin(distance_matrix(query, protos.vectors, metric), axis=1)


def rectify_prototypes(task: FewShotTask, protos: PrototypeSet, metric: str = "euclidean"):
    """Re-estimate prototypes from supports plus queries predicted into each class.

    Each member ``x`` of class ``c`` contributes ``softmax_c'(cos(x, m_c'))[c] * x``
    and the sum is divided by the member count. Query membership comes from the
    nearest-prototype decision under ``metric``.
    """
    if protos.kind != "plain":
        raise ValueError("rectification expects plain prototypes")
    m = protos.vectors
    c = m.shape[0]
    s_x, s_y = task.support.data, task.support.labels
    if task.query.rows:
        q_x = task.query.data
        q_y = nearest_prototype(q_x, protos, metric)
        x = np.vstack([s_x, q_x])
        y = np.concatenate([s_y, q_y])
    else:
        x, y = s_x, s_y

    cos, zero = cosine_similarity(x, m)
    cos = cos - cos.max(axis=1, keepdims=True)
    w = np.exp(cos)
    w /= w.sum(axis=1, keepdims=True)
    own = w[np.arange(x.shape[0]), y]

    sums = np.zeros_like(m)
    np.add.at(sums, y, own[:, None] * x)
    counts = np.bincount(y, minlength=c).astype(np.float64)
    return PrototypeSet(
        sums / counts[:, None], kind="rectified", zero_norm_rows=tuple(np.flatnonzero(zero))
    )
