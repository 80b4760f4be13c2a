"""Independent reference implementations used as test oracles.

Nothing here calls into the package's numerical code paths; everything is
plain loops or dense numpy.
"""

import itertools
import math

import numpy as np

from laplacianshot.core import FeatureMatrix, FewShotTask
from laplacianshot.graph import AffinityGraph


def random_simplex(rng, n, c, concentration=1.0):
    return rng.dirichlet(np.full(c, concentration), size=n)


def gaussian_kernel_graph(x, bandwidth=None):
    """Dense Gaussian kernel W (PSD, symmetric, unit diagonal)."""
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    if bandwidth is None:
        bandwidth = math.sqrt(np.median(d2[d2 > 0]) / 2) if np.any(d2 > 0) else 1.0
    w = np.exp(-d2 / (2 * bandwidth**2))
    w = (w + w.T) / 2
    return AffinityGraph.from_dense(w, symmetric=True), w


def brute_knn(x, k):
    """O(N^2) scan: for each row sort (distance, index) pairs with plain Python."""
    n = len(x)
    out = []
    for q in range(n):
        cand = []
        for p in range(n):
            if p == q:
                continue
            d = sum((float(a) - float(b)) ** 2 for a, b in zip(x[q], x[p]))
            cand.append((d, p))
        cand.sort()
        out.append(sorted(p for _, p in cand[:k]))
    return out


def naive_distances(x, m, metric):
    out = np.zeros((len(x), len(m)))
    for q in range(len(x)):
        for c in range(len(m)):
            if metric == "cosine_distance":
                nx = math.sqrt(sum(v * v for v in x[q]))
                nm = math.sqrt(sum(v * v for v in m[c]))
                dot = sum(a * b for a, b in zip(x[q], m[c]))
                out[q, c] = 1.0 - (dot / (nx * nm) if nx > 0 and nm > 0 else 0.0)
            else:
                sq = sum((a - b) ** 2 for a, b in zip(x[q], m[c]))
                out[q, c] = math.sqrt(sq) if metric == "euclidean" else sq
    return out


def naive_softmax(v):
    mx = max(v)
    e = [math.exp(t - mx) for t in v]
    s = sum(e)
    return [t / s for t in e]


def naive_objective(y, a, w, lam):
    """Entropy + unary + (lam/2) * relaxed pairwise term with triple loops."""
    n, c = y.shape
    total = 0.0
    for q in range(n):
        for j in range(c):
            if y[q, j] > 0:
                total += y[q, j] * math.log(y[q, j])
            total += y[q, j] * a[q, j]
    pair = 0.0
    for q in range(n):
        for p in range(n):
            if w[q, p]:
                pair -= w[q, p] * sum(y[q, j] * y[p, j] for j in range(c))
    return total + 0.5 * lam * pair


def dense_reference_solve(a, w, lam, max_iterations=1000, tol=1e-6):
    """Same fixed-point iteration, dense W, written without the package."""
    def obj(y):
        ent = np.sum(y * np.log(np.maximum(y, 1e-300)))
        return ent + np.sum(y * a) - 0.5 * lam * np.sum(y * (w @ y))

    def sm(z):
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    y = sm(-a)
    prev = obj(y)
    for i in range(1, max_iterations + 1):
        y = sm(-a + lam * (w @ y))
        cur = obj(y)
        if abs(cur - prev) <= tol * (abs(prev) + 1):
            break
        prev = cur
    return y, i


def discrete_energy(labels, a, w, lam):
    """Unary + (lam/2) * 1/2 sum w ||y_q - y_p||^2 for hard labels."""
    n = len(labels)
    unary = sum(a[q, labels[q]] for q in range(n))
    lap = 0.0
    for q in range(n):
        for p in range(n):
            if labels[q] != labels[p]:
                lap += 0.5 * w[q, p] * 2.0
    return unary + 0.5 * lam * lap


def brute_force_labels(a, w, lam):
    n, c = a.shape
    best, best_e = None, math.inf
    for labels in itertools.product(range(c), repeat=n):
        e = discrete_energy(labels, a, w, lam)
        if e < best_e - 1e-12:
            best, best_e = labels, e
    return np.array(best), best_e


def make_task(rng, c=3, shots=2, queries=5, dim=4, spread=1.0, scale=5.0):
    centers = rng.normal(scale=scale, size=(c, dim))
    s = np.vstack([centers[k] + spread * rng.normal(size=(shots, dim)) for k in range(c)])
    q = np.vstack([centers[k] + spread * rng.normal(size=(queries, dim)) for k in range(c)])
    return FewShotTask(
        FeatureMatrix(s, np.repeat(np.arange(c), shots)),
        FeatureMatrix(q, np.repeat(np.arange(c), queries)),
    )
