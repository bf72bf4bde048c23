"""One-class baselines fit on legitimate samples only: LOF, iForest, OC-SVM.

All three consume the flattened CSI feature vectors under the Euclidean
metric. LOF is the density-ratio construction of Breunig et al., iForest
the random-partition ensemble of Liu et al., and the one-class SVM the
nu-parameterized smallest-region formulation of Scholkopf et al., solved
in the dual by an SMO-style maximal-violating-pair loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RngStream

LOF_K = 20
LOF_THRESHOLD = 1.5
IFOREST_TREES = 100
IFOREST_SUBSAMPLE = 256
IFOREST_THRESHOLD = 0.5
OCSVM_NU = 0.05
OCSVM_TOL = 1e-4
OCSVM_MAX_ITER = 400_000

_EULER_GAMMA = 0.5772156649015329


class ConvergenceError(RuntimeError):
    """SMO failed to reach the KKT tolerance within the iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


# ---------------------------------------------------------------------------
# Local outlier factor

@dataclass
class LofModel:
    k: int
    train_points: np.ndarray
    threshold: float
    kdist: np.ndarray  # k-distance of each train point (self excluded)
    lrd: np.ndarray  # local reachability density of each train point


def lof_fit(train, k: int = LOF_K, threshold: float = LOF_THRESHOLD) -> LofModel:
    x = _as_points(train)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < train size, got k={k}, n={n}")
    d = _pairwise(x, x)
    np.fill_diagonal(d, np.inf)
    kdist = np.partition(d, k - 1, axis=1)[:, k - 1]
    neigh = d <= kdist[:, np.newaxis]
    reach = np.maximum(kdist[np.newaxis, :], d)
    lrd = neigh.sum(axis=1) / np.where(neigh, reach, 0.0).sum(axis=1)
    return LofModel(k=k, train_points=x, threshold=threshold, kdist=kdist, lrd=lrd)


def lof_scores(model: LofModel, points) -> np.ndarray:
    """LOF of query points against the training set (queries are not neighbors)."""
    q = _as_points(points)
    d = _pairwise(q, model.train_points)
    kdist_q = np.partition(d, model.k - 1, axis=1)[:, model.k - 1]
    neigh = d <= kdist_q[:, np.newaxis]
    reach = np.maximum(model.kdist[np.newaxis, :], d)
    lrd_q = neigh.sum(axis=1) / np.where(neigh, reach, 0.0).sum(axis=1)
    mean_neighbor_lrd = np.where(neigh, model.lrd[np.newaxis, :], 0.0).sum(axis=1) / neigh.sum(axis=1)
    return mean_neighbor_lrd / lrd_q


def lof_train_scores(model: LofModel) -> np.ndarray:
    """LOF of the training points themselves (self excluded from neighborhoods)."""
    d = _pairwise(model.train_points, model.train_points)
    np.fill_diagonal(d, np.inf)
    neigh = d <= model.kdist[:, np.newaxis]
    mean_neighbor_lrd = np.where(neigh, model.lrd[np.newaxis, :], 0.0).sum(axis=1) / neigh.sum(axis=1)
    return mean_neighbor_lrd / model.lrd


def lof_score(model: LofModel, x) -> float:
    return float(lof_scores(model, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def lof_decide(model: LofModel, x) -> bool:
    """True iff inlier: score within the threshold."""
    return lof_score(model, x) <= model.threshold


# ---------------------------------------------------------------------------
# Isolation forest

@dataclass
class IsoTree:
    feature: list[int]  # -1 marks a leaf
    split: list[float]
    left: list[int]
    right: list[int]
    size: list[int]


@dataclass
class IForestModel:
    n_trees: int
    subsample: int
    threshold: float
    height_limit: int
    trees: list[IsoTree] = field(default_factory=list)


def iforest_fit(
    train,
    n_trees: int = IFOREST_TREES,
    subsample: int = IFOREST_SUBSAMPLE,
    rng: RngStream | None = None,
    threshold: float = IFOREST_THRESHOLD,
) -> IForestModel:
    x = _as_points(train)
    n = x.shape[0]
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    if not 2 <= subsample <= n:
        raise ValueError(f"subsample must be in [2, train size], got {subsample} (n={n})")
    if rng is None:
        raise ValueError("iforest_fit requires an RngStream")
    height_limit = math.ceil(math.log2(subsample))
    model = IForestModel(
        n_trees=n_trees, subsample=subsample, threshold=threshold, height_limit=height_limit
    )
    for t in range(n_trees):
        g = rng.substream("iforest-tree", t).generator()
        idx = g.choice(n, size=subsample, replace=False)
        tree = IsoTree([], [], [], [], [])
        _grow(tree, x, idx, 0, height_limit, g)
        model.trees.append(tree)
    return model


def _grow(tree: IsoTree, x, idx, depth, limit, g) -> int:
    node = len(tree.feature)
    tree.feature.append(-1)
    tree.split.append(0.0)
    tree.left.append(-1)
    tree.right.append(-1)
    tree.size.append(len(idx))
    if depth >= limit or len(idx) <= 1:
        return node
    lo = x[idx].min(axis=0)
    hi = x[idx].max(axis=0)
    usable = np.nonzero(hi > lo)[0]
    if usable.size == 0:
        return node
    f = int(usable[g.integers(usable.size)])
    s = float(g.uniform(lo[f], hi[f]))
    mask = x[idx, f] < s
    tree.feature[node] = f
    tree.split[node] = s
    tree.left[node] = _grow(tree, x, idx[mask], depth + 1, limit, g)
    tree.right[node] = _grow(tree, x, idx[~mask], depth + 1, limit, g)
    return node


def _avg_path(n: int) -> float:
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + _EULER_GAMMA) - 2.0 * (n - 1) / n


def _tree_paths(tree: IsoTree, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[0])
    stack = [(0, np.arange(x.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if rows.size == 0:
            continue
        f = tree.feature[node]
        if f < 0:
            out[rows] = depth + _avg_path(tree.size[node])
            continue
        goes_left = x[rows, f] < tree.split[node]
        stack.append((tree.left[node], rows[goes_left], depth + 1))
        stack.append((tree.right[node], rows[~goes_left], depth + 1))
    return out


def iforest_scores(model: IForestModel, points) -> np.ndarray:
    """Anomaly score 2^(-E[path]/c(subsample)), in (0, 1)."""
    x = _as_points(points)
    paths = np.zeros(x.shape[0])
    for tree in model.trees:
        paths += _tree_paths(tree, x)
    mean_path = paths / len(model.trees)
    return np.exp2(-mean_path / _avg_path(model.subsample))


def iforest_score(model: IForestModel, x) -> float:
    return float(iforest_scores(model, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def iforest_decide(model: IForestModel, x) -> bool:
    """True iff inlier: anomaly score within the threshold."""
    return iforest_score(model, x) <= model.threshold


# ---------------------------------------------------------------------------
# One-class SVM (nu-form dual, RBF kernel, SMO solver)

@dataclass
class OcsvmModel:
    nu: float
    gamma: float
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    kkt_residual: float


def default_gamma(train) -> float:
    """1 / (n_features * feature variance), the usual RBF scale heuristic."""
    x = _as_points(train)
    var = float(x.var())
    if var <= 0:
        raise ValueError("training features have zero variance")
    return 1.0 / (x.shape[1] * var)


def ocsvm_fit(
    train,
    nu: float = OCSVM_NU,
    gamma: float | None = None,
    tol: float = OCSVM_TOL,
    max_iter: int = OCSVM_MAX_ITER,
) -> OcsvmModel:
    """Solve min 1/2 a'Qa s.t. 0 <= a_i <= 1/(nu*n), sum a = 1, Q_ij = K(x_i, x_j).

    SMO on the maximal violating pair; stops when the KKT violation drops
    below `tol`. Raises ConvergenceError (with the residual) at the
    iteration cap.
    """
    x = _as_points(train)
    n = x.shape[0]
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must be in (0, 1], got {nu}")
    if gamma is None:
        gamma = default_gamma(x)
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    cap = 1.0 / (nu * n)
    q = _rbf(x, x, gamma)
    alpha = np.full(n, 1.0 / n)
    grad = q @ alpha

    for _ in range(max_iter):
        up = alpha < cap - 1e-15
        low = alpha > 1e-15
        i = int(np.argmax(np.where(up, -grad, -np.inf)))
        j = int(np.argmin(np.where(low, -grad, np.inf)))
        violation = (-grad[i]) - (-grad[j])
        if violation <= tol:
            break
        a = q[i, i] + q[j, j] - 2.0 * q[i, j]
        if a <= 0:
            a = 1e-12
        step = (grad[j] - grad[i]) / a
        step = min(step, cap - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        grad += step * (q[:, i] - q[:, j])
    else:
        raise ConvergenceError(
            f"one-class SVM did not converge within {max_iter} iterations "
            f"(KKT violation {violation:.3e} > {tol:.0e})",
            residual=float(violation),
        )

    free = (alpha > 1e-8 * cap) & (alpha < cap * (1.0 - 1e-8))
    if np.any(free):
        rho = float(np.mean(grad[free]))
    else:
        upper = grad[alpha >= cap * (1.0 - 1e-8)]
        lower = grad[alpha <= 1e-8 * cap]
        hi = upper.max() if upper.size else -np.inf
        lo = lower.min() if lower.size else np.inf
        rho = float((hi + lo) / 2.0)

    residual = _kkt_residual(alpha, grad, rho, cap)
    sv = alpha > 1e-12
    return OcsvmModel(
        nu=nu, gamma=gamma, support_vectors=x[sv], alphas=alpha[sv],
        rho=rho, kkt_residual=residual,
    )


def _kkt_residual(alpha, grad, rho, cap) -> float:
    free = (alpha > 1e-8 * cap) & (alpha < cap * (1.0 - 1e-8))
    at_zero = alpha <= 1e-8 * cap
    at_cap = alpha >= cap * (1.0 - 1e-8)
    res = 0.0
    if np.any(free):
        res = max(res, float(np.max(np.abs(grad[free] - rho))))
    if np.any(at_zero):
        res = max(res, float(np.max(rho - grad[at_zero])))
    if np.any(at_cap):
        res = max(res, float(np.max(grad[at_cap] - rho)))
    return max(res, 0.0)


def ocsvm_decision_values(model: OcsvmModel, points) -> np.ndarray:
    """f(x) = sum_i alpha_i K(x_i, x) - rho; >= 0 inside the region."""
    x = _as_points(points)
    k = _rbf(x, model.support_vectors, model.gamma)
    return k @ model.alphas - model.rho


def ocsvm_decide(model: OcsvmModel, x) -> int:
    """+1 inside the learned region, -1 outside."""
    val = ocsvm_decision_values(model, np.atleast_2d(np.asarray(x, dtype=float)))[0]
    return 1 if val >= 0 else -1


# ---------------------------------------------------------------------------
# Serialization

def save_model(model, path) -> None:
    if isinstance(model, LofModel):
        doc = {
            "algorithm": "lof",
            "hyperparameters": {"k": model.k, "threshold": model.threshold},
            "payload": {
                "train_points": model.train_points.tolist(),
                "kdist": model.kdist.tolist(),
                "lrd": model.lrd.tolist(),
            },
        }
    elif isinstance(model, IForestModel):
        doc = {
            "algorithm": "iforest",
            "hyperparameters": {
                "n_trees": model.n_trees,
                "subsample": model.subsample,
                "threshold": model.threshold,
            },
            "payload": {
                "height_limit": model.height_limit,
                "trees": [
                    {"feature": t.feature, "split": t.split, "left": t.left,
                     "right": t.right, "size": t.size}
                    for t in model.trees
                ],
            },
        }
    elif isinstance(model, OcsvmModel):
        doc = {
            "algorithm": "ocsvm",
            "hyperparameters": {"nu": model.nu, "gamma": model.gamma},
            "payload": {
                "support_vectors": model.support_vectors.tolist(),
                "alphas": model.alphas.tolist(),
                "rho": model.rho,
                "kkt_residual": model.kkt_residual,
            },
        }
    else:
        raise TypeError(f"not a detector model: {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model(path):
    doc = json.loads(Path(path).read_text())
    algo = doc.get("algorithm")
    hp = doc["hyperparameters"]
    payload = doc["payload"]
    if algo == "lof":
        return LofModel(
            k=int(hp["k"]), threshold=float(hp["threshold"]),
            train_points=np.array(payload["train_points"], dtype=float),
            kdist=np.array(payload["kdist"], dtype=float),
            lrd=np.array(payload["lrd"], dtype=float),
        )
    if algo == "iforest":
        trees = [
            IsoTree(
                feature=[int(v) for v in t["feature"]],
                split=[float(v) for v in t["split"]],
                left=[int(v) for v in t["left"]],
                right=[int(v) for v in t["right"]],
                size=[int(v) for v in t["size"]],
            )
            for t in payload["trees"]
        ]
        return IForestModel(
            n_trees=int(hp["n_trees"]), subsample=int(hp["subsample"]),
            threshold=float(hp["threshold"]), height_limit=int(payload["height_limit"]),
            trees=trees,
        )
    if algo == "ocsvm":
        return OcsvmModel(
            nu=float(hp["nu"]), gamma=float(hp["gamma"]),
            support_vectors=np.array(payload["support_vectors"], dtype=float),
            alphas=np.array(payload["alphas"], dtype=float),
            rho=float(payload["rho"]), kkt_residual=float(payload["kkt_residual"]),
        )
    raise ValueError(f"unknown detector algorithm {algo!r}")


# ---------------------------------------------------------------------------
# Shared helpers

def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"expected a non-empty (n, d) array, got shape {x.shape}")
    return x


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(d2, 0.0))


def _rbf(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))
