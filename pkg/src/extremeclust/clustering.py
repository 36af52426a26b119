"""k-clustering of a finite multiset on the unit sphere.

A multiset is stored by its support (distinct points, in canonical
lexicographic order) and integer multiplicities. Assignments are made per
occurrence, in the order given by :meth:`WeightedMultiset.occurrences`.
"""
from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateWarning, InstanceTooLargeError, InvalidInputError
from .geometry import L2, Dissimilarity, NormSpec, check_unit_points, norm

MERGE_DECIMALS = 12


@dataclass(frozen=True, eq=False)
class WeightedMultiset:
    points: np.ndarray
    counts: np.ndarray
    sphere_norm: NormSpec = L2

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        cnt = np.asarray(self.counts)
        if pts.shape[0] == 0 or cnt.shape != (pts.shape[0],):
            raise InvalidInputError("multiset needs a non-empty support and one count per point")
        if not np.all(cnt == np.round(cnt)) or np.any(cnt < 1):
            raise InvalidInputError("multiplicities must be positive integers")
        check_unit_points(pts, self.sphere_norm)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "counts", cnt.astype(np.int64))

    @classmethod
    def from_points(cls, points, counts=None, sphere_norm: NormSpec = L2) -> "WeightedMultiset":
        """Build a multiset, merging points that agree to 1e-12 and sorting the support."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            raise InvalidInputError("empty multiset")
        cnt = np.ones(len(pts), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
        if cnt.shape != (len(pts),):
            raise InvalidInputError("one count per point required")
        key = np.round(pts, MERGE_DECIMALS) + 0.0  # +0.0 folds -0.0 into 0.0
        uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=cnt, minlength=len(uniq)).astype(np.int64)
        return cls(pts[first], merged, sphere_norm)

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @property
    def support_size(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def occurrences(self) -> np.ndarray:
        return np.repeat(self.points, self.counts, axis=0)

    def __len__(self) -> int:
        return self.size


@dataclass
class ClusterConfig:
    restarts: int = 10
    max_iter: int = 200
    seed: int = 0
    tol: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        if self.restarts < 1 or self.max_iter < 1:
            raise InvalidInputError("restarts and max_iter must be >= 1")


@dataclass
class Clustering:
    centers: np.ndarray
    labels: np.ndarray
    sizes: np.ndarray
    objective: float
    degenerate: bool = False
    repaired: bool = False
    history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centers)


def _as_multiset(W) -> WeightedMultiset:
    if isinstance(W, WeightedMultiset):
        return W
    return WeightedMultiset.from_points(W)


def _assign_occurrences(X, centers, spec):
    dmat = spec.pairwise(X, centers)
    labels = dmat.argmin(axis=1)  # first minimum: lowest center index wins ties
    k = len(centers)
    sizes = np.bincount(labels, minlength=k)
    repaired = False
    if len(X) >= k:
        while np.any(sizes == 0):
            empty = int(np.flatnonzero(sizes == 0)[0])
            own = dmat[np.arange(len(X)), labels]
            movable = sizes[labels] >= 2
            j = int(np.argmax(np.where(movable, own, -np.inf)))
            sizes[labels[j]] -= 1
            labels[j] = empty
            sizes[empty] += 1
            repaired = True
    return labels, sizes, repaired


def assign(W, centers, spec: Dissimilarity):
    """Nearest-center assignment of every occurrence, with empty-cluster repair.

    Returns ``(labels, sizes)``. Ties go to the lowest center index. While some
    center receives nothing, the occurrence farthest from its own center
    (taken from a cluster that can spare one) is moved to the empty center.
    """
    W = _as_multiset(W)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(centers) == 0:
        raise InvalidInputError("need at least one center")
    labels, sizes, _ = _assign_occurrences(W.occurrences(), centers, spec)
    return labels, sizes


def objective(W, centers, spec: Dissimilarity) -> float:
    """Sum over occurrences of the dissimilarity to the nearest center."""
    W = _as_multiset(W)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(centers) == 0:
        raise InvalidInputError("need at least one center")
    return float(W.counts @ spec.pairwise(W.points, centers).min(axis=1))


def _cost(X, w, c, spec):
    return float(w @ spec.pairwise(X, c[None])[:, 0])


def _update(X, w, spec: Dissimilarity, current=None) -> np.ndarray:
    if spec.kind == "cos":
        s = w @ X
        r = np.linalg.norm(s)
        if r == 0:
            raise RuntimeError("zero mean direction on the nonnegative orthant")
        return s / r
    if spec.kind == "pc":
        M = (X * w[:, None]).T @ X
        _, vecs = np.linalg.eigh(M)
        v = vecs[:, -1]
        if v.sum() < 0:
            v = -v
        if np.any(v < -1e-8):
            v = np.clip(v, 0, None)
        else:
            v = np.where(v < 0, 0.0, v)
        return v / np.linalg.norm(v)
    if spec.center_fn is not None:
        c = np.asarray(spec.center_fn(X, w), dtype=float)
        return c / norm(c, spec.sphere_norm)
    # generic: best of the cluster's own points, its normalised mean and the
    # current center (keeps Lloyd monotone)
    mean = w @ X
    cand = [X, (mean / norm(mean, spec.sphere_norm))[None]]
    if current is not None:
        cand.append(np.asarray(current)[None])
    cand = np.concatenate(cand)
    costs = w @ spec.pairwise(X, cand)
    return cand[int(np.argmin(costs))]


def center_update(cluster, spec: Dissimilarity, weights=None) -> np.ndarray:
    """Center minimising the within-cluster sum of D.

    Cosine: normalised weighted mean. PC: leading eigenvector of the weighted
    second-moment matrix, oriented into the orthant (rounding noise above
    -1e-8 clamped to 0, larger negative parts projected away).
    """
    if isinstance(cluster, WeightedMultiset):
        X, w = cluster.points, cluster.counts.astype(float)
    else:
        X = np.atleast_2d(np.asarray(cluster, dtype=float))
        w = np.ones(len(X)) if weights is None else np.asarray(weights, dtype=float)
    if len(X) == 0 or w.sum() <= 0:
        raise InvalidInputError("empty cluster")
    return _update(X, w, spec)


def _seed(P, c, k, spec, rng):
    first = rng.choice(len(P), p=c / c.sum())
    chosen = [first]
    dist = spec.pairwise(P, P[first][None])[:, 0]
    for _ in range(1, k):
        wts = c * dist
        tot = wts.sum()
        if tot > 0:
            nxt = rng.choice(len(P), p=wts / tot)
        else:
            nxt = rng.integers(len(P))
        chosen.append(nxt)
        dist = np.minimum(dist, spec.pairwise(P, P[nxt][None])[:, 0])
    return P[chosen].copy()


def _lloyd(W: WeightedMultiset, X, init, spec, max_iter, tol):
    centers = init
    w1 = np.ones(len(X))
    prev = objective(W, centers, spec)
    history = [prev]
    for _ in range(max_iter):
        labels, sizes, _ = _assign_occurrences(X, centers, spec)
        new = centers.copy()
        for j in range(len(centers)):
            members = labels == j
            if members.any():
                new[j] = _update(X[members], w1[members], spec, centers[j])
        centers = new
        obj = objective(W, centers, spec)
        history.append(obj)
        if prev - obj < tol:
            break
        prev = obj
    return centers, history


def k_cluster(W, k: int, spec: Dissimilarity, config: Optional[ClusterConfig] = None) -> Clustering:
    """Lloyd-type k-clustering with distance-weighted seeding and restarts.

    Every restart draws its generator from ``SeedSequence(seed).spawn``, so the
    result does not depend on how restarts are scheduled. The run with the
    smallest objective wins (earliest restart on ties).
    """
    W = _as_multiset(W)
    cfg = config or ClusterConfig()
    if not 1 <= k <= W.size:
        raise InvalidInputError(f"need 1 <= k <= |W| = {W.size}, got k={k}")
    degenerate = k > W.support_size
    if degenerate:
        warnings.warn(f"k={k} exceeds the {W.support_size} distinct points; centers will repeat",
                      DegenerateWarning, stacklevel=2)
    X = W.occurrences()
    P, c = W.points, W.counts.astype(float)
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def run(ss):
        rng = np.random.default_rng(ss)
        return _lloyd(W, X, _seed(P, c, k, spec, rng), spec, cfg.max_iter, cfg.tol)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            runs = list(pool.map(run, seqs))
    else:
        runs = [run(ss) for ss in seqs]
    best = min(range(len(runs)), key=lambda i: (runs[i][1][-1], i))
    centers, history = runs[best]
    labels, sizes, repaired = _assign_occurrences(X, centers, spec)
    return Clustering(centers, labels, sizes, objective(W, centers, spec),
                      degenerate=degenerate, repaired=repaired, history=history)


# ---------------------------------------------------------------------------
# exhaustive oracle

BRUTE_MAX_SUPPORT = 12
BRUTE_MAX_K = 4


def _labelings(s: int, k: int, need_all: bool, chunk: int = 200_000):
    """All labelings of s items into k groups with item 0 in group 0."""
    total = k ** (s - 1)
    powers = k ** np.arange(s - 2, -1, -1) if s > 1 else np.zeros(0, dtype=np.int64)
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % k if s > 1 else np.zeros((len(idx), 0), np.int64)
        lab = np.concatenate([np.zeros((len(idx), 1), np.int64), digits], axis=1)
        if need_all:
            present = np.stack([(lab == j).any(axis=1) for j in range(k)], axis=1).all(axis=1)
            lab = lab[present]
        if len(lab):
            yield lab


def _partition_costs(P, c, lab, k, spec):
    onehot = (lab[:, :, None] == np.arange(k)[None, None, :]).astype(float)  # (L, s, k)
    mass = np.einsum("lsk,s->lk", onehot, c)
    if spec.kind == "cos":
        sums = np.einsum("lsk,s,sd->lkd", onehot, c, P)
        return (mass - np.linalg.norm(sums, axis=2)).sum(axis=1)
    if spec.kind == "pc":
        outer = P[:, :, None] * P[:, None, :]
        mom = np.einsum("lsk,s,sde->lkde", onehot, c, outer)
        return (mass - np.linalg.eigvalsh(mom)[..., -1]).sum(axis=1)
    out = np.empty(len(lab))
    for i, row in enumerate(lab):
        tot = 0.0
        for j in range(k):
            m = row == j
            if m.any():
                ctr = _update(P[m], c[m], spec)
                tot += _cost(P[m], c[m], ctr, spec)
        out[i] = tot
    return out


def brute_force_k_cluster(W, k: int, spec: Dissimilarity) -> Clustering:
    """Global k-clustering optimum by enumerating every partition of the support.

    Each partition is scored with its optimal centers (exact for cosine and
    pc); the best partition's centers are then reassigned to nearest. Guarded
    to at most 12 support points and k <= 4.
    """
    W = _as_multiset(W)
    s = W.support_size
    if s > BRUTE_MAX_SUPPORT or k > BRUTE_MAX_K:
        raise InstanceTooLargeError(f"brute force limited to support <= {BRUTE_MAX_SUPPORT}, "
                                    f"k <= {BRUTE_MAX_K} (got {s}, {k})")
    if not 1 <= k <= W.size:
        raise InvalidInputError(f"need 1 <= k <= |W| = {W.size}")
    P, c = W.points, W.counts.astype(float)
    need_all = s >= k
    best_cost, best_lab = np.inf, None
    for lab in _labelings(s, k, need_all):
        costs = _partition_costs(P, c, lab, k, spec)
        i = int(np.argmin(costs))
        if costs[i] < best_cost - 1e-15:
            best_cost, best_lab = float(costs[i]), lab[i]
    centers = np.empty((k, W.dim))
    for j in range(k):
        m = best_lab == j
        centers[j] = _update(P[m], c[m], spec) if m.any() else P[0]
    labels, sizes, repaired = _assign_occurrences(W.occurrences(), centers, spec)
    return Clustering(centers, labels, sizes, objective(W, centers, spec),
                      degenerate=not need_all, repaired=repaired)
