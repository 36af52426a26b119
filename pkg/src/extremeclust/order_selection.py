"""Silhouette scores, the small-cluster penalty and order selection."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .clustering import ClusterConfig, Clustering, WeightedMultiset, k_cluster
from .errors import DegenerateWarning, InvalidInputError
from .geometry import DEFAULT_RESOLUTION, Dissimilarity, separation_radius

DEFAULT_T_GRID = (0.0, 0.02, 0.05, 0.1, 0.2, 0.3)


def _ms(W) -> WeightedMultiset:
    return W if isinstance(W, WeightedMultiset) else WeightedMultiset.from_points(W)


def silhouette_parts(W, centers, spec: Dissimilarity):
    """Nearest (a) and second-nearest (b) center dissimilarity per support point.

    With a single center b is 1.
    """
    W = _ms(W)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    dm = spec.pairwise(W.points, centers)
    if len(centers) == 1:
        return dm[:, 0], np.ones(len(dm))
    part = np.partition(dm, 1, axis=1)
    return part[:, 0], part[:, 1]


def _ratios(a, b):
    # coincident centers give b = 0; such points count as worst-case (ratio 1)
    out = np.ones_like(a)
    ok = b > 0
    out[ok] = a[ok] / b[ok]
    return out


def asw(W, clustering: Clustering, spec: Dissimilarity) -> float:
    """Simplified average silhouette width 1 - mean(a/b) over occurrences."""
    W = _ms(W)
    a, b = silhouette_parts(W, clustering.centers, spec)
    return float(1.0 - W.counts @ _ratios(a, b) / W.size)


def min_center_dissimilarity(centers, spec: Dissimilarity) -> float:
    """Smallest D between two distinct center indices (1 for a single center)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(centers) < 2:
        return 1.0
    dm = spec.pairwise(centers, centers)
    iu = np.triu_indices(len(centers), 1)
    return float(dm[iu].min())


def min_cluster_fraction(clustering: Clustering, total: int) -> float:
    return float(np.min(clustering.sizes) / total)


def penalty(W, clustering: Clustering, spec: Dissimilarity, t: float) -> float:
    """P_t = 1 - (min size / (|W|/k))^t * (min center dissimilarity)^t."""
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    if t == 0:
        return 0.0
    W = _ms(W)
    k = clustering.k
    size_term = np.min(clustering.sizes) / (W.size / k)
    sep_term = min_center_dissimilarity(clustering.centers, spec)
    return float(1.0 - size_term ** t * sep_term ** t)


@dataclass
class SilhouetteBreakdown:
    a_values: np.ndarray
    b_values: np.ndarray
    asw: float
    penalty: float
    s_t: float
    t: float


def penalized_asw(W, clustering: Clustering, spec: Dissimilarity, t: float) -> SilhouetteBreakdown:
    """S_t = ASW - P_t with the per-point silhouette parts."""
    W = _ms(W)
    a, b = silhouette_parts(W, clustering.centers, spec)
    score = float(1.0 - W.counts @ _ratios(a, b) / W.size)
    pen = penalty(W, clustering, spec, t)
    return SilhouetteBreakdown(a, b, score, pen, score - pen, float(t))


@dataclass
class OrderSelectionReport:
    m_range: list
    t_grid: list
    scores: np.ndarray            # (len(m_range), len(t_grid))
    asw: np.ndarray               # (len(m_range),)
    penalties: np.ndarray         # same shape as scores
    selected_order_per_t: list
    min_cluster_frac: np.ndarray  # (len(m_range),); constant across t
    min_center_dissim: np.ndarray
    degenerate: list = field(default_factory=list)
    clusterings: list = field(default_factory=list, repr=False)

    def selected(self, t: float) -> int:
        return self.selected_order_per_t[self.t_grid.index(t)]

    def rows(self):
        """Tidy records, one per (m, t)."""
        out = []
        for i, m in enumerate(self.m_range):
            for j, t in enumerate(self.t_grid):
                out.append({"m": m, "t": t, "asw": float(self.asw[i]),
                            "penalty": float(self.penalties[i, j]), "s_t": float(self.scores[i, j]),
                            "min_cluster_frac": float(self.min_cluster_frac[i]),
                            "min_center_dissim": float(self.min_center_dissim[i])})
        return out

    def to_dict(self) -> dict:
        return {"m_range": list(self.m_range), "t_grid": list(self.t_grid),
                "scores": self.scores.tolist(), "asw": self.asw.tolist(),
                "penalties": self.penalties.tolist(),
                "selected_order_per_t": {str(t): m for t, m in zip(self.t_grid, self.selected_order_per_t)},
                "min_cluster_frac": self.min_cluster_frac.tolist(),
                "min_center_dissim": self.min_center_dissim.tolist(),
                "degenerate_orders": [m for m, d in zip(self.m_range, self.degenerate) if d]}


def select_order(W, spec: Dissimilarity, m_range: Sequence[int],
                 t_grid: Sequence[float] = DEFAULT_T_GRID,
                 config: Optional[ClusterConfig] = None, workers: int = 1) -> OrderSelectionReport:
    """Fit one clustering per candidate order and score it for every t.

    The selected order for each t is the argmax of S_t over m, smallest m on ties.
    """
    W = _ms(W)
    m_range = [int(m) for m in m_range]
    t_grid = [float(t) for t in t_grid]
    if not m_range or min(m_range) < 1:
        raise InvalidInputError("m_range must contain positive orders")
    if max(m_range) > W.size:
        raise InvalidInputError(f"order {max(m_range)} exceeds |W| = {W.size}")
    if any(t < 0 for t in t_grid) or not t_grid:
        raise InvalidInputError("t_grid must be a non-empty list of nonnegative values")

    def fit(m):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWarning)
            return k_cluster(W, m, spec, config)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            fits = list(pool.map(fit, m_range))
    else:
        fits = [fit(m) for m in m_range]

    scores = np.empty((len(m_range), len(t_grid)))
    pens = np.empty_like(scores)
    asws = np.empty(len(m_range))
    for i, cl in enumerate(fits):
        asws[i] = asw(W, cl, spec)
        for j, t in enumerate(t_grid):
            pens[i, j] = penalty(W, cl, spec, t)
            scores[i, j] = asws[i] - pens[i, j]
    # argmax returns the first maximum; order candidates by m so that is the smallest m
    order = np.argsort(m_range, kind="stable")
    selected = [m_range[order[int(np.argmax(scores[order, j]))]] for j in range(len(t_grid))]
    return OrderSelectionReport(
        m_range, t_grid, scores, asws, pens, selected,
        np.array([min_cluster_fraction(cl, W.size) for cl in fits]),
        np.array([min_center_dissimilarity(cl.centers, spec) for cl in fits]),
        [cl.degenerate for cl in fits], fits)


def t_upper_bound(r_A: float, p_min: float, k: int) -> float:
    """t0 = ln(1 - r_A p_min) / ln(r_A k p_min): the largest useful penalty exponent."""
    if not 0 < r_A <= 1 or not 0 < p_min <= 1 or k < 1:
        raise InvalidInputError("need r_A in (0, 1], p_min in (0, 1], k >= 1")
    if r_A * k * p_min >= 1 or r_A * p_min >= 1:
        raise InvalidInputError(f"r_A*k*p_min = {r_A * k * p_min:.6g} must be < 1")
    return math.log1p(-r_A * p_min) / math.log(r_A * k * p_min)


def delta_t(r_A: float, p_min: float, k: int, t: float) -> float:
    """Score gap (r_A k p_min)^t - 1 + r_A p_min; positive exactly for t < t0."""
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    return (r_A * k * p_min) ** t - 1.0 + r_A * p_min


@dataclass(frozen=True)
class TheoryConstants:
    """Population constants driving t0 and the score gap, with their origin."""
    r_A: float
    p_min: float
    k: int
    source: str  # "truth" or "estimate"

    @property
    def t0(self) -> float:
        return t_upper_bound(self.r_A, self.p_min, self.k)

    def delta(self, t: float) -> float:
        return delta_t(self.r_A, self.p_min, self.k, t)


def theory_constants(atoms, probs, spec: Dissimilarity, source: str = "truth",
                     resolution: int = DEFAULT_RESOLUTION) -> TheoryConstants:
    if source not in ("truth", "estimate"):
        raise InvalidInputError("source must be 'truth' or 'estimate'")
    probs = np.asarray(probs, dtype=float)
    return TheoryConstants(separation_radius(atoms, spec, resolution), float(probs.min()),
                           len(probs), source)
