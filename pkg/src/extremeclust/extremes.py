"""Marginal standardization, extremal subsamples and spectral estimation."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import ClusterConfig, WeightedMultiset, k_cluster
from .errors import DegenerateResultError, DegenerateWarning, InvalidInputError
from .geometry import L2, Dissimilarity, NormSpec, check_unit_points, norm, project_to_sphere


@dataclass(frozen=True, eq=False)
class DataMatrix:
    values: np.ndarray
    column_names: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
            raise InvalidInputError(f"data must be n x d with n >= 1, d >= 2; got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("data contains non-finite entries")
        if np.any(v < 0):
            i, j = map(int, np.argwhere(v < 0)[0])
            raise InvalidInputError(f"negative value at row {i}, column {j}")
        object.__setattr__(self, "values", v)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != v.shape[1]:
                raise InvalidInputError("one column name per column required")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _as_data(data) -> DataMatrix:
    return data if isinstance(data, DataMatrix) else DataMatrix(data)


def standardize_margins(data, alpha: float) -> DataMatrix:
    """Rank-transform each column to approximately standard alpha-Frechet margins.

    Uses the strict empirical CDF F(x) = #{x_i < x}/n, so F < 1 everywhere, and
    maps x to (-log F(x))^(-1/alpha). Column minima (F = 0) map to 0.
    """
    data = _as_data(data)
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    if data.n < 2:
        raise InvalidInputError("need at least two rows to standardize")
    X = data.values
    n = data.n
    out = np.zeros_like(X)
    for j in range(data.d):
        col = X[:, j]
        if np.all(col == col[0]):
            warnings.warn(f"column {j} is constant; standardized to zeros", DegenerateWarning, stacklevel=2)
            continue
        below = np.searchsorted(np.sort(col), col, side="left")
        F = below / n
        pos = below > 0
        out[pos, j] = (-np.log(F[pos])) ** (-1.0 / alpha)
    return DataMatrix(out, data.column_names)


@dataclass(frozen=True)
class SubsampleConfig:
    """How to pick the extremal subsample.

    Exactly one of ``ell`` (threshold (n/ell)^(1/alpha) on the norm_r radius)
    or ``fraction`` (keep the ceil(q n) largest radii) must be given.
    """
    alpha: float = 1.0
    norm_r: NormSpec = L2
    norm_s: NormSpec = L2
    fraction: Optional[float] = 0.1
    ell: Optional[float] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInputError("alpha must be positive")
        if (self.fraction is None) == (self.ell is None):
            raise InvalidInputError("give exactly one of fraction or ell")
        if self.fraction is not None and not 0 < self.fraction < 1:
            raise InvalidInputError("fraction must lie in (0, 1)")
        if self.ell is not None and not self.ell > 0:
            raise InvalidInputError("ell must be positive")

    @classmethod
    def parse(cls, text: str, **kw) -> "SubsampleConfig":
        """Parse ``frac:<q>`` or ``ell:<n>``."""
        kind, _, val = text.partition(":")
        try:
            x = float(val)
        except ValueError:
            raise InvalidInputError(f"bad subsample selection {text!r}") from None
        if kind == "frac":
            return cls(fraction=x, ell=None, **kw)
        if kind == "ell":
            return cls(fraction=None, ell=x, **kw)
        raise InvalidInputError(f"bad subsample selection {text!r}; use frac:<q> or ell:<n>")


def extremal_indices(data, config: SubsampleConfig) -> np.ndarray:
    """Row indices of the extremal subsample, in increasing order."""
    data = _as_data(data)
    X = data.values
    n = data.n
    radii = norm(X, config.norm_r)
    if config.ell is not None:
        if config.ell >= n:
            raise InvalidInputError("ell must be smaller than n")
        keep = np.flatnonzero(radii >= (n / config.ell) ** (1.0 / config.alpha))
    else:
        m = math.ceil(config.fraction * n)
        order = np.lexsort((np.arange(n), -radii))  # largest radius first, then row index
        keep = np.sort(order[:m])
    zero = radii[keep] == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero rows dropped from the subsample", DegenerateWarning, stacklevel=2)
        keep = keep[~zero]
    if len(keep) == 0:
        raise DegenerateResultError("extremal subsample is empty")
    return keep


def extract_extremal_subsample(data, config: SubsampleConfig) -> WeightedMultiset:
    """Angular parts (on the norm_s sphere) of the rows with the largest norm_r radii."""
    data = _as_data(data)
    keep = extremal_indices(data, config)
    ang = project_to_sphere(data.values[keep], config.norm_s)
    return WeightedMultiset.from_points(ang, sphere_norm=config.norm_s)


def empirical_spectral_measure(W, region: Callable[[np.ndarray], np.ndarray]) -> float:
    """Fraction of occurrences of W falling in ``region``.

    ``region`` maps an (m, d) array of points to a boolean mask. An empty
    multiset carries the zero measure.
    """
    if W is None:
        return 0.0
    if not isinstance(W, WeightedMultiset):
        W = WeightedMultiset.from_points(W)
    inside = np.asarray(region(W.points), dtype=bool)
    return float(W.counts[inside].sum() / W.size)


def ball_region(center, radius: float, spec: Dissimilarity):
    """Region predicate for the open D-ball {w : D(center, w) < radius}."""
    c = np.asarray(center, dtype=float)[None]
    return lambda P: spec.pairwise(P, c)[:, 0] < radius


@dataclass(frozen=True, eq=False)
class SpectralEstimate:
    atoms: np.ndarray
    probs: np.ndarray
    sphere_norm: NormSpec = L2

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(a),):
            raise InvalidInputError("one probability per atom required")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise InvalidInputError("probabilities must be nonnegative and sum to 1")
        check_unit_points(a, self.sphere_norm)
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return len(self.probs)


def estimate_spectral(W, k: int, spec: Dissimilarity,
                      config: Optional[ClusterConfig] = None) -> SpectralEstimate:
    """Discrete spectral estimate: cluster centers with cluster-size proportions."""
    if not isinstance(W, WeightedMultiset):
        W = WeightedMultiset.from_points(W)
    cl = k_cluster(W, k, spec, config)
    return SpectralEstimate(cl.centers, cl.sizes / W.size, W.sphere_norm)


EXHAUSTIVE_MATCH_MAX_K = 8


def match_atoms(est: SpectralEstimate, truth: SpectralEstimate, spec: Dissimilarity,
                method: str = "auto"):
    """Bijection pairing estimated atoms with true atoms, minimising the summed D.

    Returns ``(perm, max_atom_error, max_prob_error)`` where ``est.atoms[perm[i]]``
    is matched to ``truth.atoms[i]``. ``method`` is "assignment" (Hungarian),
    "exhaustive" (all k! bijections, k <= 8), or "auto" (assignment).
    """
    if est.k != truth.k:
        raise InvalidInputError(f"cannot match {est.k} atoms to {truth.k}")
    cost = spec.pairwise(truth.atoms, est.atoms)  # cost[i, j] = D(a_i, est_j)
    k = truth.k
    if method == "exhaustive":
        if k > EXHAUSTIVE_MATCH_MAX_K:
            raise InvalidInputError("exhaustive matching limited to k <= 8")
        best = min(itertools.permutations(range(k)),
                   key=lambda p: cost[np.arange(k), list(p)].sum())
        perm = np.array(best)
    elif method in ("auto", "assignment"):
        _, perm = linear_sum_assignment(cost)
    else:
        raise InvalidInputError(f"unknown matching method {method!r}")
    atom_err = float(cost[np.arange(k), perm].max())
    prob_err = float(np.abs(est.probs[perm] - truth.probs).max())
    return perm, atom_err, prob_err
