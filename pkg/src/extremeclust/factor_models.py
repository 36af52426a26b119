"""Max-linear and sum-linear factor models with alpha-Frechet factors.

The coefficient matrix B is d x k (column j is the loading vector b_j) and
satisfies sum_j b_ij^alpha = 1 for every row i, which gives each coordinate a
standard alpha-Frechet tail.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateResultError, InvalidInputError
from .extremes import DataMatrix, SpectralEstimate
from .geometry import L2, NormSpec, norm

ROW_TOL = 1e-10
MODEL_TYPES = ("max", "sum")
SIM_CHUNK = 50_000


@dataclass(frozen=True, eq=False)
class FactorCoefficients:
    B: np.ndarray
    alpha: float = 1.0
    model_type: str = "max"
    noise_alpha: Optional[float] = None  # tail index of additive / maxed noise; None = no noise
    noise_scale: float = 1.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2 or min(B.shape) < 1:
            raise InvalidInputError("B must be a d x k matrix")
        if not np.all(np.isfinite(B)) or np.any(B < 0):
            raise InvalidInputError("B must be finite and nonnegative")
        if not self.alpha > 0:
            raise InvalidInputError("alpha must be positive")
        if self.model_type not in MODEL_TYPES:
            raise InvalidInputError(f"model_type must be one of {MODEL_TYPES}")
        if self.noise_alpha is not None and not self.noise_alpha > self.alpha:
            raise InvalidInputError("noise must have a larger tail index (lighter tail) than the factors")
        zero_rows = np.flatnonzero(~B.any(axis=1))
        if len(zero_rows):
            raise InvalidInputError(f"row {int(zero_rows[0])} of B is zero")
        zero_cols = np.flatnonzero(~B.any(axis=0))
        if len(zero_cols):
            raise InvalidInputError(f"column {int(zero_cols[0])} of B is zero")
        sums = (B ** self.alpha).sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1) > ROW_TOL)
        if len(bad):
            i = int(bad[0])
            raise InvalidInputError(f"row {i} violates the row constraint: sum b^alpha = {sums[i]:.12g}")
        k = B.shape[1]
        for i in range(k):
            for j in range(i + 1, k):
                if np.array_equal(B[:, i], B[:, j]):
                    raise InvalidInputError(f"columns {i} and {j} of B coincide")
        object.__setattr__(self, "B", B)

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]


def frechet(rng: np.random.Generator, size, alpha: float) -> np.ndarray:
    """Standard alpha-Frechet draws by inversion: (-log U)^(-1/alpha)."""
    u = rng.random(size)
    return (-np.log(u)) ** (-1.0 / alpha)


def _simulate_chunk(model: FactorCoefficients, m: int, ss: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(ss)
    Z = frechet(rng, (m, model.k), model.alpha)
    if model.model_type == "max":
        X = (model.B[None, :, :] * Z[:, None, :]).max(axis=2)
    else:
        X = Z @ model.B.T
    if model.noise_alpha is not None:
        eps = model.noise_scale * frechet(rng, (m, model.d), model.noise_alpha)
        X = np.maximum(X, eps) if model.model_type == "max" else X + eps
    return X


def simulate(model: FactorCoefficients, n: int, seed: int, workers: int = 1) -> DataMatrix:
    """Draw n observations. Chunks use seeds spawned from ``seed`` by chunk index,
    so the output does not depend on ``workers``."""
    if n < 1:
        raise InvalidInputError("n must be positive")
    sizes = [min(SIM_CHUNK, n - lo) for lo in range(0, n, SIM_CHUNK)]
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _simulate_chunk(model, *a), zip(sizes, seqs)))
    else:
        parts = [_simulate_chunk(model, m, ss) for m, ss in zip(sizes, seqs)]
    return DataMatrix(np.concatenate(parts), tuple(f"x{i + 1}" for i in range(model.d)))


def _alpha_norm(alpha: float) -> NormSpec:
    return NormSpec(float(alpha))


def spectral_from_coefficients(model, norm_r: Optional[NormSpec] = None, norm_s: NormSpec = L2,
                               alpha: Optional[float] = None) -> SpectralEstimate:
    """Discrete spectral measure of a factor model.

    p_j is proportional to ||b_j||_r^alpha and a_j = b_j / ||b_j||_s. ``model``
    may be a :class:`FactorCoefficients` or a raw nonnegative matrix (then pass
    ``alpha``). ``norm_r`` defaults to the alpha-norm.
    """
    if isinstance(model, FactorCoefficients):
        B, a = model.B, model.alpha
    else:
        B = np.asarray(model, dtype=float)
        a = 1.0 if alpha is None else float(alpha)
        if B.ndim != 2 or np.any(B < 0) or not np.all(B.any(axis=0)):
            raise InvalidInputError("B must be nonnegative with nonzero columns")
    nr = _alpha_norm(a) if norm_r is None else norm_r
    cols = B.T
    w = norm(cols, nr) ** a
    probs = w / w.sum()
    atoms = cols / norm(cols, norm_s)[:, None]
    return SpectralEstimate(atoms, probs, norm_s)


def coefficients_from_spectral(est: SpectralEstimate, alpha: float, d: int) -> np.ndarray:
    """Raw loadings b_j = (p_j d)^(1/alpha) a_j / ||a_j||_alpha, as a d x k matrix."""
    atoms = np.asarray(est.atoms, dtype=float)
    if atoms.shape[1] != d:
        raise InvalidInputError(f"atoms have dimension {atoms.shape[1]}, expected {d}")
    na = norm(atoms, _alpha_norm(alpha))
    if np.any(na == 0):
        raise InvalidInputError("zero atom")
    scale = (np.asarray(est.probs) * d) ** (1.0 / alpha) / na
    return (atoms * scale[:, None]).T


def row_normalize(B_hat, alpha: float, model_type: str = "max") -> FactorCoefficients:
    """Rescale each row r_i to r_i / ||r_i||_alpha so the row constraint holds.

    Rows already within 1e-12 of the constraint are left untouched, so the map
    is exactly idempotent.
    """
    B = np.array(B_hat, dtype=float)
    if B.ndim != 2:
        raise InvalidInputError("B_hat must be a matrix")
    rn = norm(B, _alpha_norm(alpha))
    zero = np.flatnonzero(rn == 0)
    if len(zero):
        raise DegenerateResultError(f"coordinate {int(zero[0])} has no estimated loading (zero row)")
    off = np.abs((B ** alpha).sum(axis=1) - 1) > 1e-12
    B[off] = B[off] / rn[off, None]
    return FactorCoefficients(B, alpha, model_type)


# positions (0-based) carrying fresh uniforms for b_1 .. b_{k-1}, and the divisor
SCHEMES = {
    "d4k2": (4, 2, [range(4)]),
    "d4k6": (4, 3, [range(4), (0, 2), (1, 3), (0, 1), (2, 3)]),
    "d6k6": (6, 3, [range(6), (0, 2, 4), (1, 3, 5), (0, 1, 2), (3, 4, 5)]),
    "d10k6": (10, 2, [range(10), (0, 1), (2, 3), (4, 5), (6, 7, 8, 9)]),
}


def random_model(scheme: str, seed: int, model_type: str = "max",
                 max_attempts: int = 10_000) -> FactorCoefficients:
    """Random coefficient matrix following one of the simulation recipes (alpha = 1).

    b_1 .. b_{k-1} get uniform entries on the listed positions, divided by
    the scheme's divisor; b_k is solved from the row constraint. A draw that
    would make b_k negative somewhere, or leave it zero, is redrawn; the
    number of redraws is kept in ``info["resamples"]``.
    """
    if scheme not in SCHEMES:
        raise InvalidInputError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    d, div, patterns = SCHEMES[scheme]
    rng = np.random.default_rng(seed)
    for attempt in range(max_attempts):
        cols = []
        for pos in patterns:
            b = np.zeros(d)
            idx = list(pos)
            b[idx] = rng.random(len(idx)) / div
            cols.append(b)
        head = np.stack(cols, axis=1)
        last = 1.0 - head.sum(axis=1)
        if np.all(last >= 0) and last.any():
            B = np.column_stack([head, last])
            try:
                return FactorCoefficients(B, 1.0, model_type, info={"scheme": scheme, "resamples": attempt})
            except InvalidInputError:
                continue
    raise DegenerateResultError(f"no admissible {scheme} model after {max_attempts} attempts")


def dominant_factor(model: FactorCoefficients) -> np.ndarray:
    """Per coordinate, the index of the column with the largest loading."""
    return np.argmax(model.B, axis=1)
