"""Norms, the nonnegative unit sphere and dissimilarities defined on it.

Points on the sphere are plain numpy arrays: a single point has shape ``(d,)``
and a batch of points has shape ``(n, d)``. Every supremum or infimum over the
sphere that has no closed form is approximated on a deterministic quasi-uniform
design (scrambled Halton points pushed onto the positive orthant). Such values
are lower bounds of a supremum (upper bounds of an infimum) and are reported
together with the resolution used.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DegenerateInputError, InvalidInputError

SPHERE_TOL = 1e-9
DEFAULT_RESOLUTION = 20_000
_DESIGN_SEED = 20240917


@dataclass(frozen=True)
class NormSpec:
    """A p-norm (``p`` in (0, inf)) or the sup-norm (``p = inf``)."""

    p: float = 2.0

    def __post_init__(self):
        if not (self.p > 0):
            raise InvalidInputError(f"norm exponent must be positive, got {self.p}")

    @property
    def is_sup(self) -> bool:
        return math.isinf(self.p)

    @classmethod
    def parse(cls, text: str) -> "NormSpec":
        """Parse ``"sup"``, ``"inf"``, ``"p:<x>"`` or a bare number."""
        t = text.strip().lower()
        if t in ("sup", "inf", "p:inf", "p:sup"):
            return cls(math.inf)
        if t.startswith("p:"):
            t = t[2:]
        try:
            return cls(float(t))
        except ValueError:
            raise InvalidInputError(f"cannot parse norm spec {text!r}") from None

    def __str__(self) -> str:
        return "sup" if self.is_sup else f"p:{self.p:g}"


L1 = NormSpec(1.0)
L2 = NormSpec(2.0)
SUP = NormSpec(math.inf)


def norm(x, spec: NormSpec = L2) -> np.ndarray | float:
    """Norm along the last axis. Returns a float for 1-D input."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise InvalidInputError("norm needs at least one coordinate")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("norm of a non-finite vector")
    a = np.abs(x)
    if spec.is_sup:
        out = a.max(axis=-1)
    elif spec.p == 1.0:
        out = a.sum(axis=-1)
    elif spec.p == 2.0:
        out = np.sqrt(np.einsum("...i,...i->...", a, a))
    else:
        # scale by the max entry so large p does not overflow
        m = a.max(axis=-1, keepdims=True)
        safe = np.where(m > 0, m, 1.0)
        out = np.squeeze(safe, -1) * ((a / safe) ** spec.p).sum(axis=-1) ** (1.0 / spec.p)
    return float(out) if np.ndim(out) == 0 else out


def project_to_sphere(x, spec: NormSpec = L2) -> np.ndarray:
    """Map nonnegative vector(s) to the unit sphere ``{w >= 0 : ||w|| = 1}``."""
    if spec.p < 1:
        raise InvalidInputError("sphere construction requires p >= 1 (convex unit ball)")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InvalidInputError("points must lie in the nonnegative orthant")
    r = norm(x, spec)
    if np.any(np.asarray(r) == 0):
        raise DegenerateInputError("cannot project the zero vector onto the sphere")
    if x.ndim == 1:
        return x / r
    return x / np.asarray(r)[..., None]


def check_unit_points(w, spec: NormSpec = L2, tol: float = SPHERE_TOL) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim not in (1, 2):
        raise InvalidInputError("expected a point (d,) or a batch of points (n, d)")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("non-finite coordinates")
    if np.any(w < -tol):
        raise InvalidInputError("points must lie in the nonnegative orthant")
    if np.any(np.abs(np.asarray(norm(w, spec)) - 1.0) > tol):
        raise InvalidInputError(f"points are not on the unit sphere of norm {spec}")
    return w


# ---------------------------------------------------------------------------
# dissimilarities


PairwiseFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
CenterFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Dissimilarity:
    """A semimetric on the unit sphere with values in [0, 1].

    ``kind`` is ``"cos"``, ``"pc"`` or ``"custom"``. A custom dissimilarity is
    given as a vectorised ``pairwise(X, Y) -> (n, m)`` function and may carry
    its own center update ``center(points, weights) -> point``.
    """

    kind: str
    name: str = ""
    pairwise_fn: Optional[PairwiseFn] = None
    center_fn: Optional[CenterFn] = None
    sphere_norm: NormSpec = L2

    def __post_init__(self):
        if self.kind not in ("cos", "pc", "custom"):
            raise InvalidInputError(f"unknown dissimilarity kind {self.kind!r}")
        if self.kind == "custom" and self.pairwise_fn is None:
            raise InvalidInputError("custom dissimilarity needs a pairwise function")
        if self.kind != "custom" and self.sphere_norm != L2:
            raise InvalidInputError("cosine and pc dissimilarities live on the 2-norm sphere")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @classmethod
    def custom(cls, pairwise: PairwiseFn, name: str = "custom",
               center: Optional[CenterFn] = None,
               sphere_norm: NormSpec = L2) -> "Dissimilarity":
        return cls("custom", name, pairwise, center, sphere_norm)

    def pairwise(self, X, Y) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != Y.shape[1]:
            raise InvalidInputError("dimension mismatch")
        if self.kind == "cos":
            out = 1.0 - X @ Y.T
        elif self.kind == "pc":
            g = X @ Y.T
            out = 1.0 - g * g
        else:
            out = np.asarray(self.pairwise_fn(X, Y), dtype=float)
        return np.clip(out, 0.0, 1.0)

    def __call__(self, w1, w2) -> float:
        return float(self.pairwise(w1, w2)[0, 0])

    def __repr__(self) -> str:
        return f"Dissimilarity({self.name})"


COSINE = Dissimilarity("cos")
PRINCIPAL_COMPONENT = Dissimilarity("pc")


def _angular_pairwise(X, Y):
    return np.arccos(np.clip(X @ Y.T, -1.0, 1.0)) / (np.pi / 2)


def angular_dissimilarity() -> Dissimilarity:
    """Great-circle angle scaled to [0, 1]; a metric, so its dual equals itself."""
    return Dissimilarity.custom(_angular_pairwise, name="angular")


def get_dissimilarity(name: str) -> Dissimilarity:
    key = name.strip().lower()
    if key in ("cos", "cosine", "kmeans"):
        return COSINE
    if key in ("pc", "kpc", "principal-component"):
        return PRINCIPAL_COMPONENT
    if key == "angular":
        return angular_dissimilarity()
    raise InvalidInputError(f"unknown dissimilarity {name!r}")


def dissimilarity(spec: Dissimilarity, w1, w2) -> float:
    """D(w1, w2) for two points on the sphere of ``spec``."""
    w1 = check_unit_points(w1, spec.sphere_norm)
    w2 = check_unit_points(w2, spec.sphere_norm)
    if w1.shape != w2.shape or w1.ndim != 1:
        raise InvalidInputError("expected two points of equal dimension")
    return spec(w1, w2)


# ---------------------------------------------------------------------------
# quasi-uniform designs


@functools.lru_cache(maxsize=32)
def _design(d: int, n: int, p: float) -> np.ndarray:
    u = qmc.Halton(d, scramble=True, seed=_DESIGN_SEED).random(n)
    # |N(0,1)| per coordinate then normalise: uniform on the 2-norm orthant sphere
    z = ndtri(0.5 + 0.5 * np.clip(u, 1e-12, 1 - 1e-12))
    out = z / np.asarray(norm(z, NormSpec(p)))[:, None]
    out.setflags(write=False)
    return out


def sphere_design(d: int, n: int, spec: NormSpec = L2) -> np.ndarray:
    """First ``n`` points of a fixed quasi-uniform sequence on the orthant sphere.

    Designs are nested: the design of size n is a prefix of any larger one.
    """
    if d < 1 or n < 1:
        raise InvalidInputError("design needs d >= 1 and n >= 1")
    return _design(int(d), int(n), float(spec.p))


def _axes(d: int) -> np.ndarray:
    return np.eye(d)


def _normalize_rows(x: np.ndarray, spec: NormSpec) -> np.ndarray:
    r = np.asarray(norm(x, spec))
    keep = r > 0
    return x[keep] / r[keep][:, None]


def _cos_dual_exact(anchor: np.ndarray, points: np.ndarray) -> np.ndarray:
    # D(u, w) - D(u, a) = u.(a - w) is linear in u; its sup over the orthant
    # sphere is |(a - w)+|, attained at the normalised positive part.
    v = anchor[None, :] - points
    up = np.sqrt((np.clip(v, 0, None) ** 2).sum(axis=1))
    down = np.sqrt((np.clip(-v, 0, None) ** 2).sum(axis=1))
    return np.maximum(up, down)


def _pc_extras(anchor: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Per-point candidate maximisers for the pc dual, shape (m, e, d)."""
    m, d = points.shape
    M = points[:, :, None] * points[:, None, :] - np.outer(anchor, anchor)[None]
    _, vecs = np.linalg.eigh(M)
    ev = np.swapaxes(vecs, 1, 2)
    cand = np.clip(np.concatenate([ev, -ev], axis=1), 0, None)
    mid = (anchor[None] + points)[:, None, :]
    cand = np.concatenate([cand, mid, points[:, None, :],
                           np.broadcast_to(anchor, (m, 1, d)),
                           np.broadcast_to(np.eye(d), (m, d, d))], axis=1)
    r = np.sqrt((cand ** 2).sum(axis=2, keepdims=True))
    return np.where(r > 0, cand / np.where(r > 0, r, 1.0), 0.0)


def _custom_extras(spec: Dissimilarity, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    d = a.shape[0]
    cand = np.concatenate([np.eye(d), a[None], w[None], (a + w)[None]])
    return _normalize_rows(cand, spec.sphere_norm)


def dual_dissimilarity_many(spec: Dissimilarity, anchor, points,
                            resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """D-dagger(anchor, w) for every row w of ``points``.

    Exact for the cosine dissimilarity; a lower bound otherwise.
    """
    anchor = np.asarray(anchor, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.kind == "cos":
        return _cos_dual_exact(anchor, points)
    design = sphere_design(anchor.shape[0], resolution, spec.sphere_norm)
    da = spec.pairwise(design, anchor[None])[:, 0]
    best = np.empty(len(points))
    step = max(1, 4_000_000 // len(design))
    for lo in range(0, len(points), step):
        dw = spec.pairwise(design, points[lo:lo + step])
        best[lo:lo + step] = np.abs(dw - da[:, None]).max(axis=0)
    if spec.kind == "pc":
        for lo in range(0, len(points), 2048):
            chunk = points[lo:lo + 2048]
            cand = _pc_extras(anchor, chunk)
            ga = cand @ anchor
            gw = np.einsum("med,md->me", cand, chunk)
            diff = np.abs(ga ** 2 - gw ** 2).max(axis=1)
            best[lo:lo + 2048] = np.maximum(best[lo:lo + 2048], diff)
    else:
        for j, w in enumerate(points):
            ex = _custom_extras(spec, anchor, w)
            diff = spec.pairwise(ex, w[None])[:, 0] - spec.pairwise(ex, anchor[None])[:, 0]
            best[j] = max(best[j], float(np.abs(diff).max()))
    return best


def dual_dissimilarity(spec: Dissimilarity, w1, w2,
                       resolution: int = DEFAULT_RESOLUTION) -> float:
    """Numerical D-dagger(w1, w2) = sup_w |D(w, w1) - D(w, w2)|.

    The supremum is taken over ``resolution`` design points plus w1, w2, the
    coordinate axes and the normalised midpoint (for pc also the clamped
    eigenvectors of w2 w2' - w1 w1'). The result is a lower bound of the exact
    dual and is non-decreasing in ``resolution``. For the cosine dissimilarity
    the difference is linear and the supremum is returned in closed form.
    """
    if resolution < 2:
        raise InvalidInputError("resolution must be >= 2")
    w1 = check_unit_points(w1, spec.sphere_norm)
    w2 = check_unit_points(w2, spec.sphere_norm)
    if w1.shape != w2.shape or w1.ndim != 1:
        raise InvalidInputError("expected two points of equal dimension")
    if np.array_equal(w1, w2):
        return 0.0
    return float(dual_dissimilarity_many(spec, w1, w2[None], resolution)[0])


# ---------------------------------------------------------------------------
# separation radii


def _check_distinct(atoms: np.ndarray) -> None:
    for i in range(len(atoms)):
        for j in range(i + 1, len(atoms)):
            if np.max(np.abs(atoms[i] - atoms[j])) <= 1e-12:
                raise InvalidInputError(f"atoms {i} and {j} coincide")


def _arc(a: np.ndarray, b: np.ndarray, spec: NormSpec, n: int = 257) -> np.ndarray:
    lam = np.linspace(0.0, 1.0, n)[:, None]
    return _normalize_rows((1 - lam) * a + lam * b, spec)


def pair_separation(spec: Dissimilarity, a, b, resolution: int = DEFAULT_RESOLUTION) -> float:
    """inf over w of max(D(a, w), D(b, w)); D-balls of radius <= this are disjoint."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = _normalize_rows((a + b)[None], spec.sphere_norm)
    if spec.kind == "cos":
        return float(max(spec(a, mid[0]), spec(b, mid[0])))
    cand = np.concatenate([sphere_design(a.shape[0], resolution, spec.sphere_norm),
                           _arc(a, b, spec.sphere_norm), mid])
    both = np.maximum(spec.pairwise(cand, a[None])[:, 0], spec.pairwise(cand, b[None])[:, 0])
    return float(both.min())


def separation_radius(atoms, spec: Dissimilarity,
                      resolution: int = DEFAULT_RESOLUTION) -> float:
    """Largest r such that the open D-balls B(a_i, r) are pairwise disjoint.

    Closed form at the normalised midpoint for the cosine dissimilarity;
    otherwise a grid minimum over the design, the connecting arc and the
    midpoint (an upper bound of each pairwise infimum). One atom gives 1.
    """
    atoms = check_unit_points(np.atleast_2d(atoms), spec.sphere_norm)
    if len(atoms) == 0:
        raise InvalidInputError("need at least one atom")
    _check_distinct(atoms)
    if len(atoms) == 1:
        return 1.0
    return min(pair_separation(spec, atoms[i], atoms[j], resolution)
               for i in range(len(atoms)) for j in range(i + 1, len(atoms)))


def _ball_boundary(spec: Dissimilarity, a: np.ndarray, dirs: np.ndarray, s: float,
                   iters: int = 40) -> np.ndarray:
    """For each direction v, the point on the segment a -> v (normalised) where
    D(a, .) reaches s, approached from inside the ball."""
    lo = np.zeros(len(dirs))
    hi = np.ones(len(dirs))

    def pts(lam):
        return _normalize_rows((1 - lam)[:, None] * a + lam[:, None] * dirs, spec.sphere_norm)

    inside_end = spec.pairwise(pts(hi), a[None])[:, 0] < s
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = spec.pairwise(pts(mid), a[None])[:, 0] < s
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    lam = np.where(inside_end, 1.0, lo)
    return lam, pts


def ball_samples(spec: Dissimilarity, a, s: float, resolution: int = DEFAULT_RESOLUTION,
                 n_directions: int = 400) -> np.ndarray:
    """Points of the open ball B_D(a, s): design points inside it plus points along
    segments from ``a`` towards spread-out directions, up to the ball boundary."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    design = sphere_design(d, resolution, spec.sphere_norm)
    # the design is a quasi-uniform sequence, so its first hits stay spread out
    inside = design[spec.pairwise(design, a[None])[:, 0] < s][: 4 * n_directions]
    dirs = np.concatenate([_axes(d), sphere_design(d, n_directions, spec.sphere_norm)])
    lam, pts = _ball_boundary(spec, a, dirs, s)
    rings = [pts(lam * f) for f in (0.25, 0.5, 0.75, 1.0)]
    out = np.concatenate([inside, *rings])
    return out[spec.pairwise(out, a[None])[:, 0] < s]


def dual_radius(atoms, s: float, spec: Dissimilarity,
                resolution: int = DEFAULT_RESOLUTION, n_directions: int = 400) -> float:
    """Numerical sup over atoms a_i and w in B_D(a_i, s) of D-dagger(a_i, w).

    Lower bound of the exact quantity (both the ball and the dual are sampled).
    """
    if not s > 0:
        raise InvalidInputError("ball radius s must be positive")
    atoms = check_unit_points(np.atleast_2d(atoms), spec.sphere_norm)
    best = 0.0
    for a in atoms:
        pts = ball_samples(spec, a, s, resolution, n_directions)
        if len(pts):
            best = max(best, float(dual_dissimilarity_many(spec, a, pts, resolution).max()))
    return best
