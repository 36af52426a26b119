"""Closed-form error bounds and rates, with Monte Carlo checks."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.stats import beta as beta_dist

from .clustering import ClusterConfig
from .errors import DegenerateWarning, DomainError, InvalidInputError
from .extremes import SubsampleConfig, estimate_spectral, extract_extremal_subsample
from .factor_models import simulate, spectral_from_coefficients
from .geometry import DEFAULT_RESOLUTION, Dissimilarity, NormSpec, dual_radius, separation_radius

BISECT_TOL = 1e-10


def kl_bernoulli(x: float, y: float) -> float:
    """KL divergence between Bernoulli(x) and Bernoulli(y)."""
    if not (0 < x < 1 and 0 < y < 1):
        raise InvalidInputError("kl_bernoulli needs x, y in (0, 1)")
    return x * math.log(x / y) + (1 - x) * math.log((1 - x) / (1 - y))


def binomial_bernoulli_tail_bound(n: int, q1: float, q2: float, r: float,
                                  side: str = "upper", form: str = "kl") -> float:
    """Tail bound for the mean of Binomial(n, q2)-many Bernoulli(q1) variables.

    kl form: exp{n q2 (exp(-KL(q1 +- r || q1)) - 1)}; simplified form replaces
    the KL term by 2 r^2 and is never smaller.
    """
    if n < 0 or not 0 < q1 < 1 or not 0 < q2 < 1:
        raise InvalidInputError("need n >= 0 and q1, q2 in (0, 1)")
    if side == "upper":
        if not 0 < r < 1 - q1:
            raise InvalidInputError(f"upper tail needs r in (0, {1 - q1:g})")
        shifted = q1 + r
    elif side == "lower":
        if not 0 < r < q1:
            raise InvalidInputError(f"lower tail needs r in (0, {q1:g})")
        shifted = q1 - r
    else:
        raise InvalidInputError("side must be 'upper' or 'lower'")
    if form == "kl":
        div = kl_bernoulli(shifted, q1)
    elif form == "simplified":
        div = 2 * r * r
    else:
        raise InvalidInputError("form must be 'kl' or 'simplified'")
    return math.exp(n * q2 * math.expm1(-div))


def rate_exponent(delta: float) -> float:
    """exp(-2 delta^2) - 1, the (negative) exponential decay rate attached to delta."""
    return math.expm1(-2 * delta * delta)


def _ck(k: int) -> int:
    return max(k, 2) - 1


def large_deviation_rate(x: float, y: float, k: int, p_min: float, r_A: float, eps0: float) -> float:
    """The rate constant Delta(x, y) for large atom / probability errors.

    First branch when x < eps0 and y < c_k p_min eps0 / (k + eps0) with
    c_k = max(k, 2) - 1; boundary points go to the second branch.
    """
    if not (x > 0 and y > 0):
        raise InvalidInputError("x and y must be positive")
    if k < 1 or not 0 < p_min <= 1 or not 0 < r_A <= 1:
        raise InvalidInputError("need k >= 1, p_min in (0, 1], r_A in (0, 1]")
    if not 0 < eps0 <= r_A:
        raise InvalidInputError("eps0 must lie in (0, r_A]")
    ck = _ck(k)
    cap = p_min * eps0 / (k + eps0)
    if x < eps0 and y < ck * cap:
        return max(y / ck, p_min * x / (k + x))
    return cap


def epsilon0(atoms, spec: Dissimilarity, resolution: int = DEFAULT_RESOLUTION,
             n_iter: int = 20, return_bracket: bool = False):
    """Largest eps with r_A > eps + r_A_dagger(eps), located by bisection.

    ``lo`` always satisfies the strict inequality and ``hi`` never does. If
    nothing above 0 qualifies, a tiny positive value is returned with a
    warning.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    r_A = separation_radius(atoms, spec, resolution)
    lo, hi = 0.0, r_A

    def ok(e):
        return r_A > e + dual_radius(atoms, e, spec, resolution)

    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        warnings.warn("no positive eps qualifies at this resolution", DegenerateWarning, stacklevel=2)
        lo = hi * 1e-3
    return (lo, hi) if return_bracket else lo


@dataclass
class DeltaTResult:
    delta: float
    residual: float
    rate: float


def _delta_t_gap(d, k, p_min, r_A, t):
    lhs = (k * (p_min - d) * r_A) ** t - k * d
    rhs = (k * k * d) ** t
    if k >= 2:
        rhs = max(rhs, 1 - (p_min - d) * r_A)
    return lhs - rhs


def false_selection_rate_delta(k: int, p_min: float, r_A: float, t: float, full: bool = False):
    """delta_t solving [k(p-d)r]^t - k d = (k^2 d)^t v (1 - (p-d) r) 1{k>=2}.

    The left side decreases and the right side increases in d, so bisection on
    (0, p_min) finds the unique crossing.
    """
    if k < 1 or not 0 < p_min <= 1 or not 0 < r_A <= 1:
        raise InvalidInputError("need k >= 1, p_min in (0, 1], r_A in (0, 1]")
    if not t > 0:
        raise DomainError("t must be positive")
    lo, hi = 0.0, p_min
    if not (_delta_t_gap(lo, k, p_min, r_A, t) > 0 > _delta_t_gap(hi, k, p_min, r_A, t)):
        raise DomainError("no sign change on (0, p_min); t is outside the valid range")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _delta_t_gap(mid, k, p_min, r_A, t) > 0:
            lo = mid
        else:
            hi = mid
    d = lo if abs(_delta_t_gap(lo, k, p_min, r_A, t)) <= abs(_delta_t_gap(hi, k, p_min, r_A, t)) else hi
    res = abs(_delta_t_gap(d, k, p_min, r_A, t))
    if res >= BISECT_TOL:
        raise DomainError(f"bisection residual {res:.3g} above tolerance")
    out = DeltaTResult(d, res, rate_exponent(d))
    return out if full else d


# ---------------------------------------------------------------------------
# Monte Carlo harness

@dataclass
class BoundReport:
    kind: str
    parameters: dict
    analytic_bound: float
    empirical_value: Optional[float]
    replicates: int
    events: int
    lower_confidence: float
    verdict: bool
    status: str
    confidence: float = 0.99

    def to_dict(self) -> dict:
        params = {k: (v if isinstance(v, (int, float, str, bool, type(None))) else str(v))
                  for k, v in self.parameters.items()}
        return {"kind": self.kind, "parameters": params, "analytic_bound": self.analytic_bound,
                "empirical_value": self.empirical_value, "replicates": self.replicates,
                "events": self.events, "lower_confidence": self.lower_confidence,
                "confidence": self.confidence, "verdict": "pass" if self.verdict else "fail",
                "status": self.status}


def clopper_pearson_lower(events: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided lower confidence limit for a binomial proportion."""
    if events == 0:
        return 0.0
    return float(beta_dist.ppf(1 - confidence, events, trials - events + 1))


def _exact(v: float) -> Fraction:
    # decimal reading of the float so that e.g. 0.5 + 0.1 compares as exactly 3/5
    return Fraction(repr(float(v)))


def hoeffding_hook(n: int, q1: float, q2: float, r: float, side: str = "upper"):
    """Vectorised sampler of the tail event for the Binomial-Bernoulli mean."""
    thr = _exact(q1) + _exact(r) if side == "upper" else _exact(q1) - _exact(r)
    num, den = thr.numerator, thr.denominator

    def hook(rng: np.random.Generator, m: int) -> np.ndarray:
        N = rng.binomial(n, q2, size=m)
        S = rng.binomial(N, q1)
        # mean S/N compared exactly as S*den vs N*num; empty sums have mean 0
        if side == "upper":
            return (N > 0) & (S * den > N * num)
        return np.where(N > 0, S * den < N * num, 0 < thr)
    return hook


def atoms_within(est, truth, spec: Dissimilarity, x: float, y: float) -> bool:
    """True when some bijection has every atom error <= x and every prob error <= y.

    Decided exactly as a perfect-matching problem on admissible pairs.
    """
    ok = (spec.pairwise(truth.atoms, est.atoms) <= x) & \
         (np.abs(truth.probs[:, None] - est.probs[None, :]) <= y)
    match = maximum_bipartite_matching(csr_matrix(ok.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))


def large_deviation_hook(model, n: int, ell: float, x: float, y: float, spec: Dissimilarity,
                         restarts: int = 3):
    """Sampler of the event that no bijection matches atoms within x and probs within y."""
    truth = spectral_from_coefficients(model, norm_r=None, norm_s=spec.sphere_norm)
    sub = SubsampleConfig(alpha=model.alpha, norm_r=NormSpec(float(model.alpha)),
                          norm_s=spec.sphere_norm, fraction=None, ell=ell)

    def hook(rng: np.random.Generator, m: int) -> np.ndarray:
        out = np.zeros(m, dtype=bool)
        for i in range(m):
            s = int(rng.integers(2 ** 63 - 1))
            data = simulate(model, n, s)
            W = extract_extremal_subsample(data, sub)
            if W.size < model.k:
                out[i] = True
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateWarning)
                est = estimate_spectral(W, model.k, spec, ClusterConfig(restarts=restarts, seed=s))
            out[i] = not atoms_within(est, truth, spec, x, y)
        return out
    return hook


MC_BATCH = 10_000


def monte_carlo_validate(bound_kind: str, params: dict, simulator_hook: Optional[Callable] = None,
                         replicates: int = 100_000, seed: int = 0, confidence: float = 0.99,
                         workers: int = 1, batch: Optional[int] = None) -> BoundReport:
    """Estimate a bounded probability and compare it with its analytic bound.

    ``bound_kind`` is "hoeffding" (params: n, q1, q2, r, side, form), a
    "large_deviation" event (params: model, n, ell, x, y, spec, eps0, r_A,
    optional restarts), or "custom" (params must hold analytic_bound; the hook
    is required). Hooks take (rng, m) and return m event indicators. The
    verdict passes when the one-sided lower confidence limit of the event
    frequency does not exceed the bound.
    """
    if replicates < 1000:
        raise InvalidInputError("need at least 1000 replicates")
    params = dict(params)
    if bound_kind == "hoeffding":
        side = params.setdefault("side", "upper")
        form = params.setdefault("form", "kl")
        bound = binomial_bernoulli_tail_bound(params["n"], params["q1"], params["q2"], params["r"], side, form)
        hook = simulator_hook or hoeffding_hook(params["n"], params["q1"], params["q2"], params["r"], side)
        status = "exact finite-sample inequality"
        default_batch = MC_BATCH
    elif bound_kind == "large_deviation":
        model, spec = params["model"], params["spec"]
        truth_p = spectral_from_coefficients(model, norm_r=None, norm_s=spec.sphere_norm).probs
        dlt = large_deviation_rate(params["x"], params["y"], model.k, float(truth_p.min()),
                                   params["r_A"], params["eps0"])
        expected = params.get("expected_size", params["ell"])
        bound = min(1.0, model.k * math.exp(expected * rate_exponent(dlt)))
        params["Delta"] = dlt
        hook = simulator_hook or large_deviation_hook(model, params["n"], params["ell"], params["x"],
                                                      params["y"], spec, params.get("restarts", 3))
        status = "asymptotic rate; bound used as a finite-n proxy"
        default_batch = 50
    elif bound_kind == "custom":
        if simulator_hook is None or "analytic_bound" not in params:
            raise InvalidInputError("custom validation needs a hook and params['analytic_bound']")
        bound = float(params["analytic_bound"])
        hook = simulator_hook
        status = params.get("status", "user supplied")
        default_batch = MC_BATCH
    else:
        raise InvalidInputError(f"unknown bound kind {bound_kind!r}")

    size = batch or default_batch
    sizes = [min(size, replicates - lo) for lo in range(0, replicates, size)]
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(arg):
        m, ss = arg
        return int(np.count_nonzero(hook(np.random.default_rng(ss), m)))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            counts = list(pool.map(run, zip(sizes, seqs)))
    else:
        counts = [run(a) for a in zip(sizes, seqs)]
    events = sum(counts)
    lower = clopper_pearson_lower(events, replicates, confidence)
    return BoundReport(bound_kind, params, float(bound), events / replicates, replicates, events,
                       lower, lower <= bound, status, confidence)

