import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extremeclust.clustering import ClusterConfig, Clustering, WeightedMultiset, assign, objective
from extremeclust.errors import InvalidInputError
from extremeclust.geometry import COSINE, PRINCIPAL_COMPONENT, separation_radius
from extremeclust.order_selection import (TheoryConstants, asw, delta_t, min_center_dissimilarity,
                                          penalized_asw, penalty, select_order, silhouette_parts,
                                          t_upper_bound, theory_constants)

from conftest import random_unit

E1, E2, E3 = np.eye(3)
mpmath.mp.dps = 40


def fixed(W, centers, spec=COSINE):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    labels, sizes = assign(W, centers, spec)
    return Clustering(centers, labels, sizes, objective(W, centers, spec))


def t0_oracle(r, p, k):
    r, p = mpmath.mpf(r), mpmath.mpf(p)
    return float(mpmath.log(1 - r * p) / mpmath.log(r * k * p))


def delta_oracle(r, p, k, t):
    r, p = mpmath.mpf(r), mpmath.mpf(p)
    return float((r * k * p) ** mpmath.mpf(t) - 1 + r * p)


# -- ASW and penalty ------------------------------------------------------------------------

def test_asw_coincident_points():
    W = WeightedMultiset.from_points([E1, E2], [3, 4])
    assert asw(W, fixed(W, [E1, E2]), COSINE) == 1.0


def test_asw_single_center_midpoint():
    W = WeightedMultiset.from_points(np.eye(2))
    mid = np.ones(2) / math.sqrt(2)
    assert asw(W, fixed(W, [mid]), COSINE) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    a, b = silhouette_parts(W, [mid], COSINE)
    np.testing.assert_allclose(a, 1 - 1 / math.sqrt(2))
    assert np.all(b == 1)


def test_asw_each_point_its_own_center():
    pts = random_unit(np.random.default_rng(0), 6, 3)
    W = WeightedMultiset.from_points(pts)
    assert asw(W, fixed(W, W.points), COSINE) == pytest.approx(1.0, abs=1e-12)


def test_asw_duplicate_centers_guard():
    W = WeightedMultiset.from_points([E1, E2], [5, 5])
    # two identical centers give b = 0 at their points, which count as ratio 1
    cl = fixed(W, [E1, E1, E2])
    assert asw(W, cl, COSINE) == pytest.approx(0.5)


def test_penalty_examples():
    W = WeightedMultiset.from_points([E1, E2], [5, 5])
    cl = fixed(W, [E1, E2])
    assert penalty(W, cl, COSINE, 0.5) == 0
    assert penalty(W, fixed(W, [np.ones(3) / math.sqrt(3)]), COSINE, 0.7) == 0  # k = 1
    assert penalty(W, cl, COSINE, 0.0) == 0
    with pytest.raises(InvalidInputError):
        penalty(W, cl, COSINE, -0.1)


def test_penalty_small_cluster_value():
    W = WeightedMultiset.from_points([E1, E2], [9, 1])
    cl = fixed(W, [E1, E2])
    # min size 1 against |W|/k = 5, orthogonal centers
    assert penalty(W, cl, COSINE, 0.5) == pytest.approx(1 - 0.2 ** 0.5, abs=1e-15)


def test_penalized_breakdown():
    W = WeightedMultiset.from_points([E1, E2], [5, 5])
    for t in (0.0, 0.3, 2.0):
        br = penalized_asw(W, fixed(W, [E1, E2]), COSINE, t)
        assert br.s_t == 1 and br.asw == 1 and br.penalty == 0
    cl = fixed(W, [E1, E2, E3])
    br = penalized_asw(W, cl, COSINE, 0.0)
    assert br.s_t == br.asw == asw(W, cl, COSINE)


def test_split_cluster_drives_score_down():
    W = WeightedMultiset.from_points([E1, E2], [50, 50])
    eta = 1e-6
    near = np.array([1.0, eta, 0.0]) / math.hypot(1.0, eta)
    cl = fixed(W, [E1, near, E2])
    assert min_center_dissimilarity(cl.centers, COSINE) < 1e-11
    br = penalized_asw(W, cl, COSINE, 0.1)
    assert br.penalty > 0.9
    assert br.s_t <= br.asw - 0.9 and br.s_t <= 0.1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.sampled_from([COSINE, PRINCIPAL_COMPONENT]))
def test_score_monotone_in_t(seed, k, spec):
    rng = np.random.default_rng(seed)
    W = WeightedMultiset.from_points(random_unit(rng, 20, 3), rng.integers(1, 4, 20))
    cl = fixed(W, random_unit(rng, k, 3), spec)
    scores = [penalized_asw(W, cl, spec, t).s_t for t in (0, 0.01, 0.1, 0.5, 1, 3)]
    assert np.all(np.diff(scores) <= 1e-12)
    assert 0 <= asw(W, cl, spec) <= 1
    assert all(0 <= penalty(W, cl, spec, t) <= 1 for t in (0.1, 1.0))


# -- order selection ----------------------------------------------------------------------

def test_select_order_two_axes():
    W = WeightedMultiset.from_points([E1, E2], [50, 50])
    rep = select_order(W, COSINE, [1, 2, 3], [0.0, 0.1], ClusterConfig(restarts=3, seed=0))
    assert rep.selected(0.1) == 2
    assert rep.selected(0.0) == 2
    i2 = rep.m_range.index(2)
    assert rep.scores[i2].tolist() == [1.0, 1.0]
    assert rep.scores[rep.m_range.index(1)][1] == pytest.approx(1 / math.sqrt(2))


def test_select_order_single_candidate():
    W = WeightedMultiset.from_points(random_unit(np.random.default_rng(1), 30, 3))
    rep = select_order(W, COSINE, [4], [0.0, 0.2])
    assert rep.selected_order_per_t == [4, 4]


def test_select_order_ties_to_smallest():
    # every order at or above the support size scores 1 at t = 0
    W = WeightedMultiset.from_points([E1, E2, E3], [4, 4, 4])
    rep = select_order(W, COSINE, [5, 3, 4], [0.0])
    assert rep.selected(0.0) == 3


def test_select_order_shapes_and_t0_column():
    W = WeightedMultiset.from_points(random_unit(np.random.default_rng(2), 60, 4))
    rep = select_order(W, PRINCIPAL_COMPONENT, range(1, 6), [0.0, 0.05, 0.3])
    assert rep.scores.shape == (5, 3)
    np.testing.assert_array_equal(rep.scores[:, 0], rep.asw)
    assert np.all(np.diff(rep.scores, axis=1) <= 1e-12)
    assert len(rep.rows()) == 15 and set(rep.rows()[0]) == {
        "m", "t", "asw", "penalty", "s_t", "min_cluster_frac", "min_center_dissim"}
    d = rep.to_dict()
    assert d["selected_order_per_t"] == {"0.0": rep.selected(0.0), "0.05": rep.selected(0.05),
                                         "0.3": rep.selected(0.3)}


def test_select_order_deterministic_and_parallel():
    W = WeightedMultiset.from_points(random_unit(np.random.default_rng(3), 80, 3))
    a = select_order(W, COSINE, range(1, 5), [0.0, 0.1], ClusterConfig(seed=4))
    b = select_order(W, COSINE, range(1, 5), [0.0, 0.1], ClusterConfig(seed=4), workers=3)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_select_order_validation():
    W = WeightedMultiset.from_points([E1, E2])
    with pytest.raises(InvalidInputError):
        select_order(W, COSINE, [1, 3], [0.0])
    with pytest.raises(InvalidInputError):
        select_order(W, COSINE, [0, 1], [0.0])
    with pytest.raises(InvalidInputError):
        select_order(W, COSINE, [1], [-0.1])


# -- t0 and the score gap ---------------------------------------------------------------

@pytest.mark.parametrize("r,p,k", [(0.29289, 0.5, 2), (0.5, 0.2, 3), (1.0, 0.3, 1), (0.1, 0.05, 6)])
def test_t0_against_oracle(r, p, k):
    assert t_upper_bound(r, p, k) == pytest.approx(t0_oracle(r, p, k), abs=1e-12)


def test_t0_frozen_values():
    assert t_upper_bound(0.5, 0.2, 3) == pytest.approx(0.087510710633, abs=1e-9)
    assert t_upper_bound(0.29289, 0.5, 2) == pytest.approx(0.128950075, abs=1e-9)


def test_t0_small_pmin():
    assert 0 < t_upper_bound(0.5, 1e-6, 2) < 1e-5


def test_t0_domain():
    with pytest.raises(InvalidInputError):
        t_upper_bound(1.0, 0.5, 2)
    with pytest.raises(InvalidInputError):
        t_upper_bound(0.0, 0.5, 2)


def test_delta_t_values():
    assert delta_t(0.29289, 0.5, 2, 0.0) == pytest.approx(0.29289 * 0.5, abs=1e-15)
    assert delta_t(0.29289, 0.5, 2, 0.05) == pytest.approx(delta_oracle(0.29289, 0.5, 2, 0.05), abs=1e-12)
    for r, p, k in [(0.29289, 0.5, 2), (0.5, 0.2, 3)]:
        assert delta_t(r, p, k, t_upper_bound(r, p, k)) == pytest.approx(0, abs=1e-12)
    with pytest.raises(InvalidInputError):
        delta_t(0.5, 0.2, 3, -1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.999), st.floats(0.01, 0.99), st.integers(1, 8), st.floats(0.01, 0.99))
def test_delta_t_sign(r, p, k, frac):
    if r * k * p >= 1 or r * k * p < 1e-3:
        return
    t0 = t_upper_bound(r, p, k)
    assert delta_t(r, p, k, frac * t0) > 0
    assert delta_t(r, p, k, (1 + frac) * t0) < 0


def test_theory_constants():
    tc = theory_constants(np.eye(2), [0.3, 0.7], COSINE)
    assert tc.source == "truth" and tc.k == 2 and tc.p_min == 0.3
    assert tc.r_A == pytest.approx(separation_radius(np.eye(2), COSINE))
    assert tc.t0 == pytest.approx(t_upper_bound(tc.r_A, 0.3, 2))
    assert TheoryConstants(0.5, 0.2, 3, "estimate").delta(0.0) == pytest.approx(0.1)
    with pytest.raises(InvalidInputError):
        theory_constants(np.eye(2), [0.3, 0.7], COSINE, source="guess")


# -- invariants on simulated and constructed data -----------------------------------------

from scenarios import LADDER_N, SIL_FRACTIONS, consistency_ladder, bound_suite, sil_cons_runs  # noqa: E402


@pytest.mark.slow
@pytest.mark.parametrize("name", ["cos", "pc"])
@pytest.mark.parametrize("frac", SIL_FRACTIONS)
def test_score_gap_across_penalty_range(name, frac):
    gaps = sil_cons_runs()[name]["gaps"][frac]
    assert sum(gap >= d - 0.05 for gap, d in gaps) >= 0.9 * len(gaps)


@pytest.mark.slow
@pytest.mark.parametrize("which", ["fewer: ASW cap", "at least: center nearby", "more: small or close",
                                   "exact: ASW floor", "exact: sizes", "exact: separation"])
def test_deterministic_bounds(which):
    sel = [r for r in bound_suite() if r[2] == which]
    assert sel and all(r[6] for r in sel), [r for r in sel if not r[6]][:3]


@pytest.mark.slow
def test_asw_at_true_order_tends_to_one():
    from extremeclust.extremes import SubsampleConfig, extract_extremal_subsample
    from extremeclust.factor_models import random_model, simulate
    from extremeclust.geometry import L1
    from extremeclust.clustering import k_cluster
    model = random_model("d4k2", 7)
    meds = []
    for n in LADDER_N:
        vals = []
        for s in range(20):
            W = extract_extremal_subsample(simulate(model, n, s), SubsampleConfig(fraction=None, ell=n ** 0.7, norm_r=L1))
            vals.append(asw(W, k_cluster(W, 2, COSINE, ClusterConfig(restarts=5, seed=s)), COSINE))
        meds.append(np.median(vals))
    assert meds[0] < meds[1] < meds[2] and meds[2] >= 0.95
    # the six-atom model approaches 1 more slowly; only the trend is asserted there
    six = [np.median(consistency_ladder()[n][2]) for n in LADDER_N]
    assert six[0] < six[1] < six[2]
