import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extremeclust.errors import DegenerateInputError, InvalidInputError
from extremeclust.geometry import (COSINE, L1, L2, PRINCIPAL_COMPONENT, SUP, Dissimilarity, NormSpec,
                                   angular_dissimilarity, dissimilarity, dual_dissimilarity,
                                   dual_radius, norm, project_to_sphere, separation_radius,
                                   sphere_design)

from conftest import random_unit, unit_points

E1, E2, E3 = np.eye(3)


def quarter_circle(n=200_001):
    th = np.linspace(0, np.pi / 2, n)
    return np.column_stack([np.cos(th), np.sin(th)])


def brute_dual_2d(D, w1, w2, n=200_001):
    grid = quarter_circle(n)
    return float(np.max(np.abs(D.pairwise(grid, w1[None])[:, 0] - D.pairwise(grid, w2[None])[:, 0])))


# -- norms and projection ------------------------------------------------------

def test_norm_examples():
    assert norm([3, 4], L2) == 5
    assert norm([1, 1, 1], SUP) == 1
    assert norm([0.5, 0.5], L1) == 1


def test_norm_matches_numpy_for_general_p(rng):
    x = rng.random((20, 5))
    for p in (0.5, 1.5, 3.0, 7.0):
        np.testing.assert_allclose(norm(x, NormSpec(p)), np.sum(x ** p, axis=1) ** (1 / p), rtol=1e-12)


def test_norm_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        norm([1.0, np.nan])
    with pytest.raises(InvalidInputError):
        norm([np.inf, 1.0])


def test_normspec_parse():
    assert NormSpec.parse("sup").is_sup
    assert NormSpec.parse("p:2") == L2
    assert NormSpec.parse("1") == L1
    with pytest.raises(InvalidInputError):
        NormSpec.parse("p:abc")
    with pytest.raises(InvalidInputError):
        NormSpec(-1.0)


def test_project_examples():
    np.testing.assert_array_equal(project_to_sphere([2, 0]), [1, 0])
    np.testing.assert_allclose(project_to_sphere([1, 1]), [1 / math.sqrt(2)] * 2)
    np.testing.assert_allclose(project_to_sphere([3, 4], L1), [3 / 7, 4 / 7])


def test_project_errors():
    with pytest.raises(DegenerateInputError):
        project_to_sphere([0.0, 0.0])
    with pytest.raises(InvalidInputError):
        project_to_sphere([1.0, -1.0])
    with pytest.raises(InvalidInputError):
        project_to_sphere([1.0, 1.0], NormSpec(0.5))


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=2, max_size=6).filter(lambda v: max(v) > 1e-6),
       st.sampled_from([L1, L2, SUP, NormSpec(3.0)]))
def test_project_idempotent(x, spec):
    w = project_to_sphere(x, spec)
    assert abs(norm(w, spec) - 1) < 1e-12
    np.testing.assert_allclose(project_to_sphere(w, spec), w, rtol=0, atol=1e-15)


# -- dissimilarities -------------------------------------------------------------

def test_dissimilarity_examples():
    assert dissimilarity(COSINE, [1, 0], [0, 1]) == 1
    w = project_to_sphere([1, 2])
    assert dissimilarity(COSINE, w, w) < 1e-15
    assert dissimilarity(PRINCIPAL_COMPONENT, [1, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)]) == pytest.approx(0.5)


def test_dissimilarity_validation():
    with pytest.raises(InvalidInputError):
        dissimilarity(COSINE, [1, 0], [1, 0, 0])
    with pytest.raises(InvalidInputError):
        dissimilarity(COSINE, [1, 1], [1, 0])  # not on the sphere
    with pytest.raises(InvalidInputError):
        Dissimilarity("cos", sphere_norm=L1)


def test_semimetric_axioms_on_random_pairs(rng):
    X, Y = random_unit(rng, 10_000, 4), random_unit(rng, 10_000, 4)
    for D in (COSINE, PRINCIPAL_COMPONENT):
        dxy = np.array([D(x, y) for x, y in zip(X[:500], Y[:500])])
        dyx = np.array([D(y, x) for x, y in zip(X[:500], Y[:500])])
        assert np.array_equal(dxy, dyx)
        full = D.pairwise(X, Y)
        assert full.min() >= 0 and full.max() <= 1
        self_d = np.diag(D.pairwise(X, X))
        assert self_d.max() < 1e-12
        assert np.all(np.diag(full) > 0)  # distinct pairs are separated


# -- dual dissimilarity ------------------------------------------------------------

def test_dual_cos_orthogonal_axes():
    brute = brute_dual_2d(COSINE, np.array([1.0, 0]), np.array([0, 1.0]))
    assert brute == pytest.approx(1.0, abs=1e-9)
    assert dual_dissimilarity(COSINE, [1, 0], [0, 1]) == pytest.approx(brute, abs=1e-9)


@pytest.mark.parametrize("D", [COSINE, PRINCIPAL_COMPONENT, angular_dissimilarity()], ids=lambda d: d.name)
def test_dual_identical_points_is_zero(D):
    w = project_to_sphere([1, 2, 3])
    assert dual_dissimilarity(D, w, w) == 0


@pytest.mark.parametrize("D", [COSINE, PRINCIPAL_COMPONENT, angular_dissimilarity()], ids=lambda d: d.name)
def test_dual_matches_dense_quarter_circle(D):
    rng = np.random.default_rng(7)
    for w1, w2 in zip(random_unit(rng, 6, 2), random_unit(rng, 6, 2)):
        got = dual_dissimilarity(D, w1, w2)
        want = brute_dual_2d(D, w1, w2)
        assert got <= want + 1e-9
        assert got == pytest.approx(want, abs=1e-3)


def test_dual_is_at_least_d_for_a_metric():
    D = angular_dissimilarity()
    rng = np.random.default_rng(3)
    for w1, w2 in zip(random_unit(rng, 5, 3), random_unit(rng, 5, 3)):
        assert dual_dissimilarity(D, w1, w2) >= D(w1, w2) - 1e-12


def test_dual_non_decreasing_in_resolution():
    rng = np.random.default_rng(11)
    for w1, w2 in zip(random_unit(rng, 4, 4), random_unit(rng, 4, 4)):
        vals = [dual_dissimilarity(PRINCIPAL_COMPONENT, w1, w2, resolution=r) for r in (10, 100, 1000, 10_000)]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_designs_are_nested():
    small = sphere_design(4, 100)
    big = sphere_design(4, 1000)
    np.testing.assert_array_equal(small, big[:100])


@settings(max_examples=60, deadline=None)
@given(unit_points(3, 2, 2))
def test_dual_bounded_by_euclidean_distance(pair):
    w1, w2 = pair
    gap = np.linalg.norm(w1 - w2)
    assert dual_dissimilarity(COSINE, w1, w2) <= gap + 1e-9
    assert dual_dissimilarity(PRINCIPAL_COMPONENT, w1, w2, resolution=2000) <= 2 * gap + 1e-9


@settings(max_examples=100, deadline=None)
@given(unit_points(4, 3, 3))
def test_triangular_inequality_with_analytic_dual_bound(trip):
    w1, w2, w3 = trip
    gap = np.linalg.norm(w2 - w3)
    assert COSINE(w1, w3) <= COSINE(w1, w2) + gap + 1e-12
    assert PRINCIPAL_COMPONENT(w1, w3) <= PRINCIPAL_COMPONENT(w1, w2) + 2 * gap + 1e-12


# -- separation radius ---------------------------------------------------------------

def test_separation_radius_cos_pair():
    grid = quarter_circle()
    brute = np.min(np.maximum(1 - grid[:, 0], 1 - grid[:, 1]))
    assert brute == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-9)
    assert separation_radius([[1, 0], [0, 1]], COSINE) == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-12)


def test_separation_radius_three_axes_equals_pair():
    assert separation_radius(np.eye(3), COSINE) == pytest.approx(separation_radius(np.eye(2), COSINE), abs=1e-12)


def test_separation_radius_pc_pair_matches_grid():
    grid = quarter_circle()
    brute = np.min(np.maximum(1 - grid[:, 0] ** 2, 1 - grid[:, 1] ** 2))
    assert separation_radius(np.eye(2), PRINCIPAL_COMPONENT) == pytest.approx(brute, abs=1e-6)


def test_separation_radius_single_atom_and_duplicates():
    assert separation_radius([[0.6, 0.8]], COSINE) == 1.0
    with pytest.raises(InvalidInputError):
        separation_radius([[0.6, 0.8], [0.6, 0.8]], COSINE)


def test_separation_radius_permutation_and_resolution_invariance():
    rng = np.random.default_rng(5)
    atoms = random_unit(rng, 3, 3)
    for D in (COSINE, PRINCIPAL_COMPONENT):
        base = separation_radius(atoms, D, resolution=10_000)
        assert separation_radius(atoms[::-1], D, resolution=10_000) == pytest.approx(base, abs=1e-12)
        assert separation_radius(atoms, D, resolution=100_000) == pytest.approx(base, abs=1e-3)


# -- dual radius ---------------------------------------------------------------------

def test_dual_radius_small_ball_vanishes():
    assert dual_radius(np.eye(2), 1e-3, COSINE) < 0.05


def test_dual_radius_cos_matches_quarter_circle_oracle():
    # ball around e1 of cos-radius s is the arc cos(theta) >= 1 - s
    grid = quarter_circle(4001)
    e1 = np.array([1.0, 0.0])
    for s in (0.05, 0.2):
        inside = grid[1 - grid[:, 0] < s]
        diff = COSINE.pairwise(grid, e1[None]) - COSINE.pairwise(grid, inside)
        want = float(np.abs(diff).max())
        got = dual_radius([e1], s, COSINE)
        assert got == pytest.approx(want, abs=2e-3)
        assert got == pytest.approx(math.sqrt(2 * s - s * s), abs=2e-3)


def test_dual_radius_range_and_monotone():
    assert dual_radius([[1.0, 0.0]], 1.0, COSINE) <= 1.0
    rng = np.random.default_rng(9)
    for _ in range(3):
        atoms = random_unit(rng, 2, 3)
        for D in (COSINE, PRINCIPAL_COMPONENT):
            assert dual_radius(atoms, 0.1, D, resolution=4000) <= dual_radius(atoms, 0.3, D, resolution=4000) + 1e-12


def test_dual_radius_angular_equals_radius():
    # for a metric the dual is the metric itself, so r_dagger(s) = s
    D = angular_dissimilarity()
    assert dual_radius([[1.0, 0.0, 0.0]], 0.2, D, resolution=5000) == pytest.approx(0.2, abs=5e-3)
