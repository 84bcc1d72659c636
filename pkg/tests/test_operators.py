import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dapcg.benchmarks import EXAMPLE1_HALFSPACES, pyramid, random_spd
from dapcg.operators import (
    HalfSpace,
    ProjectionError,
    QuadraticTerm,
    averaged_projection_map,
    check_firmly_nonexpansive,
    gram_resolvent_map,
    hinge_prox_map,
    identity_map,
    project_ball,
    project_halfspace,
    project_polyhedron,
    prox_hinge_abs,
    prox_quadratic,
    resolvent_gram,
)
from dapcg.problem import Ball, Indicator, Polyhedron, SquaredDistance, ZeroTerm

from oracles import brute_force_hinge_prox, polyhedron_kkt_residual, subgradient_gap

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# --- half-space ------------------------------------------------------------


def test_halfspace_feasible_point_unchanged():
    hs = HalfSpace(np.array([1.0, 0.0, 1.0]), 1.0)
    np.testing.assert_array_equal(project_halfspace(np.zeros(3), hs), np.zeros(3))


def test_halfspace_boundary_projection():
    hs = HalfSpace(np.array([1.0, 0.0, 1.0]), 1.0)
    np.testing.assert_allclose(project_halfspace(np.array([1.0, 0.0, 1.0]), hs), [0.5, 0.0, 0.5], atol=1e-15)


def test_halfspace_c2_closed_form():
    d = np.array([4.0, 1.0, 4.0])
    x = np.array([2.0, 3.0, 4.0])
    expected = x - (27.0 - 4.0) / 33.0 * d
    np.testing.assert_allclose(project_halfspace(x, HalfSpace(d, 4.0)), expected, atol=1e-14)


def test_halfspace_rejects_zero_normal():
    with pytest.raises(ValueError):
        HalfSpace(np.zeros(3), 1.0)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite), finite)
def test_halfspace_projection_optimality(x, normal, offset):
    if np.linalg.norm(normal) < 1e-3:
        return
    hs = HalfSpace(normal, offset)
    p = project_halfspace(x, hs)
    assert hs.violation(p) <= 1e-9 * (1 + abs(offset))
    # x - p is a nonnegative multiple of the normal
    r = x - p
    cross = r - (r @ normal) / (normal @ normal) * normal
    assert np.linalg.norm(cross) <= 1e-9 * (1 + np.linalg.norm(x))
    assert r @ normal >= -1e-9


# --- ball --------------------------------------------------------------------


def test_ball_cases():
    x = np.array([0.3, 0.4, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(project_ball(x, 1.0), x)
    np.testing.assert_array_equal(project_ball(np.array([2.0, 0, 0, 0, 0]), 1.0), [1.0, 0, 0, 0, 0])
    v = np.full(5, 1 / np.sqrt(10))
    np.testing.assert_array_equal(project_ball(v, 1.0), v)


def test_ball_with_center():
    c = np.array([1.0, 1.0])
    np.testing.assert_allclose(project_ball(np.array([4.0, 5.0]), 5.0 / 5.0, c), [1.6, 1.8])


# --- polyhedron (Dykstra) ------------------------------------------------------


def test_polyhedron_separable_orthant():
    hs = [HalfSpace(np.array([1.0, 0.0]), 0.0), HalfSpace(np.array([0.0, 1.0]), 0.0)]
    np.testing.assert_allclose(project_polyhedron(np.array([1.0, 1.0]), hs), [0.0, 0.0], atol=1e-12)


def test_polyhedron_box_matches_clip(rng):
    lo, hi = -np.ones(4), 2 * np.ones(4)
    hs = [HalfSpace(e, h) for e, h in zip(np.eye(4), hi)] + [HalfSpace(-e, -l) for e, l in zip(np.eye(4), lo)]
    for _ in range(50):
        x = 4 * rng.standard_normal(4)
        np.testing.assert_allclose(project_polyhedron(x, hs), np.clip(x, lo, hi), atol=1e-10)


def test_polyhedron_interior_point_is_fixed():
    x = np.array([0.1, -0.2, 0.0])
    np.testing.assert_array_equal(pyramid(1.0).project(x), x)


def test_polyhedron_single_active_face_matches_halfspace():
    # only the x3 >= -1 face is violated and the others stay inactive
    x = np.array([0.0, 0.0, -3.0])
    poly = pyramid(1.0)
    np.testing.assert_allclose(poly.project(x), project_halfspace(x, poly.halfspaces[-1]), atol=1e-12)


@pytest.mark.parametrize("level", [1.0, 2.0])
def test_polyhedron_kkt_oracle(rng, level):
    poly = pyramid(level)
    N = np.array([h.normal for h in poly.halfspaces])
    b = np.array([h.offset for h in poly.halfspaces])
    for _ in range(100):
        x = 3 * rng.standard_normal(3)
        y = poly.project(x)
        viol, resid = polyhedron_kkt_residual(x, y, N, b)
        assert viol <= 1e-10
        assert resid <= 1e-8


def test_polyhedron_random_kkt_oracle(rng):
    for _ in range(30):
        N = rng.standard_normal((6, 4))
        b = np.abs(rng.standard_normal(6)) + 0.1
        hs = [HalfSpace(n, o) for n, o in zip(N, b)]
        x = 5 * rng.standard_normal(4)
        y = project_polyhedron(x, hs)
        viol, resid = polyhedron_kkt_residual(x, y, N, b)
        assert viol <= 1e-10
        assert resid <= 1e-7


def test_polyhedron_budget_exhaustion_raises():
    # an infeasible start always moves in the first sweep
    hs = [HalfSpace(np.array([1.0, 1e-4]), 0.0), HalfSpace(np.array([1.0, -1e-4]), 0.0)]
    with pytest.raises(ProjectionError) as info:
        project_polyhedron(np.array([1.0, 5.0]), hs, max_sweeps=1)
    assert info.value.best.shape == (2,)


@pytest.mark.parametrize(
    "region",
    [pyramid(1.0), pyramid(2.0), Ball(1.0), Polyhedron(EXAMPLE1_HALFSPACES)],
    ids=["pyramid1", "pyramid2", "ball", "c1c2"],
)
def test_projection_idempotent_and_member(rng, region):
    for _ in range(200):
        x = 3 * rng.standard_normal(3)
        p = region.project(x)
        assert region.contains(p)
        assert np.linalg.norm(region.project(p) - p) <= 1e-12


# --- quadratic prox ----------------------------------------------------------------


def test_prox_quadratic_scalar_cases():
    assert prox_quadratic(np.array([2.0]), 1.0, QuadraticTerm(np.eye(1), np.zeros(1)))[0] == pytest.approx(1.0)
    assert prox_quadratic(np.array([2.0]), 1.0, QuadraticTerm(np.eye(1), np.ones(1)))[0] == pytest.approx(0.5)


def test_prox_quadratic_origin_fixed(rng):
    q = QuadraticTerm(random_spd(4, 3), np.zeros(4))
    for lam in (0.01, 1.0, 50.0):
        np.testing.assert_allclose(prox_quadratic(np.zeros(4), lam, q), 0.0, atol=1e-14)


def test_prox_quadratic_optimality(rng):
    A = random_spd(5, 9)
    a = rng.standard_normal(5)
    q = QuadraticTerm(A, a)
    for lam in (0.05, 0.7, 3.0):
        x = rng.standard_normal(5)
        y = prox_quadratic(x, lam, q)
        # y + lam (A y + a) = x
        np.testing.assert_allclose(y + lam * (A @ y + a), x, atol=1e-12)


def test_quadratic_term_rejects_bad_matrices():
    with pytest.raises(ValueError):
        QuadraticTerm(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticTerm(-np.eye(2), np.zeros(2))


# --- Gram resolvent -------------------------------------------------------------------------


def test_resolvent_gram_cases(rng):
    x = rng.standard_normal(3)
    np.testing.assert_allclose(resolvent_gram(x, 1.0, np.zeros((3, 3))), x)
    np.testing.assert_allclose(resolvent_gram(np.full(3, 2.0), 1.0, np.eye(3)), np.ones(3))
    A = rng.standard_normal((3, 3))
    for gamma in (0.5, 1.0, 4.0):
        y = resolvent_gram(x, gamma, A)
        np.testing.assert_allclose((np.eye(3) + gamma * A.T @ A) @ y, x, atol=1e-10)
        np.testing.assert_allclose(gram_resolvent_map(A, gamma)(x), y, atol=1e-12)


# --- hinge prox ---------------------------------------------------------------------------------


def test_hinge_prox_branches():
    assert prox_hinge_abs(0.5) == 0.5
    assert prox_hinge_abs(1.5) == 1.0
    assert prox_hinge_abs(-3.0) == -2.0
    np.testing.assert_array_equal(prox_hinge_abs(np.array([0.5, -1.5, 3.0])), [0.5, -1.0, 2.0])


def test_hinge_prox_matches_brute_force(rng):
    for t in rng.uniform(-5, 5, 200):
        assert abs(prox_hinge_abs(t) - brute_force_hinge_prox(t)) <= 1e-3


def test_literal_third_branch_fails_oracle():
    # sign(t - 1) for |t| > 2 is not the minimizer
    t = -3.0
    assert abs(np.sign(t - 1) - brute_force_hinge_prox(t)) > 0.5


# --- prox subgradient oracle (every proxable term) -----------------------------------------------


def _terms(rng):
    A = random_spd(3, 17)
    return {
        "zero": ZeroTerm(),
        "quadratic": QuadraticTerm(A, rng.standard_normal(3)),
        "squared_distance": SquaredDistance(2.0, np.array([2.0, 3.0, 4.0])),
        "indicator_halfspace": Indicator(Polyhedron((EXAMPLE1_HALFSPACES[1],))),
        "indicator_pyramid": Indicator(pyramid(1.0)),
        "indicator_ball": Indicator(Ball(1.0)),
    }


@pytest.mark.parametrize("name", ["zero", "quadratic", "squared_distance", "indicator_halfspace",
                                  "indicator_pyramid", "indicator_ball"])
def test_prox_subgradient_inequality(rng, name):
    term = _terms(rng)[name]
    probes = 3 * rng.standard_normal((200, 3))
    for _ in range(100):
        x = 3 * rng.standard_normal(3)
        lam = float(rng.uniform(0.05, 2.0))
        y = term.prox(x, lam)
        assert subgradient_gap(term.evaluate, x, y, lam, probes) <= 1e-8


def test_hinge_prox_subgradient_inequality(rng):
    f = lambda y: float(np.sum(np.maximum(np.abs(y) - 1.0, 0.0)))
    probes = 4 * rng.standard_normal((200, 3))
    for _ in range(100):
        x = 4 * rng.standard_normal(3)
        y = hinge_prox_map()(x)
        assert subgradient_gap(f, x, y, 1.0, probes) <= 1e-12


# --- averaged projection map ----------------------------------------------------------------------


def test_averaged_projection_cases():
    T = averaged_projection_map([HalfSpace(np.array([1.0]), 0.0)], 1.0)
    assert T(np.array([2.0]))[0] == pytest.approx(1.0)
    v = np.full(5, 1 / np.sqrt(10))
    hs = [HalfSpace(np.ones(5), 10.0)]
    np.testing.assert_allclose(averaged_projection_map(hs, 1.0)(v), v, atol=1e-15)


def test_averaged_projection_order_last_first():
    hs = [HalfSpace(np.array([1.0, 0.0]), 0.0), HalfSpace(np.array([1.0, 1.0]), 0.0)]
    x = np.array([1.0, 1.0])
    T = averaged_projection_map(hs, 10.0)
    inner = project_halfspace(project_halfspace(x, hs[1]), hs[0])
    np.testing.assert_allclose(T(x), 0.5 * (x + inner))
    assert T.descriptor["order"] == "last-first"


# --- firm nonexpansiveness -------------------------------------------------------------------------


def test_fne_identity_and_expansive():
    rep = check_firmly_nonexpansive(identity_map(), 100, 0, 3)
    assert rep.passed and rep.max_violation == 0.0
    rep = check_firmly_nonexpansive(lambda x: 2 * x, 100, 0, 3)
    assert not rep.passed and rep.max_violation > 0


@pytest.mark.parametrize("level", [1.0, 2.0])
def test_fne_projections(level):
    poly = pyramid(level)
    assert check_firmly_nonexpansive(poly.project, 1000, 1, 3, scale=3.0).passed
    assert check_firmly_nonexpansive(lambda x: project_ball(x, level), 1000, 2, 3, scale=3.0).passed
    hs = EXAMPLE1_HALFSPACES[1]
    assert check_firmly_nonexpansive(lambda x: project_halfspace(x, hs), 1000, 3, 3, scale=3.0).passed


def test_fne_maps(rng):
    A = np.linalg.cholesky(random_spd(3, 5)).T
    assert check_firmly_nonexpansive(gram_resolvent_map(A, 1.0), 1000, 4, 3, scale=3.0).passed
    assert check_firmly_nonexpansive(hinge_prox_map(), 1000, 5, 3, scale=3.0).passed
    hs = [HalfSpace(rng.standard_normal(5), 0.3) for _ in range(3)]
    assert check_firmly_nonexpansive(averaged_projection_map(hs, 1.0), 1000, 6, 5, scale=3.0).passed
    q = QuadraticTerm(random_spd(3, 8), rng.standard_normal(3))
    assert check_firmly_nonexpansive(lambda x: q.prox(x, 0.7), 1000, 7, 3, scale=3.0).passed
