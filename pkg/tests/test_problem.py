import json

import numpy as np
import pytest

from dapcg.benchmarks import build_example1, build_example2, Example2Config, quadratic_parts, random_spd
from dapcg.io import ConfigError, load_problem, problem_from_dict, problem_to_dict, save_problem
from dapcg.operators import HalfSpace, QuadraticTerm, averaged_projection_map, identity_map
from dapcg.problem import (
    AgentSpec,
    Ball,
    DimensionError,
    Indicator,
    Polyhedron,
    Problem,
    SquaredDistance,
    ZeroTerm,
    as_vector,
    feasibility_gap,
    objective,
)

from oracles import central_gradient


def _smooth_terms(rng):
    return [
        SquaredDistance(1.0, np.zeros(3)),
        SquaredDistance(2.0, np.array([2.0, 3.0, 4.0])),
        QuadraticTerm(random_spd(3, 4), rng.standard_normal(3)),
        ZeroTerm(),
    ]


def test_gradients_match_finite_differences(rng):
    for term in _smooth_terms(rng):
        for _ in range(100):
            x = 2 * rng.standard_normal(3)
            g = term.gradient(x)
            fd = central_gradient(term.evaluate, x)
            assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_example1_gradient_is_twice_eta():
    h = SquaredDistance(2.0, np.array([2.0, 3.0, 4.0]))
    x = np.array([1.0, 1.0, 1.0])
    np.testing.assert_allclose(h.gradient(x), 4.0 * (x - h.center))
    # the display eta x - a differs from the true gradient
    assert np.linalg.norm(2.0 * x - h.center - h.gradient(x)) > 1.0
    assert h.inverse_lipschitz == 0.25


def test_gradient_lipschitz_bound(rng):
    for term in _smooth_terms(rng)[:3]:
        L = term.inverse_lipschitz
        for _ in range(100):
            x, y = rng.standard_normal((2, 3))
            assert np.linalg.norm(term.gradient(x) - term.gradient(y)) <= (1 / L) * np.linalg.norm(x - y) * (1 + 1e-12)


def test_quadratic_inverse_lipschitz_is_spectral_norm():
    A = random_spd(5, 2)
    q = QuadraticTerm(A, np.zeros(5))
    # power iteration
    v = np.ones(5)
    for _ in range(2000):
        v = A @ v
        v /= np.linalg.norm(v)
    assert 1 / q.inverse_lipschitz == pytest.approx(v @ A @ v, rel=1e-10)


def test_objective_example1_origin():
    assert objective(build_example1(), np.zeros(3)) == pytest.approx(58.0)


def test_objective_example2_identity():
    P = build_example2(Example2Config(seed=3))
    v = P.known_solution
    expected = -0.5 * sum(v @ Q @ v for Q, _ in quadratic_parts(P))
    assert objective(P, v) == pytest.approx(expected, rel=1e-12)


def test_objective_zero_terms(rng):
    agent = AgentSpec(ZeroTerm(), ZeroTerm(), identity_map(), np.zeros(4))
    P = Problem(4, (agent, agent))
    assert objective(P, rng.standard_normal(4)) == 0.0
    assert feasibility_gap(P, rng.standard_normal(4)) == 0.0


def test_objective_indicator_infinite():
    P = build_example1()
    assert objective(P, np.array([5.0, 0.0, 5.0])) == np.inf


def test_feasibility_gap_examples():
    assert feasibility_gap(build_example2(Example2Config(seed=1)), np.full(5, 1 / np.sqrt(10))) <= 1e-9
    T = averaged_projection_map([HalfSpace(np.array([1.0]), 1.0), HalfSpace(np.array([-1.0]), 1.0)], 1e6)
    P = Problem(1, (AgentSpec(ZeroTerm(), ZeroTerm(), T, np.zeros(1)),))
    assert feasibility_gap(P, np.array([3.0])) == pytest.approx(1.0)
    assert feasibility_gap(build_example1(), np.zeros(3)) == 0.0


def test_objective_convex_along_segments(rng):
    P = build_example2(Example2Config(seed=0, setting="s1"))
    for _ in range(200):
        x, y = rng.standard_normal((2, 5))
        t = rng.uniform()
        lhs = objective(P, t * x + (1 - t) * y)
        assert lhs <= t * objective(P, x) + (1 - t) * objective(P, y) + 1e-9


def test_planted_solution_minimizes_over_feasible_samples(rng):
    P = build_example2(Example2Config(seed=2))
    v = P.known_solution
    psi_v = objective(P, v)
    hits = 0
    for _ in range(500):
        x = v + 0.3 * rng.standard_normal(5)
        if feasibility_gap(P, x) <= 1e-12:
            hits += 1
            assert psi_v <= objective(P, x) + 1e-9
    assert hits > 10


def test_known_solution_must_be_feasible():
    agent = AgentSpec(ZeroTerm(), ZeroTerm(), averaged_projection_map([], 1.0), np.zeros(2))
    with pytest.raises(ValueError):
        Problem(2, (agent,), known_solution=np.array([3.0, 0.0]))


def test_dimension_checks():
    with pytest.raises(DimensionError):
        as_vector([1.0, np.nan])
    with pytest.raises(DimensionError):
        as_vector([1.0, 2.0], 3)
    agent = AgentSpec(ZeroTerm(), ZeroTerm(), identity_map(), np.zeros(2))
    with pytest.raises(DimensionError):
        Problem(3, (agent,))
    with pytest.raises(ValueError):
        Problem(2, ())


def test_with_anchors_replaces_all():
    P = build_example1()
    Q = P.with_anchors([np.ones(3), 2 * np.ones(3)])
    np.testing.assert_array_equal(Q.agents[1].anchor, 2 * np.ones(3))
    with pytest.raises(ValueError):
        P.with_anchors([np.ones(3)])


# --- JSON round trip ---------------------------------------------------------------------


@pytest.mark.parametrize("builder", [
    lambda: build_example1(),
    lambda: build_example2(Example2Config(seed=4, setting="s1")),
    lambda: build_example2(Example2Config(seed=4, setting="s2")),
])
def test_problem_json_round_trip(tmp_path, rng, builder):
    P = builder()
    x0 = rng.standard_normal(P.dimension)
    save_problem(tmp_path / "p.json", P, x0, x0)
    Q, y0, y1 = load_problem(tmp_path / "p.json")
    np.testing.assert_array_equal(y0, x0)
    assert Q.num_agents == P.num_agents
    np.testing.assert_array_equal(Q.known_solution, P.known_solution)
    for _ in range(20):
        x = 2 * rng.standard_normal(P.dimension)
        lam = float(rng.uniform(0.01, 1))
        for a, b in zip(P.agents, Q.agents):
            np.testing.assert_array_equal(a.map(x), b.map(x))
            np.testing.assert_array_equal(a.f.prox(x, lam), b.f.prox(x, lam))
            np.testing.assert_array_equal(a.h.gradient(x), b.h.gradient(x))
            np.testing.assert_array_equal(a.bounding.project(x), b.bounding.project(x))
    assert problem_to_dict(Q) == problem_to_dict(P)


def test_problem_json_errors_point_at_key():
    doc = problem_to_dict(build_example1())
    bad = json.loads(json.dumps(doc))
    del bad["agents"][1]["map"]
    with pytest.raises(ConfigError) as info:
        problem_from_dict(bad)
    assert info.value.key == "agents[1].map"

    bad = json.loads(json.dumps(doc))
    bad["agents"][0]["h"]["kind"] = "mystery"
    with pytest.raises(ConfigError) as info:
        problem_from_dict(bad)
    assert info.value.key == "agents[0].h"

    bad = dict(doc, schema_version=99)
    with pytest.raises(ConfigError) as info:
        problem_from_dict(bad)
    assert info.value.key == "schema_version"

    bad = dict(doc, x0=[1.0, 2.0])
    with pytest.raises(ConfigError) as info:
        problem_from_dict(bad)
    assert info.value.key == "x0"


def test_bounding_set_round_trip():
    P = Problem(2, (AgentSpec(Indicator(Ball(2.0, np.array([1.0, 0.0]))), ZeroTerm(), identity_map(), np.zeros(2),
                              Polyhedron((HalfSpace(np.array([1.0, 1.0]), 1.0),))),))
    Q, _, _ = problem_from_dict(problem_to_dict(P))
    np.testing.assert_array_equal(Q.agents[0].f.region.center, [1.0, 0.0])
    assert Q.agents[0].bounding.contains(np.zeros(2))
