"""Seeded benchmark instances and the inertia on/off comparison.

``example1``
    Two agents in ``R^3``: indicator of a half-space plus a weighted squared
    distance, with a Gram resolvent and a componentwise hinge prox as the
    fixed-point maps.  The common fixed-point set is ``{0}``.
``example2-s1`` / ``example2-s2``
    Four agents in ``R^5`` with random SPD quadratics, planted minimizer
    ``v = (1/sqrt(10), ..., 1/sqrt(10))`` and nested half-space/ball
    constraints.  ``s1`` splits each quadratic between the prox and the
    gradient term, ``s2`` puts all of it in the gradient term.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dapcg.diagnostics import ConvergenceReport
from dapcg.operators import (
    HalfSpace,
    QuadraticTerm,
    averaged_projection_map,
    gram_resolvent_map,
    hinge_prox_map,
)
from dapcg.problem import AgentSpec, Ball, Indicator, Polyhedron, Problem, SquaredDistance, ZeroTerm
from dapcg.schedules import ScheduleParams, fitted_params
from dapcg.solvers import DivergenceError, SolverConfig, run

BUILTINS = ("example1", "example2-s1", "example2-s2")


def random_spd(dimension: int, seed) -> np.ndarray:
    """``M^T M + 0.1 I`` for a standard normal ``M`` drawn from ``seed``."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    M = np.random.default_rng(seed).standard_normal((dimension, dimension))
    S = M.T @ M + 0.1 * np.eye(dimension)
    return 0.5 * (S + S.T)


def starting_points(seed: int, dimension: int) -> tuple[np.ndarray, np.ndarray]:
    """Standard normal ``(x0, x1)``, a pure function of ``seed``."""
    rng = np.random.default_rng([seed, 0xA5])
    return rng.standard_normal(dimension), rng.standard_normal(dimension)


# --------------------------------------------------------------------------
# Example 1
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Example1Config:
    seed: int = 0
    gamma: float = 1.0
    levels: tuple[float, float] = (1.0, 2.0)

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


EXAMPLE1_CENTERS = (np.zeros(3), np.array([2.0, 3.0, 4.0]))
EXAMPLE1_WEIGHTS = (1.0, 2.0)
EXAMPLE1_HALFSPACES = (
    HalfSpace(np.array([1.0, 0.0, 1.0]), 1.0),
    HalfSpace(np.array([4.0, 1.0, 4.0]), 4.0),
)


def pyramid(level: float) -> Polyhedron:
    """Square pyramid ``{|x1| + |x2| + x3 <= level, x3 >= -level}``, five faces."""
    normals = [(1, 1, 1), (-1, 1, 1), (1, -1, 1), (-1, -1, 1), (0, 0, -1)]
    return Polyhedron(tuple(HalfSpace(np.array(n, dtype=float), level) for n in normals))


def example1_matrix(seed: int) -> np.ndarray:
    """Upper Cholesky factor ``A`` of ``random_spd(3)``, so ``A^T A`` is SPD with eigenvalues >= 0.1."""
    return np.linalg.cholesky(random_spd(3, [seed, 1])).T


def build_example1(cfg: Example1Config = Example1Config()) -> Problem:
    x0, _ = starting_points(cfg.seed, 3)
    A = example1_matrix(cfg.seed)
    maps = (gram_resolvent_map(A, cfg.gamma), hinge_prox_map())
    agents = tuple(
        AgentSpec(
            f=Indicator(Polyhedron((EXAMPLE1_HALFSPACES[i],))),
            h=SquaredDistance(EXAMPLE1_WEIGHTS[i], EXAMPLE1_CENTERS[i]),
            map=maps[i],
            anchor=x0,
            bounding=pyramid(cfg.levels[i]),
        )
        for i in range(2)
    )
    # Fix of the Gram resolvent is ker A = {0}, and 0 is fixed by the hinge prox.
    return Problem(3, agents, known_solution=np.zeros(3), name="example1",
                   meta={"seed": cfg.seed, "gamma": cfg.gamma})


# --------------------------------------------------------------------------
# Example 2
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Example2Config:
    seed: int = 0
    setting: str = "s2"
    agents: int = 4
    dimension: int = 5

    def __post_init__(self):
        if self.setting not in ("s1", "s2"):
            raise ValueError("setting must be 's1' or 's2'")


def planted_solution(dimension: int = 5) -> np.ndarray:
    return np.full(dimension, 1.0 / math.sqrt(10.0))


def build_example2(cfg: Example2Config = Example2Config()) -> Problem:
    N, M = cfg.dimension, cfg.agents
    v = planted_solution(N)
    rng = np.random.default_rng([cfg.seed, 2])
    halfspaces = []
    for _ in range(M):
        normal = rng.standard_normal(N)
        slack = abs(rng.standard_normal()) + 0.1
        halfspaces.append(HalfSpace(normal, float(normal @ v) + slack))

    x0, _ = starting_points(cfg.seed, N)
    agents = []
    for i in range(M):
        A = random_spd(N, [cfg.seed, 10 + 2 * i])
        B = random_spd(N, [cfg.seed, 11 + 2 * i])
        Q = A + B
        q = -(Q @ v)
        if cfg.setting == "s1":
            f, h = QuadraticTerm(A, 0.5 * q), QuadraticTerm(B, 0.5 * q)
        else:
            f, h = ZeroTerm(), QuadraticTerm(Q, q)
        T = averaged_projection_map(halfspaces[: i + 1], 1.0)
        agents.append(AgentSpec(f=f, h=h, map=T, anchor=x0, bounding=Ball(1.0)))
    return Problem(N, tuple(agents), known_solution=v, name=f"example2-{cfg.setting}",
                   meta={"seed": cfg.seed, "setting": cfg.setting})


def quadratic_parts(problem: Problem) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(Q_i, q_i)`` of every agent of an Example 2 instance (both settings)."""
    parts = []
    for agent in problem.agents:
        Q = agent.h.matrix.copy()
        q = agent.h.linear.copy()
        if isinstance(agent.f, QuadraticTerm):
            Q = Q + agent.f.matrix
            q = q + agent.f.linear
        parts.append((Q, q))
    return parts


# --------------------------------------------------------------------------
# Instances and default schedules
# --------------------------------------------------------------------------


@dataclass
class BenchmarkInstance:
    name: str
    seed: int
    problem: Problem
    x0: np.ndarray
    x1: np.ndarray


def make_instance(name: str, seed: int = 0, gamma: float = 1.0) -> BenchmarkInstance:
    name = name.removeprefix("builtin:")
    if name == "example1":
        problem = build_example1(Example1Config(seed=seed, gamma=gamma))
        dim = 3
    elif name in ("example2-s1", "example2-s2"):
        problem = build_example2(Example2Config(seed=seed, setting=name[-2:]))
        dim = 5
    else:
        raise KeyError(f"unknown builtin problem {name!r}; choose from {BUILTINS}")
    x0, x1 = starting_points(seed, dim)
    return BenchmarkInstance(name, seed, problem, x0, x1)


#: First inertia weight used when inertia is switched on.
DEFAULT_THETA1 = 0.3

#: Example 1 first step.  ``||grad h(0)|| = 4 ||a_2|| ~ 21.5``, so
#: ``lambda_1 * 21.5`` stays under half the residual threshold 1e-2.
EXAMPLE1_LAMBDA1 = 2e-4


def default_params(name: str, problem: Problem, inertia: float | None = None) -> ScheduleParams:
    """Admissible schedule parameters used for the builtin problems.

    ``inertia`` is the first inertia weight ``theta_1``; it defaults to
    :data:`DEFAULT_THETA1` on ``example1`` and to 0 on the quadratic
    instances, where the extrapolation slows the incremental sweep.
    """
    name = name.removeprefix("builtin:")
    L = problem.min_inverse_lipschitz
    if name == "example1":
        theta1 = DEFAULT_THETA1 if inertia is None else inertia
        return fitted_params(L, a=0.5, c=0.49, b=1.0, d=1.0, lam1=EXAMPLE1_LAMBDA1, theta1=theta1)
    if name in ("example2-s1", "example2-s2"):
        theta1 = 0.0 if inertia is None else inertia
        return fitted_params(L, a=0.5, c=0.05, offset=1e4, b=1.0, d=1.0, theta1=theta1)
    raise KeyError(f"unknown builtin problem {name!r}; choose from {BUILTINS}")


def default_bounding(name: str) -> str:
    return "project_y"


# --------------------------------------------------------------------------
# Inertia on/off comparison
# --------------------------------------------------------------------------


@dataclass
class AblationCell:
    """All runs of one (algorithm, theta mode, tol) combination."""

    algorithm: str
    theta_mode: str  # "zero" | "nonzero"
    tol: float
    iterations: list[int] = field(default_factory=list)
    d_over_e: list[float] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def median_iterations(self) -> float:
        return float(np.median(self.iterations)) if self.iterations else math.nan

    @property
    def median_d_over_e(self) -> float:
        vals = [v for v in self.d_over_e if math.isfinite(v)]
        return float(np.median(vals)) if vals else math.nan

    @property
    def status(self) -> str:
        if self.errors:
            return "failed"
        return "converged" if self.converged and all(self.converged) else "not-converged"


@dataclass
class AblationTable:
    """Rows are ``algorithm x theta mode``, columns are tolerances."""

    tols: tuple[float, ...]
    cells: dict[tuple[str, str, float], AblationCell]
    seeds: tuple[int, ...]

    def cell(self, algorithm: str, theta_mode: str, tol: float) -> AblationCell:
        return self.cells[(algorithm, theta_mode, tol)]

    def rows(self) -> list[tuple[str, str]]:
        seen = []
        for alg, mode, _ in self.cells:
            if (alg, mode) not in seen:
                seen.append((alg, mode))
        return seen

    def header(self) -> list[str]:
        cols = ["algorithm", "theta"]
        for tol in self.tols:
            tag = format(tol, "g")
            cols += [f"iterations@{tag}", f"D_over_E@{tag}", f"status@{tag}"]
        return cols

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for alg, mode in self.rows():
                row = [alg, mode]
                for tol in self.tols:
                    c = self.cell(alg, mode, tol)
                    row += [format(c.median_iterations, ".17g"), format(c.median_d_over_e, ".17g"), c.status]
                writer.writerow(row)


def _final_d_over_e(report: ConvergenceReport) -> float:
    trace = report.trace
    if trace is None or len(trace) == 0:
        return math.nan
    E = trace.last("E")
    return trace.last("D") / E if E > 0 else math.nan


def ablation_theta(
    problem: str,
    seeds: Sequence[int],
    tols: Sequence[float] = (1e-4, 1e-5),
    config: SolverConfig = SolverConfig(),
    base_params: ScheduleParams | None = None,
    inertia: float = DEFAULT_THETA1,
    workers: int = 1,
) -> AblationTable:
    """Run both algorithms with and without inertia over ``seeds`` and ``tols``.

    Parameters
    ----------
    problem : str
        Builtin problem name.
    seeds : sequence of int
        At least two instance seeds.
    tols : sequence of float
        Stopping tolerances, one table column each.
    config : SolverConfig
        ``variant`` and ``tol`` are overridden per cell; ``max_iter`` and
        ``bounding_mode`` are used as given (``"none"`` is replaced by the
        problem's default bounding mode).
    base_params : ScheduleParams, optional
        Schedules with inertia.  Defaults to :func:`default_params` with
        ``theta_1 = inertia``.  The no-inertia row uses ``t = 0``.
    workers : int
        Cells may run in a thread pool; the table order does not depend on it.

    Solver errors are caught per run and mark the cell as failed.
    """
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 2:
        raise ValueError("ablation needs at least two seeds")
    tols = tuple(float(t) for t in tols)
    bounding = config.bounding_mode if config.bounding_mode != "none" else default_bounding(problem)
    instances = {seed: make_instance(problem, seed) for seed in seeds}

    def params_for(inst: BenchmarkInstance, mode: str) -> ScheduleParams:
        if base_params is None:
            base = default_params(problem, inst.problem, inertia=inertia)
        else:
            base = base_params
        return base.replace(t=0.0) if mode == "zero" else base

    jobs = []
    cells: dict[tuple[str, str, float], AblationCell] = {}
    for alg in ("incremental", "parallel"):
        for mode in ("zero", "nonzero"):
            for tol in tols:
                cells[(alg, mode, tol)] = AblationCell(alg, mode, tol)
                for seed in seeds:
                    jobs.append((alg, mode, tol, seed))

    def one(job):
        alg, mode, tol, seed = job
        inst = instances[seed]
        cfg = SolverConfig(
            variant=alg,
            bounding_mode=bounding,
            tol=tol,
            max_iter=config.max_iter,
            schedule_override=config.schedule_override,
        )
        try:
            return run(inst.problem, params_for(inst, mode), cfg, inst.x0, inst.x1), None
        except (DivergenceError, ValueError) as exc:
            return None, f"seed {seed}: {exc}"

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(job) for job in jobs]

    for (alg, mode, tol, _), (report, err) in zip(jobs, results):
        cell = cells[(alg, mode, tol)]
        if err is not None:
            cell.errors.append(err)
            continue
        cell.iterations.append(report.iterations)
        cell.d_over_e.append(_final_d_over_e(report))
        cell.converged.append(report.converged)
    return AblationTable(tols, cells, seeds)
