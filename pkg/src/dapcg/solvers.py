"""Incremental and parallel inertial proximal conjugate-gradient Halpern solvers.

One outer iteration ``n`` visits every agent ``i`` with

    z      = w + theta_n (w - w_prev)                 inertial extrapolation
    d_i    = -grad h_i(z) + beta_n d_i                conjugate direction
    y_i    = prox_{lambda_n f_i}(z + lambda_n d_i)    forward-backward step
    w_next = alpha_n u_i + (1 - alpha_n) T_i(y_i)     Halpern step

The incremental variant chains the agents (agent ``i + 1`` starts from agent
``i``'s output, ``x_{n+1}`` is the last output); the parallel variant feeds
all agents the same extrapolated point and averages their outputs.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from dapcg.diagnostics import ConvergenceReport, IterationTrace, certify
from dapcg.problem import AgentSpec, Problem, as_vector, feasibility_gap, objective
from dapcg.schedules import ScheduleParams, ScheduleSet, build_schedules

log = logging.getLogger(__name__)

VARIANTS = ("incremental", "parallel")
BOUNDING_MODES = ("none", "project_y", "project_w")


class DivergenceError(RuntimeError):
    """An iterate became non-finite.  The partial trace is attached."""

    def __init__(self, message: str, trace: IterationTrace | None = None, state: "SolverState | None" = None):
        super().__init__(message)
        self.trace = trace
        self.state = state


@dataclass(frozen=True)
class SolverConfig:
    variant: str = "incremental"
    bounding_mode: str = "none"
    tol: float = 1e-4
    max_iter: int = 10_000
    record_trace: bool = False
    schedule_override: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.bounding_mode not in BOUNDING_MODES:
            raise ValueError(f"bounding_mode must be one of {BOUNDING_MODES}")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass
class SolverState:
    """State at the start of outer iteration ``n``.

    ``w`` is the chain ``[w^(1), ..., w^(M+1)]`` produced by the previous
    sweep (for ``n = 1`` every entry is ``x0``) and ``w_prev`` the chain
    before that.  ``z``, ``y`` and ``Ty`` are the per-agent points of the
    previous sweep and are empty before the first one.
    """

    n: int
    x_prev: np.ndarray
    x_curr: np.ndarray
    w: list[np.ndarray]
    d: list[np.ndarray]
    w_prev: list[np.ndarray] = field(default_factory=list)
    z: list[np.ndarray] = field(default_factory=list)
    y: list[np.ndarray] = field(default_factory=list)
    Ty: list[np.ndarray] = field(default_factory=list)


def inertial_extrapolate(w_curr: np.ndarray, w_prev: np.ndarray, theta: float) -> np.ndarray:
    return w_curr + theta * (w_curr - w_prev)


def conjugate_direction(grad_at_z: np.ndarray, beta: float, d_prev: np.ndarray) -> np.ndarray:
    return -grad_at_z + beta * d_prev


def halpern_step(anchor: np.ndarray, mapped: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * anchor + (1.0 - alpha) * mapped


def stopping_check(E_n: float, x0_norm: float, x1_norm: float, tol: float) -> bool:
    """``E_n / (10 max(||x1||, ||x0||)) <= tol``; the denominator is 10 when both norms vanish."""
    return E_n / stopping_scale(x0_norm, x1_norm) <= tol


def stopping_scale(x0_norm: float, x1_norm: float) -> float:
    m = max(x0_norm, x1_norm)
    return 10.0 * m if m > 0 else 10.0


def initial_state(problem: Problem, x0, x1) -> SolverState:
    """State at ``n = 1`` with ``w^(i)_0 = z_0 = x0`` and ``d_1 = -grad h_i(x0)``."""
    x0 = as_vector(x0, problem.dimension)
    x1 = as_vector(x1, problem.dimension)
    w = [x0.copy() for _ in range(problem.num_agents + 1)]
    d = [-agent.h.gradient(x0) for agent in problem.agents]
    return SolverState(n=1, x_prev=x0.copy(), x_curr=x1.copy(), w=w, d=d, w_prev=list(w))


def _agent_update(agent: AgentSpec, z, d_prev, alpha, lam, beta, mode):
    d_next = conjugate_direction(agent.h.gradient(z), beta, d_prev)
    y = agent.f.prox(z + lam * d_next, lam)
    if mode == "project_y":
        y = agent.bounding.project(y)
    Ty = agent.map(y)
    w_next = halpern_step(agent.anchor, Ty, alpha)
    if mode == "project_w":
        w_next = agent.bounding.project(w_next)
    return d_next, y, Ty, w_next


def incremental_sweep(state: SolverState, problem: Problem, schedules: ScheduleSet, config: SolverConfig) -> SolverState:
    """One outer iteration of the incremental (agent-by-agent) method."""
    alpha, theta, lam, beta = schedules.at(state.n)
    chain = [state.x_curr]
    zs, ys, Tys, ds = [], [], [], []
    for i, agent in enumerate(problem.agents):
        z = inertial_extrapolate(chain[i], state.w[i], theta)
        d_next, y, Ty, w_next = _agent_update(agent, z, state.d[i], alpha, lam, beta, config.bounding_mode)
        zs.append(z)
        ys.append(y)
        Tys.append(Ty)
        ds.append(d_next)
        chain.append(w_next)
    return SolverState(state.n + 1, state.x_curr, chain[-1], chain, ds, state.w, zs, ys, Tys)


def parallel_sweep(
    state: SolverState,
    problem: Problem,
    schedules: ScheduleSet,
    config: SolverConfig,
    executor: ThreadPoolExecutor | None = None,
) -> SolverState:
    """One outer iteration of the parallel method.

    Agent updates are independent and go to ``executor`` when one is given.
    Outputs are averaged in agent order so results do not depend on which
    worker finished first.
    """
    n = state.n
    alpha, theta, lam, beta = schedules.at(n)
    z = inertial_extrapolate(state.x_curr, state.x_prev, theta)
    mode = config.bounding_mode
    args = [(agent, z, state.d[i], alpha, lam, beta, mode) for i, agent in enumerate(problem.agents)]
    if executor is None:
        results = [_agent_update(*a) for a in args]
    else:
        results = list(executor.map(lambda a: _agent_update(*a), args))
    ds = [r[0] for r in results]
    ys = [r[1] for r in results]
    Tys = [r[2] for r in results]
    outs = [r[3] for r in results]
    total = outs[0]
    for w in outs[1:]:
        total = total + w
    x_next = total / len(outs)
    chain = [state.x_curr] + outs
    return SolverState(n + 1, state.x_curr, x_next, chain, ds, state.w, [z] * len(outs), ys, Tys)


def _subsample_indices(max_iter: int, points: int = 10) -> set[int]:
    if max_iter < 1:
        return set()
    return {int(round(v)) for v in np.geomspace(1, max_iter, points)}


def _record(trace, problem, state, new, lam, E, bounding_mode):
    M = problem.num_agents
    D = E + sum(float(np.linalg.norm(new.w[k] - state.w[k])) for k in range(1, M + 1))
    if bounding_mode == "none":
        viol = math.nan
    else:
        pts = new.y if bounding_mode == "project_y" else new.w[1:]
        viol = max(agent.bounding.violation(p) for agent, p in zip(problem.agents, pts))
    trace.append(
        n=state.n,
        E=E,
        E_over_lambda=E / lam,
        psi=objective(problem, new.x_curr),
        feas_gap=feasibility_gap(problem, new.x_curr),
        max_z_minus_y=max(float(np.linalg.norm(z - y)) for z, y in zip(new.z, new.y)),
        max_Ty_minus_y=max(float(np.linalg.norm(t - y)) for t, y in zip(new.Ty, new.y)),
        D=D,
        bound_viol=viol,
        **{"lambda": lam},
    )


def run(
    problem: Problem,
    schedules: ScheduleSet | ScheduleParams,
    config: SolverConfig,
    x0,
    x1,
    anchors: Sequence | None = None,
    callback: Callable[[SolverState], None] | None = None,
) -> ConvergenceReport:
    """Iterate until the relative step ``E(n) / (10 max(||x0||, ||x1||))`` drops to ``tol``.

    Parameters
    ----------
    problem : Problem
    schedules : ScheduleSet or ScheduleParams
        Validated against ``problem``'s smallest inverse Lipschitz constant;
        invalid parameters raise :class:`~dapcg.schedules.ScheduleError` unless
        ``config.schedule_override`` is set.
    config : SolverConfig
    x0, x1 : array_like
        The two starting points.  ``x0`` also seeds ``w^(i)_0``, ``z_0`` and
        the first conjugate directions.
    anchors : sequence of array_like, optional
        Halpern anchors replacing the ones stored on the agents.
    callback : callable, optional
        Called with the new :class:`SolverState` after every sweep.

    Returns
    -------
    ConvergenceReport
        ``converged`` is False when ``max_iter`` sweeps pass without meeting
        the tolerance.  Certificates are attached when ``config.record_trace``
        is set.

    Raises
    ------
    DivergenceError
        If an iterate stops being finite.
    """
    if anchors is not None:
        problem = problem.with_anchors(anchors)
    params = schedules.params if isinstance(schedules, ScheduleSet) else schedules
    schedules = build_schedules(params, problem.min_inverse_lipschitz, override=config.schedule_override)
    if config.bounding_mode != "none":
        missing = [k for k, a in enumerate(problem.agents) if a.bounding is None]
        if missing:
            raise ValueError(f"bounding_mode={config.bounding_mode} but agents {missing} have no bounding set")

    state = initial_state(problem, x0, x1)
    scale = stopping_scale(float(np.linalg.norm(state.x_prev)), float(np.linalg.norm(state.x_curr)))
    trace = IterationTrace(meta={
        "tol": config.tol,
        "scale": scale,
        "lambda_1": float(schedules.lam(1)),
        "variant": config.variant,
        "bounding_mode": config.bounding_mode,
        "complete": config.record_trace,
    })
    keep = None if config.record_trace else _subsample_indices(config.max_iter)
    sweep = incremental_sweep if config.variant == "incremental" else parallel_sweep
    executor = ThreadPoolExecutor(config.workers) if config.variant == "parallel" and config.workers > 1 else None

    converged = False
    E = math.nan
    t_start = time.perf_counter()
    # overflow is reported through DivergenceError instead
    errstate = np.errstate(over="ignore", invalid="ignore")
    errstate.__enter__()
    try:
        while state.n <= config.max_iter:
            lam = float(schedules.lam(state.n))
            if executor is not None:
                new = parallel_sweep(state, problem, schedules, config, executor)
            else:
                new = sweep(state, problem, schedules, config)
            if not np.all(np.isfinite(new.x_curr)) or not all(np.all(np.isfinite(y)) for y in new.y):
                raise DivergenceError(f"non-finite iterate at n={state.n}", trace, new)
            E = float(np.linalg.norm(new.x_curr - new.x_prev))
            # tol = 0 never stops early
            converged = config.tol > 0 and E / scale <= config.tol
            last = converged or state.n == config.max_iter
            if keep is None or state.n in keep or last:
                _record(trace, problem, state, new, lam, E, config.bounding_mode)
            if callback is not None:
                callback(new)
            state = new
            if converged:
                break
    finally:
        errstate.__exit__(None, None, None)
        if executor is not None:
            executor.shutdown()
    elapsed = time.perf_counter() - t_start

    iterations = state.n - 1
    log.debug("%s run: %d iterations, E=%.3e, converged=%s", config.variant, iterations, E, converged)
    report = ConvergenceReport(
        converged=converged,
        iterations=iterations,
        final_x=state.x_curr.copy(),
        final_E=E,
        wall_time=elapsed,
        trace=trace,
    )
    if config.record_trace:
        report.certificates = certify(trace, problem, problem.known_solution)
        if problem.known_solution is not None:
            report.oracle_gap = float(np.linalg.norm(state.x_curr - problem.known_solution))
    return report
