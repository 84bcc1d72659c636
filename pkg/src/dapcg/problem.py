"""Data model for multi-agent problems over common fixed-point sets.

A :class:`Problem` is a list of agents.  Agent ``i`` owns a prox-able term
``f_i``, a smooth term ``h_i``, a firmly nonexpansive map ``T_i``, an anchor
``u_i`` and optionally a bounded convex set ``X_i``.  The problem is

    minimize  sum_i f_i(x) + h_i(x)   subject to  x in  intersection_i Fix T_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from dapcg.operators import (
    FixedPointMap,
    HalfSpace,
    QuadraticTerm,
    averaged_projection_map,
    gram_resolvent_map,
    hinge_prox_map,
    identity_map,
    project_ball,
    project_polyhedron,
)

#: Value returned by indicator terms (and hence the objective) outside their set.
INFEASIBLE = math.inf

#: Slack used by :meth:`BoundingSet.contains` checks.
MEMBERSHIP_TOL = 1e-9


class DimensionError(ValueError):
    """A vector does not have the problem dimension, or is not finite."""


def as_vector(x, dimension: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float array, checking its length."""
    v = np.array(x, dtype=float).ravel()
    if dimension is not None and v.size != dimension:
        raise DimensionError(f"expected a vector of length {dimension}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise DimensionError("vector has non-finite entries")
    return v


# --------------------------------------------------------------------------
# Term protocols and simple implementations
# --------------------------------------------------------------------------


@runtime_checkable
class ProxableTerm(Protocol):
    def evaluate(self, x: np.ndarray) -> float: ...

    def prox(self, x: np.ndarray, lam: float) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


@runtime_checkable
class SmoothTerm(Protocol):
    inverse_lipschitz: float

    def evaluate(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


class ZeroTerm:
    """The zero function.  Its prox is the identity and its gradient vanishes."""

    inverse_lipschitz = math.inf

    def evaluate(self, x):
        return 0.0

    def prox(self, x, lam):
        return np.array(x, dtype=float)

    def gradient(self, x):
        return np.zeros_like(x, dtype=float)

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class SquaredDistance:
    """``h(x) = weight * ||x - center||^2``; gradient ``2 weight (x - center)``."""

    weight: float
    center: np.ndarray

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("weight must be positive")
        c = np.array(self.center, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def inverse_lipschitz(self) -> float:
        return 1.0 / (2.0 * self.weight)

    def evaluate(self, x):
        r = x - self.center
        return float(self.weight * (r @ r))

    def gradient(self, x):
        return 2.0 * self.weight * (x - self.center)

    def prox(self, x, lam):
        return (x + 2.0 * lam * self.weight * self.center) / (1.0 + 2.0 * lam * self.weight)

    def to_dict(self):
        return {"kind": "squared_distance", "weight": self.weight, "center": self.center.tolist()}


# --------------------------------------------------------------------------
# Bounding / constraint sets
# --------------------------------------------------------------------------


class BoundingSet:
    """A closed convex set with a projection and a distance-based membership test."""

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def violation(self, x: np.ndarray) -> float:
        """A nonnegative number that is zero exactly on the set."""
        raise NotImplementedError

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.violation(x) <= tol

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(BoundingSet):
    radius: float
    center: np.ndarray | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.center is not None:
            c = np.array(self.center, dtype=float).ravel()
            c.setflags(write=False)
            object.__setattr__(self, "center", c)

    def project(self, x):
        return project_ball(x, self.radius, self.center)

    def violation(self, x):
        r = x if self.center is None else x - self.center
        return max(float(np.linalg.norm(r)) - self.radius, 0.0)

    def to_dict(self):
        out = {"kind": "ball", "radius": self.radius}
        if self.center is not None:
            out["center"] = self.center.tolist()
        return out


@dataclass(frozen=True)
class Polyhedron(BoundingSet):
    """Intersection of half-spaces, projected onto with Dykstra's algorithm."""

    halfspaces: tuple[HalfSpace, ...]
    tol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        if not self.halfspaces:
            raise ValueError("polyhedron needs at least one half-space")

    def project(self, x):
        return project_polyhedron(x, self.halfspaces, tol=self.tol)

    def violation(self, x):
        return max(h.violation(x) for h in self.halfspaces)

    def to_dict(self):
        return {"kind": "polyhedron", "halfspaces": [h.to_dict() for h in self.halfspaces], "tol": self.tol}


class Indicator:
    """``delta_C``: zero on ``C`` and :data:`INFEASIBLE` elsewhere; prox is ``P_C``."""

    def __init__(self, region: BoundingSet):
        self.region = region

    def evaluate(self, x):
        return 0.0 if self.region.contains(x) else INFEASIBLE

    def prox(self, x, lam):
        return self.region.project(x)

    def to_dict(self):
        return {"kind": "indicator", "set": self.region.to_dict()}


# --------------------------------------------------------------------------
# Agents and problems
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    f: ProxableTerm
    h: SmoothTerm
    map: FixedPointMap
    anchor: np.ndarray
    bounding: BoundingSet | None = None

    def __post_init__(self):
        a = as_vector(self.anchor)
        a.setflags(write=False)
        object.__setattr__(self, "anchor", a)

    @property
    def inverse_lipschitz(self) -> float:
        return float(self.h.inverse_lipschitz)


@dataclass(frozen=True)
class Problem:
    dimension: int
    agents: tuple[AgentSpec, ...]
    known_solution: np.ndarray | None = None
    name: str = "problem"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        agents = tuple(self.agents)
        if not agents:
            raise ValueError("a problem needs at least one agent")
        for k, agent in enumerate(agents):
            if agent.anchor.size != self.dimension:
                raise DimensionError(f"agent {k} anchor has length {agent.anchor.size}")
        object.__setattr__(self, "agents", agents)
        if self.known_solution is not None:
            v = as_vector(self.known_solution, self.dimension)
            v.setflags(write=False)
            object.__setattr__(self, "known_solution", v)
            gap = feasibility_gap(self, v)
            if gap > 1e-9:
                raise ValueError(f"known_solution is not a common fixed point (gap {gap:.3e})")

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def min_inverse_lipschitz(self) -> float:
        return min(a.inverse_lipschitz for a in self.agents)

    def with_anchors(self, anchors: Sequence) -> "Problem":
        """Copy of the problem with every agent's anchor replaced."""
        if len(anchors) != self.num_agents:
            raise ValueError("need one anchor per agent")
        agents = tuple(
            AgentSpec(a.f, a.h, a.map, as_vector(u, self.dimension), a.bounding)
            for a, u in zip(self.agents, anchors)
        )
        return Problem(self.dimension, agents, self.known_solution, self.name, dict(self.meta))


def objective(problem: Problem, x) -> float:
    """``sum_i f_i(x) + h_i(x)``; :data:`INFEASIBLE` when an indicator is violated."""
    x = as_vector(x, problem.dimension)
    total = 0.0
    for agent in problem.agents:
        total += agent.f.evaluate(x) + agent.h.evaluate(x)
    return total


def feasibility_gap(problem: Problem, x) -> float:
    """``max_i ||T_i(x) - x||``, zero exactly on the common fixed-point set."""
    x = as_vector(x, problem.dimension)
    return max(float(np.linalg.norm(agent.map(x) - x)) for agent in problem.agents)


# --------------------------------------------------------------------------
# Descriptor round-tripping
# --------------------------------------------------------------------------


def set_from_dict(data: dict) -> BoundingSet:
    kind = data["kind"]
    if kind == "ball":
        return Ball(float(data["radius"]), data.get("center"))
    if kind == "polyhedron":
        hs = tuple(HalfSpace.from_dict(h) for h in data["halfspaces"])
        return Polyhedron(hs, float(data.get("tol", 1e-12)))
    if kind == "halfspace":
        return Polyhedron((HalfSpace.from_dict(data),))
    raise KeyError(f"unknown set kind {kind!r}")


def term_from_dict(data: dict):
    kind = data["kind"]
    if kind == "zero":
        return ZeroTerm()
    if kind == "quadratic":
        return QuadraticTerm(np.asarray(data["matrix"], dtype=float), np.asarray(data["linear"], dtype=float))
    if kind == "squared_distance":
        return SquaredDistance(float(data["weight"]), np.asarray(data["center"], dtype=float))
    if kind == "indicator":
        return Indicator(set_from_dict(data["set"]))
    raise KeyError(f"unknown term kind {kind!r}")


def map_from_dict(data: dict) -> FixedPointMap:
    kind = data["kind"]
    if kind == "identity":
        return identity_map()
    if kind == "gram_resolvent":
        return gram_resolvent_map(np.asarray(data["matrix"], dtype=float), float(data.get("gamma", 1.0)))
    if kind == "hinge_prox":
        return hinge_prox_map()
    if kind == "averaged_projection":
        hs = [HalfSpace.from_dict(h) for h in data["halfspaces"]]
        return averaged_projection_map(hs, float(data["ball_radius"]))
    raise KeyError(f"unknown map kind {kind!r}")
