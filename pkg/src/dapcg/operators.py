"""Closed-form proximal operators, projections and firmly nonexpansive maps.

Everything here works on dense 1-D ``numpy`` arrays.  Factorizations needed
by the quadratic operators are computed once when the owning object is built
and are never mutated afterwards, so the objects can be shared between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.linalg


class ProjectionError(RuntimeError):
    """Raised when an iterative projection runs out of budget.

    The best iterate found so far is kept on ``best`` so callers can decide
    whether it is good enough.
    """

    def __init__(self, message: str, best: np.ndarray):
        super().__init__(message)
        self.best = best


# --------------------------------------------------------------------------
# Half-spaces, balls, polyhedra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace:
    """The set ``{x : <x, normal> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.array(self.normal, dtype=float).ravel()
        if not np.all(np.isfinite(normal)) or np.linalg.norm(normal) == 0.0:
            raise ValueError("half-space normal must be finite and nonzero")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def violation(self, x: np.ndarray) -> float:
        """Euclidean distance from ``x`` to the half-space."""
        excess = float(np.dot(x, self.normal)) - self.offset
        return max(excess, 0.0) / float(np.linalg.norm(self.normal))

    def to_dict(self) -> dict:
        return {"normal": self.normal.tolist(), "offset": self.offset}

    @classmethod
    def from_dict(cls, data: dict) -> "HalfSpace":
        return cls(np.asarray(data["normal"], dtype=float), float(data["offset"]))


def project_halfspace(x: np.ndarray, hs: HalfSpace) -> np.ndarray:
    """Project ``x`` onto a half-space.

    Returns ``x`` unchanged (as a copy) when it already satisfies the
    constraint, otherwise moves it along the normal onto the boundary.
    """
    x = np.asarray(x, dtype=float)
    excess = float(np.dot(x, hs.normal)) - hs.offset
    if excess <= 0.0:
        return x.copy()
    return x - (excess / float(np.dot(hs.normal, hs.normal))) * hs.normal


def project_ball(x: np.ndarray, radius: float, center: np.ndarray | None = None) -> np.ndarray:
    """Project ``x`` onto the closed ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    shifted = x if center is None else x - center
    norm = float(np.linalg.norm(shifted))
    if norm <= radius:
        return x.copy()
    projected = (radius / norm) * shifted
    return projected if center is None else projected + center


def project_polyhedron(
    x: np.ndarray,
    halfspaces: Sequence[HalfSpace],
    tol: float = 1e-12,
    max_sweeps: int = 100_000,
) -> np.ndarray:
    """Euclidean projection onto an intersection of half-spaces.

    Uses Dykstra's cyclic algorithm with one correction vector per
    half-space.  Iteration stops once a full sweep moves the iterate by less
    than ``tol`` and every constraint holds to ``tol``.

    Raises
    ------
    ProjectionError
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    x = np.asarray(x, dtype=float)
    if not halfspaces:
        return x.copy()
    if all(float(np.dot(x, hs.normal)) <= hs.offset for hs in halfspaces):
        return x.copy()

    y = x.copy()
    corrections = [np.zeros_like(x) for _ in halfspaces]
    for _ in range(max_sweeps):
        y_start = y
        for j, hs in enumerate(halfspaces):
            shifted = y + corrections[j]
            y = project_halfspace(shifted, hs)
            corrections[j] = shifted - y
        moved = float(np.linalg.norm(y - y_start))
        if moved < tol and max(hs.violation(y) for hs in halfspaces) <= tol:
            return y
    raise ProjectionError(
        f"Dykstra projection did not reach tol={tol:g} in {max_sweeps} sweeps", y
    )


# --------------------------------------------------------------------------
# Quadratic terms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticTerm:
    """``q(x) = 0.5 x^T A x + a^T x`` with ``A`` symmetric PSD.

    Doubles as a prox-able term and as a smooth term.  The eigendecomposition
    of ``A`` is cached so ``(I + lam A)^{-1}`` is available for every ``lam``
    without refactorizing.
    """

    matrix: np.ndarray
    linear: np.ndarray
    _eigvals: np.ndarray = field(init=False, repr=False, compare=False)
    _eigvecs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        a = np.array(self.linear, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != a.size:
            raise ValueError("matrix must be square and match the linear term")
        if not np.allclose(A, A.T, atol=1e-12, rtol=0.0):
            raise ValueError("matrix must be symmetric")
        A = 0.5 * (A + A.T)
        w, V = np.linalg.eigh(A)
        if w[0] < -1e-10:
            raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
        w = np.clip(w, 0.0, None)
        for arr in (A, a, w, V):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "_eigvals", w)
        object.__setattr__(self, "_eigvecs", V)

    @property
    def dimension(self) -> int:
        return self.linear.size

    @property
    def spectral_norm(self) -> float:
        return float(self._eigvals[-1])

    @property
    def inverse_lipschitz(self) -> float:
        """``L`` such that the gradient is ``(1/L)``-Lipschitz."""
        norm = self.spectral_norm
        return np.inf if norm == 0.0 else 1.0 / norm

    def evaluate(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.matrix @ x + self.linear @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x + self.linear

    def prox(self, x: np.ndarray, lam: float) -> np.ndarray:
        return prox_quadratic(x, lam, self)

    def to_dict(self) -> dict:
        return {
            "kind": "quadratic",
            "matrix": self.matrix.tolist(),
            "linear": self.linear.tolist(),
        }


def prox_quadratic(x: np.ndarray, lam: float, q: QuadraticTerm) -> np.ndarray:
    """``argmin_y q(y) + ||y - x||^2 / (2 lam)``, i.e. ``(I + lam A)^{-1}(x - lam a)``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    V = q._eigvecs
    rhs = V.T @ (np.asarray(x, dtype=float) - lam * q.linear)
    return V @ (rhs / (1.0 + lam * q._eigvals))


def resolvent_gram(x: np.ndarray, gamma: float, A: np.ndarray) -> np.ndarray:
    """Solve ``(I + gamma A^T A) y = x``; the prox of ``0.5 gamma ||A y||^2``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    A = np.asarray(A, dtype=float)
    K = np.eye(A.shape[1]) + gamma * (A.T @ A)
    return scipy.linalg.solve(K, np.asarray(x, dtype=float), assume_a="pos")


def prox_hinge_abs(t):
    """Prox (unit step) of ``l(t) = max(|t| - 1, 0)``, elementwise.

    ``t`` for ``|t| < 1``, ``sign(t)`` on ``1 <= |t| <= 2`` and
    ``t - sign(t)`` beyond that.
    """
    t = np.asarray(t, dtype=float)
    mag = np.abs(t)
    out = np.where(mag < 1.0, t, np.where(mag <= 2.0, np.sign(t), t - np.sign(t)))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Fixed-point maps
# --------------------------------------------------------------------------


class FixedPointMap:
    """A callable map ``T`` together with a JSON-able recipe for rebuilding it.

    ``descriptor["kind"]`` names the construction; see
    :func:`dapcg.problem.map_from_dict` for the recognised kinds.
    """

    def __init__(self, apply: Callable[[np.ndarray], np.ndarray], descriptor: dict[str, Any]):
        self._apply = apply
        self.descriptor = descriptor

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(x, dtype=float))

    apply = __call__

    def __repr__(self) -> str:
        return f"FixedPointMap(kind={self.descriptor.get('kind')!r})"


def identity_map() -> FixedPointMap:
    return FixedPointMap(lambda x: x.copy(), {"kind": "identity"})


def gram_resolvent_map(A: np.ndarray, gamma: float = 1.0) -> FixedPointMap:
    """``x -> (I + gamma A^T A)^{-1} x`` with a cached Cholesky factor."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    A = np.array(A, dtype=float)
    factor = scipy.linalg.cho_factor(np.eye(A.shape[1]) + gamma * (A.T @ A))
    return FixedPointMap(
        lambda x: scipy.linalg.cho_solve(factor, x),
        {"kind": "gram_resolvent", "matrix": A.tolist(), "gamma": float(gamma)},
    )


def hinge_prox_map() -> FixedPointMap:
    """Componentwise :func:`prox_hinge_abs`; its fixed-point set is the cube ``[-1, 1]^N``."""
    return FixedPointMap(lambda x: np.asarray(prox_hinge_abs(x), dtype=float), {"kind": "hinge_prox"})


def averaged_projection_map(halfspaces: Sequence[HalfSpace], ball_radius: float) -> FixedPointMap:
    """``x -> (x + P_C(P_{E_1}(...P_{E_k}(x))))/2`` with ``C`` the centred ball.

    The last half-space in the list is applied first.
    """
    if ball_radius <= 0:
        raise ValueError("ball_radius must be positive")
    hs = tuple(halfspaces)

    def apply(x):
        y = x
        for h in reversed(hs):
            y = project_halfspace(y, h)
        return 0.5 * (x + project_ball(y, ball_radius))

    return FixedPointMap(
        apply,
        {
            "kind": "averaged_projection",
            "halfspaces": [h.to_dict() for h in hs],
            "ball_radius": float(ball_radius),
            "order": "last-first",
        },
    )


@dataclass
class FirmNonexpansivenessReport:
    samples: int
    max_violation: float
    passed: bool


def check_firmly_nonexpansive(
    T: Callable[[np.ndarray], np.ndarray],
    samples: int,
    seed: int,
    dimension: int,
    scale: float = 1.0,
    threshold: float = 1e-9,
) -> FirmNonexpansivenessReport:
    """Sample pairs and measure ``||Tx - Ty||^2 - <Tx - Ty, x - y>``.

    The map passes when the largest value is at most ``threshold``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(samples):
        x = scale * rng.standard_normal(dimension)
        y = scale * rng.standard_normal(dimension)
        diff = T(x) - T(y)
        worst = max(worst, float(diff @ diff - diff @ (x - y)))
    worst = max(worst, 0.0)
    return FirmNonexpansivenessReport(samples, worst, worst <= threshold)
