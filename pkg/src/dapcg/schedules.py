"""Power-law parameter schedules and their admissibility checks.

The four sequences are

    alpha_n  = 0.1     / (n + a_hat)^a        (Halpern weight)
    theta_n  = 0.1 * t / (n + q)^b            (inertia)
    lambda_n = 0.1     / (n + c_hat)^c        (prox / gradient step)
    beta_n   = 0.1     / (n + d_hat)^d        (conjugate-direction weight)

for ``n >= 1``.  :func:`validate_condition1` encodes the asymptotic
requirements on these sequences as exponent inequalities and backs them up
with numeric probes of the limit quotients.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

PREFACTOR = 0.1
PROBE_POINTS = (10**3, 10**4, 10**5, 10**6)


class ScheduleError(ValueError):
    """Raised when schedules are built from parameters that fail validation."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        names = ", ".join(v.name for v in report.failures)
        super().__init__(f"schedule parameters violate: {names}")


@dataclass(frozen=True)
class ScheduleParams:
    a: float
    a_hat: float
    b: float
    q: float
    t: float
    c: float
    c_hat: float
    d: float
    d_hat: float
    sigma: float | None = None

    def __post_init__(self):
        for name in ("a_hat", "c_hat", "q", "d_hat"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if self.sigma is not None and self.sigma < 1:
            raise ValueError("sigma must be >= 1")

    def replace(self, **changes) -> "ScheduleParams":
        data = asdict(self)
        data.update(changes)
        return ScheduleParams(**data)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown schedule keys: {sorted(unknown)}")
        missing = known - {"sigma"} - set(data)
        if missing:
            raise KeyError(f"missing schedule keys: {sorted(missing)}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class ScheduleSet:
    """Stateless generators for the four sequences.  Accepts scalar or array ``n``."""

    params: ScheduleParams

    def alpha(self, n):
        p = self.params
        return PREFACTOR / np.power(np.add(n, p.a_hat, dtype=float), p.a)

    def theta(self, n):
        p = self.params
        if p.t == 0:
            return np.zeros_like(np.asarray(n, dtype=float)) if np.ndim(n) else 0.0
        return PREFACTOR * p.t / np.power(np.add(n, p.q, dtype=float), p.b)

    def lam(self, n):
        p = self.params
        return PREFACTOR / np.power(np.add(n, p.c_hat, dtype=float), p.c)

    def beta(self, n):
        p = self.params
        return PREFACTOR / np.power(np.add(n, p.d_hat, dtype=float), p.d)

    def at(self, n: int) -> tuple[float, float, float, float]:
        """``(alpha_n, theta_n, lambda_n, beta_n)``."""
        return float(self.alpha(n)), float(self.theta(n)), float(self.lam(n)), float(self.beta(n))

    def sigma(self) -> float:
        return sigma_witness(self.params)


def sigma_witness(p: ScheduleParams) -> float:
    """``sup_n lambda_n / lambda_{n+1}``; the ratio decreases in ``n`` so it is attained at ``n = 1``."""
    return ((2.0 + p.c_hat) / (1.0 + p.c_hat)) ** p.c


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    verdicts: list[Verdict] = field(default_factory=list)
    sigma: float = 1.0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def failures(self) -> list[Verdict]:
        return [v for v in self.verdicts if not v.passed]

    def __getitem__(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "sigma": self.sigma,
            "verdicts": [asdict(v) for v in self.verdicts],
        }


def probe_points(p: ScheduleParams) -> np.ndarray:
    """:data:`PROBE_POINTS` scaled past the largest offset, where the power laws dominate."""
    base = max(1.0, p.a_hat, p.c_hat, p.q, p.d_hat)
    return base * np.asarray(PROBE_POINTS, dtype=float)


def _probe_quotients(s: ScheduleSet, n: np.ndarray) -> dict[str, np.ndarray]:
    # expm1/log1p keep the consecutive differences exact for large n
    p = s.params
    n = np.asarray(n, dtype=float)
    inv_lam_diff = (n + p.c_hat) ** p.c / PREFACTOR * np.expm1(p.c * np.log1p(1.0 / (n + p.c_hat)))
    alpha_ratio_gap = -np.expm1(-p.a * np.log1p(1.0 / (n + p.a_hat)))
    a1, l1 = s.alpha(n + 1), s.lam(n + 1)
    return {
        "C2": np.abs(inv_lam_diff) / a1,
        "C3": np.abs(alpha_ratio_gap) / l1,
        "C5": s.theta(n) / (a1 * l1),
        "C7": s.beta(n) / a1,
    }


def validate_condition1(p: ScheduleParams, L_min: float | None = None) -> ValidationReport:
    """Check the power-law parameters against the admissibility rules.

    Returns a report with one verdict per rule; nothing is raised.  Rules:

    * decay: every sequence decreases to zero (positive exponents; ``b`` only
      matters when ``t > 0``)
    * C1 ``a <= 1``, C2 ``a + c < 1``, C3 ``c < 1``, C4 ``a > c``,
      C5 ``b > a + c`` (vacuous when ``t = 0``), C6 ratio bound ``sigma``,
      C7 ``d > a``
    * the stricter working ranges ``c in (0, 1/2)``, ``a in (c, 1 - c)``,
      ``a_hat >= c_hat > 0``, ``q >= max(a_hat + 1, c_hat + 1)``,
      ``d_hat >= a_hat + 1``
    * value ranges at ``n = 1``: ``lambda_1 <= 2 L_min`` (skipped when
      ``L_min`` is None), ``theta_1 < 1``, ``alpha_1 <= 1``, ``beta_1 <= 1``
    * numeric probes: the C2/C3/C5/C7 quotients decrease over
      ``n = 1e3 .. 1e6`` times the largest offset (:func:`probe_points`)
    """
    s = ScheduleSet(p)
    report = ValidationReport(sigma=sigma_witness(p))
    add = report.verdicts.append
    inertia = p.t > 0

    add(Verdict("decay", p.a > 0 and p.c > 0 and p.d > 0 and (p.b > 0 or not inertia),
                f"a={p.a}, c={p.c}, d={p.d}, b={p.b}"))
    add(Verdict("C1", p.a <= 1, f"a={p.a} <= 1"))
    add(Verdict("C2", p.a + p.c < 1, f"a+c={p.a + p.c:g} < 1"))
    add(Verdict("C3", p.c < 1, f"c={p.c} < 1"))
    add(Verdict("C4", p.a > p.c, f"a={p.a} > c={p.c}"))
    add(Verdict("C5", (p.b > p.a + p.c) or not inertia,
                "t=0, no inertia" if not inertia else f"b={p.b} > a+c={p.a + p.c:g}"))
    if p.sigma is None:
        add(Verdict("C6", True, f"sigma witness {report.sigma:.17g}"))
    else:
        add(Verdict("C6", p.sigma >= report.sigma,
                    f"sigma={p.sigma} >= witness {report.sigma:.17g}"))
    add(Verdict("C7", p.d > p.a, f"d={p.d} > a={p.a}"))

    add(Verdict("c∈(0,1/2)", 0 < p.c < 0.5, f"c={p.c}"))
    add(Verdict("a∈(c,1-c)", p.c < p.a < 1 - p.c, f"a={p.a}, c={p.c}"))
    add(Verdict("â≥ĉ>0", p.a_hat >= p.c_hat > 0, f"a_hat={p.a_hat}, c_hat={p.c_hat}"))
    add(Verdict("q≥max{â+1,ĉ+1}", p.q >= max(p.a_hat + 1, p.c_hat + 1), f"q={p.q}"))
    add(Verdict("b>a+c", p.b > p.a + p.c, f"b={p.b}, a+c={p.a + p.c:g}"))
    add(Verdict("d̂≥â+1", p.d_hat >= p.a_hat + 1, f"d_hat={p.d_hat}"))
    add(Verdict("d>a", p.d > p.a, f"d={p.d}, a={p.a}"))

    alpha1, theta1, lam1, beta1 = s.at(1)
    if L_min is not None:
        add(Verdict("lambda_1<=2L_min", lam1 <= 2 * L_min, f"lambda_1={lam1:.6g}, 2 L_min={2 * L_min:.6g}"))
    add(Verdict("theta_1<1", theta1 < 1, f"theta_1={theta1:.6g}"))
    add(Verdict("alpha_1<=1", alpha1 <= 1, f"alpha_1={alpha1:.6g}"))
    add(Verdict("beta_1<=1", beta1 <= 1, f"beta_1={beta1:.6g}"))

    points = probe_points(p)
    probes = _probe_quotients(s, points)
    for name, values in probes.items():
        if name == "C5" and not inertia:
            continue
        ok = bool(np.all(np.isfinite(values)) and np.all(np.diff(values) < 0))
        add(Verdict(f"probe_{name}", ok, f"quotients at n={points[0]:.3g}..{points[-1]:.3g}: "
                    + ", ".join(f"{v:.3e}" for v in values)))
    return report


def build_schedules(p: ScheduleParams, L_min: float, override: bool = False) -> ScheduleSet:
    """Validate ``p`` and return the generators.

    With ``override=True`` failing parameters are accepted anyway; this is
    meant for reproducing experiments whose published parameters break the
    rules.
    """
    report = validate_condition1(p, L_min)
    if not report.passed and not override:
        raise ScheduleError(report)
    return ScheduleSet(p)


def fitted_params(
    L_min: float,
    a: float = 0.9,
    c: float = 0.05,
    offset: float = 1.0,
    t: float = 0.0,
    b: float | None = None,
    d: float | None = None,
    lam1: float | None = None,
    theta1: float | None = None,
) -> ScheduleParams:
    """Admissible parameters whose first step size fits under ``2 L_min``.

    ``c_hat`` (and with it ``a_hat``, ``q`` and ``d_hat``) is raised from
    ``offset`` just far enough that ``lambda_1 <= min(2 L_min, lam1)``.
    ``theta1``, when given, overrides ``t`` so that the first inertia
    weight equals it.
    """
    cap = 2.0 * L_min if lam1 is None else min(lam1, 2.0 * L_min)
    need = (PREFACTOR / cap) ** (1.0 / c) - 1.0
    c_hat = max(offset, need * (1 + 1e-12))
    a_hat = c_hat
    b = a + c + 0.5 if b is None else b
    d = min(a + 0.5, 1.0) if d is None else d
    if theta1 is not None:
        if not 0 <= theta1 < 1:
            raise ValueError("theta1 must lie in [0, 1)")
        t = theta1 * (1.0 + a_hat + 1.0) ** b / PREFACTOR
    return ScheduleParams(a=a, a_hat=a_hat, b=b, q=a_hat + 1, t=t, c=c, c_hat=c_hat, d=d, d_hat=a_hat + 1)


#: Parameters used for the ``R^5`` quadratic benchmark in the source experiments.
EXAMPLE2_PARAMS = ScheduleParams(a=0.1, a_hat=100, b=10, q=101, t=0.1, c=0.001, c_hat=100, d=1, d_hat=101)

#: Parameters quoted for the inertia on/off table of the ``R^3`` benchmark (``t = q = b = 2``).
#: They break ``c in (0, 1/2)`` and need ``override=True``.
TABLE1_PARAMS = ScheduleParams(a=0.5, a_hat=3, b=2, q=2, t=2, c=3, c_hat=0.01, d=3, d_hat=10)
