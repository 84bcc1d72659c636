import numpy as np
import pytest

from dapcg.schedules import (
    EXAMPLE2_PARAMS,
    TABLE1_PARAMS,
    ScheduleError,
    ScheduleParams,
    ScheduleSet,
    build_schedules,
    fitted_params,
    sigma_witness,
    validate_condition1,
)

CORE = ["decay", "C1", "C2", "C3", "C4", "C5", "C6", "C7"]
STRICT = ["c∈(0,1/2)", "a∈(c,1-c)", "â≥ĉ>0", "q≥max{â+1,ĉ+1}", "b>a+c", "d̂≥â+1", "d>a"]

DERIVED = ScheduleParams(a=0.3, a_hat=1, b=0.6, q=2, t=1, c=0.2, c_hat=1, d=0.5, d_hat=2)


def test_formulas():
    s = ScheduleSet(DERIVED)
    assert s.alpha(1) == pytest.approx(0.1 / 2**0.3)
    assert s.theta(1) == pytest.approx(0.1 / 3**0.6)
    assert s.lam(1) == pytest.approx(0.1 / 2**0.2)
    assert s.beta(1) == pytest.approx(0.1 / 3**0.5)
    n = np.arange(1, 6)
    np.testing.assert_allclose(s.alpha(n), [s.alpha(k) for k in n])


def test_zero_t_means_no_inertia():
    s = ScheduleSet(DERIVED.replace(t=0.0))
    assert s.theta(1) == 0.0
    assert np.all(s.theta(np.arange(1, 100)) == 0.0)


def test_sequences_decrease_to_zero():
    s = ScheduleSet(EXAMPLE2_PARAMS)
    n = np.array([1, 10, 100, 1e4, 1e8])
    for seq in (s.alpha, s.theta, s.lam, s.beta):
        assert np.all(np.diff(seq(n)) < 0)


def test_example2_params_pass_everything():
    rep = validate_condition1(EXAMPLE2_PARAMS)
    assert rep.passed, [v.name for v in rep.failures]
    for name in CORE + STRICT:
        assert rep[name].passed


def test_derived_example_valid():
    rep = validate_condition1(DERIVED, L_min=1.0)
    assert rep.passed, [v.name for v in rep.failures]


def test_table1_params_fail_c_range():
    rep = validate_condition1(TABLE1_PARAMS)
    assert not rep.passed
    assert not rep["c∈(0,1/2)"].passed


def test_a_plus_c_too_large():
    p = DERIVED.replace(a=0.9, c=0.2, b=1.5)
    rep = validate_condition1(p)
    assert not rep["C2"].passed
    assert not rep["a∈(c,1-c)"].passed
    assert not rep["probe_C2"].passed


def test_probe_quotient_grows_when_c2_fails():
    s = ScheduleSet(DERIVED.replace(a=0.9, c=0.2))
    n = np.array([1e3, 1e6])
    q = np.abs(1 / s.lam(n + 1) - 1 / s.lam(n)) / s.alpha(n + 1)
    assert q[1] > q[0]


def test_lambda_range_check():
    rep = validate_condition1(DERIVED, L_min=0.01)
    assert not rep["lambda_1<=2L_min"].passed
    assert "lambda_1<=2L_min" not in [v.name for v in validate_condition1(DERIVED).verdicts]


def test_c5_vacuous_without_inertia():
    p = DERIVED.replace(t=0.0, b=0.1)
    rep = validate_condition1(p)
    assert rep["C5"].passed
    assert not rep["b>a+c"].passed


def test_sigma_witness_is_sup_ratio():
    p = DERIVED
    s = ScheduleSet(p)
    n = np.arange(1, 100_000)
    assert sigma_witness(p) == pytest.approx(np.max(s.lam(n) / s.lam(n + 1)), rel=1e-12)
    assert validate_condition1(p.replace(sigma=sigma_witness(p) * 1.01))["C6"].passed
    assert not validate_condition1(p.replace(sigma=1.0))["C6"].passed


def test_build_schedules_raises_unless_override():
    with pytest.raises(ScheduleError) as info:
        build_schedules(TABLE1_PARAMS, 1.0)
    assert not info.value.report.passed
    assert isinstance(build_schedules(TABLE1_PARAMS, 1.0, override=True), ScheduleSet)


@pytest.mark.parametrize("L", [1e-3, 0.033, 0.25, 10.0])
@pytest.mark.parametrize("a,c", [(0.5, 0.49), (0.9, 0.05), (0.5, 0.05)])
def test_fitted_params_admissible(L, a, c):
    p = fitted_params(L, a=a, c=c, theta1=0.3)
    rep = validate_condition1(p, L)
    assert rep.passed, [v.name for v in rep.failures]
    assert ScheduleSet(p).theta(1) == pytest.approx(0.3)
    assert ScheduleSet(p).lam(1) <= 2 * L


def test_fitted_params_lam1_cap():
    p = fitted_params(0.25, a=0.5, c=0.49, lam1=2e-4)
    assert ScheduleSet(p).lam(1) == pytest.approx(2e-4, rel=1e-9)


def test_params_dict_round_trip():
    assert ScheduleParams.from_dict(EXAMPLE2_PARAMS.to_dict()) == EXAMPLE2_PARAMS
    with pytest.raises(KeyError):
        ScheduleParams.from_dict({**EXAMPLE2_PARAMS.to_dict(), "zeta": 1})
    with pytest.raises(KeyError):
        ScheduleParams.from_dict({"a": 1})


def test_params_reject_nonpositive_offsets():
    with pytest.raises(ValueError):
        DERIVED.replace(c_hat=0.0)
    with pytest.raises(ValueError):
        DERIVED.replace(t=-1.0)
