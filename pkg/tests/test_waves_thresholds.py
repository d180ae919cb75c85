import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracpatch import (DomainError, Field, FitError, OperatorSpec, Outcome, PreconditionError,
                       Side, SimConfig, build_operator, fit_tail_exponent, make_grid,
                       scan_and_bisect, solve_wave, standard_model, standard_patch)
from fracpatch.waves import default_window


@settings(max_examples=25, deadline=None)
@given(p=st.floats(1.0, 4.0), amp=st.floats(0.1, 10.0))
def test_tail_fit_recovers_exact_power_law(p, amp):
    g = make_grid(50.0, 1001)
    f = Field(g, amp * np.maximum(np.abs(g.x), 1e-3) ** -p)
    fit = fit_tail_exponent(f, (5.0, 40.0), Side.LEFT)
    assert fit.slope == pytest.approx(-p, abs=1e-10)
    assert fit.slope_stderr < 1e-8
    assert fit.side is Side.LEFT


def test_tail_fit_errors():
    g = make_grid(10.0, 101)
    f = Field(g, np.exp(-g.x ** 2))
    with pytest.raises(FitError):
        fit_tail_exponent(f, (5.0, 2.0))
    with pytest.raises(FitError):
        fit_tail_exponent(f, (5.0, 20.0))
    with pytest.raises(FitError):
        fit_tail_exponent(f.with_values(np.zeros(101)), (2.0, 8.0))
    with pytest.raises(FitError):
        fit_tail_exponent(f, (2.0, 2.1))


def test_default_window():
    assert default_window(1.25, 64.0) == (5.0, 32.0)


def test_wave_from_both_sides_agrees():
    g = make_grid(16.0, 257)
    nl = standard_model(g, a0=2.0)
    op = build_operator(g, OperatorSpec(0.75), nl.potential)
    res = solve_wave(op, nl, SimConfig(dt=0.05, T_max=300), window=(5.0, 8.0))
    assert res.lambda1 < 0
    assert res.below.outcome is Outcome.STEADY and res.above.outcome is Outcome.STEADY
    assert res.uniqueness_ok and not res.partial
    assert res.below.provenance == "FromSubsolution"
    assert res.above.tail_fit is not None and res.above.tail_fit.slope < 0
    assert 0 < res.eps <= 1


def test_newton_refinement_reduces_residual():
    g = make_grid(16.0, 257)
    nl = standard_model(g, a0=2.0)
    op = build_operator(g, OperatorSpec(0.75), nl.potential)
    cfg = SimConfig(dt=0.05, T_max=300, steady_tol=1e-6)
    plain = solve_wave(op, nl, cfg)
    refined = solve_wave(op, nl, cfg, refine=True)
    assert refined.above.residual < plain.above.residual
    assert refined.above.residual < 1e-10


def test_wave_rejects_non_supersolution_level():
    g = make_grid(8.0, 129)
    nl = standard_model(g)
    op = build_operator(g, OperatorSpec(0.75), nl.potential)
    with pytest.raises(DomainError):
        solve_wave(op, nl, M=0.1)


def test_thresholds_bracket_sign_change():
    g = make_grid(16.0, 512)
    rep = scan_and_bisect(OperatorSpec(0.75), standard_patch(g), c_max=8.0, n_scan=9, bisect_tol=1e-2,
                          R_line_schedule=[4.0, 8.0, 16.0])
    assert rep.lambda_values[0] < 0 < rep.lambda_values[-1]
    lo, hi = rep.c_star_bracket
    assert hi - lo <= 1e-2
    assert rep.endpoint_lambdas[0][0] < 0 < rep.endpoint_lambdas[0][1]
    assert rep.monotone_observed
    assert rep.c_star_star_bracket == rep.c_star_bracket
    assert any("c_star bracket" in line for line in rep.summary_lines())


def test_thresholds_require_persistence_at_rest():
    g = make_grid(8.0, 129)
    with pytest.raises(PreconditionError):
        scan_and_bisect(OperatorSpec(0.75), standard_patch(g, a0=0.1), c_max=2.0, n_scan=3)


def test_thresholds_warn_when_outer_bracket_is_open():
    g = make_grid(8.0, 129)
    with pytest.warns(RuntimeWarning):
        rep = scan_and_bisect(OperatorSpec(0.75), standard_patch(g, a0=3.0), c_max=0.5, n_scan=3)
    assert rep.open_outer and rep.c_star_star_bracket is None


def test_thresholds_validate_arguments():
    g = make_grid(8.0, 129)
    with pytest.raises(DomainError):
        scan_and_bisect(OperatorSpec(0.75), standard_patch(g), c_max=-1.0)
    with pytest.raises(DomainError):
        scan_and_bisect(OperatorSpec(0.75), standard_patch(g), n_scan=1)
