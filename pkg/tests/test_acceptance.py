"""Acceptance criteria 1-13.

Each test records a one-line PASS/FAIL verdict (shown in the terminal
summary) and then asserts it, so a failing criterion stays visible as a
failing test.
"""

from functools import lru_cache

import numpy as np
import pytest
from scipy import optimize

from fracpatch import (Analytic, EigenOptions, Field, Monotonicity, OperatorSpec, Outcome,
                       SimConfig, Side, bench_matvec, build_operator, custom,
                       dense_principal_eigenvalue, drift_symmetry_check, evolve,
                       fit_tail_exponent, make_grid, principal_eigen, scan_and_bisect,
                       solve_wave, standard_model, standard_patch)
from fracpatch.grid import Constant
from fracpatch.kpp import Barrier, admissible_kappa, certify_barrier, patch_radius

TIGHT = EigenOptions(tol=1e-11)


def _fitted_order(h, err):
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _random_potential(rng, grid, n_bumps=3):
    """Smooth random a(x) that is -nu outside a few units of the origin."""
    x = grid.x
    nu = rng.uniform(0.5, 1.5)
    a = np.full_like(x, -nu)
    for _ in range(n_bumps):
        centre, width, amp = rng.uniform(-3, 3), rng.uniform(0.5, 2), rng.uniform(0.5, 3)
        a += amp * np.exp(-((x - centre) / width) ** 2)
    return Field(grid, a, Constant(-nu, -nu))


def _lambda(grid, a, c=0.0, R=None, s=0.75):
    return principal_eigen(build_operator(grid, OperatorSpec(s, c), a), R, TIGHT).lambda1


@lru_cache(maxsize=None)
def _tuned_a0(s, target, L=64.0, N=2048):
    """a0 of the standard patch with whole-domain lambda1 equal to target."""
    grid = make_grid(L, N)

    def gap(a0):
        return _lambda(grid, standard_patch(grid, a0), s=s) - target

    return optimize.brentq(gap, 0.3, 6.0, xtol=1e-10)


# ----------------------------------------------------------------------------
def test_criterion_01_operator_symbol(record):
    Ns = np.array([512, 1024, 2048, 4096])
    L = 64 * np.pi
    worst_err, worst_order = 0.0, np.inf
    for s in (0.6, 0.75, 0.9):
        for xi in (0.5, 1.0, 2.0):
            errs = []
            for N in Ns:
                grid = make_grid(L, N)
                op = build_operator(grid, OperatorSpec(s, normalization="paper"))
                i0 = int(np.argmin(np.abs(grid.x)))
                x0 = grid.x[i0]
                u = Field(grid, np.cos(xi * grid.x), Analytic(lambda y, k=xi: np.cos(k * y)))
                exact = -xi ** (2 * s) * np.cos(xi * x0)
                errs.append(abs(op.apply(u).values[i0] - exact) / abs(exact))
            worst_err = max(worst_err, errs[-1])
            worst_order = min(worst_order, _fitted_order(2 * L / Ns, errs))
    ok = record(1, worst_err <= 1e-3 and worst_order >= 1.8,
                f"max rel error at N=4096 = {worst_err:.2e} (<= 1e-3), min order = {worst_order:.2f} (>= 1.8)")
    assert ok


def test_criterion_02_fundamental_solution(record):
    details, ok = [], True
    for s in (0.6, 0.75, 0.9):
        vals = []
        for N in (512, 1024, 2048, 4096):
            grid = make_grid(63.0, N)
            op = build_operator(grid, OperatorSpec(s, normalization="paper"))
            u = Field.from_function(grid, lambda y: np.abs(y) ** (2 * s - 1), analytic=True)
            i = int(np.argmin(np.abs(grid.x - 1.0)))
            vals.append(abs(op.apply(u).values[i]))
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        ok &= vals[-1] <= 5e-4 and decreasing
        details.append(f"s={s}: {vals[-1]:.2e}{'' if decreasing else ' (not decreasing)'}")
    record(2, ok, "|value| at N=4096 (<= 5e-4): " + ", ".join(details))
    assert ok


def test_criterion_03_eigen_oracle(record, rng):
    grid = make_grid(16.0, 512)
    worst = 0.0
    for _ in range(10):
        a = _random_potential(rng, grid)
        op = build_operator(grid, OperatorSpec(rng.uniform(0.55, 0.95), rng.uniform(-4, 4)), a)
        worst = max(worst, abs(principal_eigen(op).lambda1 - dense_principal_eigenvalue(op)))
    ok = record(3, worst <= 1e-8, f"max |power - dense| over 10 instances = {worst:.2e} (<= 1e-8)")
    assert ok


def test_criterion_04_eigenvalue_properties(record, rng):
    grid = make_grid(16.0, 256)
    tol = 1e-9
    worst = {"domain": -np.inf, "potential": -np.inf, "lipschitz": -np.inf, "lower": -np.inf}
    for _ in range(20):
        a = _random_potential(rng, grid)
        c = rng.uniform(-3, 3)
        R1 = rng.uniform(3, 12)
        R2 = rng.uniform(R1 + 0.5, 16)
        worst["domain"] = max(worst["domain"], _lambda(grid, a, c, R2) - _lambda(grid, a, c, R1))

        lam = _lambda(grid, a, c)
        a_up = a.with_values(a.values + rng.uniform(0, 1) * np.exp(-(grid.x - rng.uniform(-4, 4)) ** 2))
        worst["potential"] = max(worst["potential"], _lambda(grid, a_up, c) - lam)

        a_pert = a.with_values(a.values + rng.uniform(-0.5, 0.5, grid.n_points))
        diff = abs(_lambda(grid, a_pert, c) - lam) - np.max(np.abs(a_pert.values - a.values))
        worst["lipschitz"] = max(worst["lipschitz"], diff)
        worst["lower"] = max(worst["lower"], -np.max(a.values) - lam)
    ok = all(v <= tol for v in worst.values())
    detail = ", ".join(f"{k} violation {v:.1e}" for k, v in worst.items())
    record(4, ok, f"20 instances each, tolerance 1e-9: {detail}")
    assert ok


def test_criterion_05_drift_symmetry(record):
    s = 0.75
    spec = OperatorSpec(s)
    grid = make_grid(16.0, 1024)
    a_sym = standard_patch(grid)
    sym_gap = max(drift_symmetry_check(spec, a_sym, c, opts=TIGHT)[2] for c in (0.5, 1.0, 3.0))

    gaps = []
    Ns = np.array([512, 1024, 2048])
    for N in Ns:
        g = make_grid(16.0, N)
        x = g.x
        a = Field(g, 2.5 * np.exp(-(x - 1) ** 2) + np.exp(-(x + 2) ** 2 / 0.3) - 1.0, Constant(-1.0, -1.0))
        gaps.append(drift_symmetry_check(spec, a, 1.5, opts=TIGHT)[2])
    gaps = np.array(gaps)
    if np.all(gaps <= 1e-10):
        # the discrete scheme is exactly symmetric, so the gap is roundoff at every N
        conv_ok, conv = True, f"asymmetric gaps {', '.join(f'{g:.1e}' for g in gaps)} at roundoff for all N"
    else:
        order = _fitted_order(32.0 / Ns, np.maximum(gaps, 1e-300))
        conv_ok, conv = order >= 1.8, f"asymmetric order {order:.2f} (>= 1.8)"
    ok = record(5, sym_gap <= 1e-8 and conv_ok, f"symmetric gap = {sym_gap:.1e} (<= 1e-8); {conv}")
    assert ok


def test_criterion_06_domain_limit(record):
    grid = make_grid(128.0, 4096)
    a = standard_patch(grid)
    op = build_operator(grid, OperatorSpec(0.75), a)
    radii = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
    lams = [principal_eigen(op, R, TIGHT).lambda1 for R in radii]
    nonincreasing = all(b <= a_ + 1e-12 for a_, b in zip(lams, lams[1:]))
    width = 2.0
    gaps = [(radii[i + 1], abs(lams[i + 1] - lams[i])) for i in range(len(radii) - 1)
            if radii[i] >= 8 * width]
    cauchy = all(g < 1e-6 for _, g in gaps)
    detail = ", ".join(f"R={R:g}: {g:.1e}" for R, g in gaps)
    ok = record(6, nonincreasing and cauchy,
                f"nonincreasing = {nonincreasing}; successive gaps for R >= 16 (< 1e-6): {detail}")
    assert ok


def _bump(grid):
    return Field(grid, np.exp(-grid.x ** 2))


def test_criterion_07_dichotomy(record):
    grid = make_grid(64.0, 2048)
    cfg = SimConfig(dt=0.05, T_max=300.0)
    out = []
    for target, want in ((-0.2, Outcome.STEADY), (0.1, Outcome.EXTINCT)):
        a0 = _tuned_a0(0.75, target)
        nl = standard_model(grid, a0)
        op = build_operator(grid, OperatorSpec(0.75), nl.potential)
        lam = principal_eigen(op).lambda1
        traj = evolve(_bump(grid), op, nl, cfg)
        out.append((lam, traj.outcome, traj.final.sup_norm(), want))
    (l1, o1, m1, _), (l2, o2, m2, _) = out
    ok = o1 is Outcome.STEADY and m1 >= 0.1 and o2 is Outcome.EXTINCT and m2 < 1e-6
    record(7, ok, f"lambda1={l1:.3f}: {o1.value}, max {m1:.3f} (>= 0.1); "
                  f"lambda1={l2:.3f}: {o2.value}, sup {m2:.4e} (< 1e-6)")
    assert ok


def test_criterion_08_monotone_uniqueness(record):
    grid = make_grid(64.0, 2048)
    cfg = SimConfig(dt=0.05, T_max=300.0)
    nl = standard_model(grid, _tuned_a0(0.75, -0.2))
    op = build_operator(grid, OperatorSpec(0.75), nl.potential)
    res = solve_wave(op, nl, cfg)
    below = res.below.trajectory.monotone_flag
    above = res.above.trajectory.monotone_flag
    ok = (below is Monotonicity.NONDECREASING and above is Monotonicity.NONINCREASING
          and res.gap <= 100 * cfg.steady_tol)
    record(8, ok, f"below {below.value}, above {above.value}, gap = {res.gap:.2e} (<= 1e-6)")
    assert ok


def _persistent_profile(s, a0, L, N):
    grid = make_grid(L, N)
    nl = standard_model(grid, a0)
    op = build_operator(grid, OperatorSpec(s), nl.potential)
    M = float(np.max(nl.saturation(grid.x)))
    traj = evolve(Field(grid, np.full(grid.n_points, M)), op, nl, SimConfig(dt=0.05, T_max=300.0))
    return traj


def test_criterion_09_tail_decay(record):
    R0 = patch_radius()
    window = (4 * R0, 0.5 * 64.0)
    ok, parts = True, []
    for s in (0.6, 0.75):
        a0 = _tuned_a0(s, -0.2)
        target = -(1 + 2 * s)
        slopes = {}
        for L, N in ((64.0, 2048), (128.0, 4096)):
            traj = _persistent_profile(s, a0, L, N)
            assert traj.outcome is Outcome.STEADY
            slopes[L] = [fit_tail_exponent(traj.final, window, side).slope for side in (Side.LEFT, Side.RIGHT)]
        dev = max(abs(v - target) for v in slopes[64.0])
        drift = max(abs(a - b) for a, b in zip(slopes[64.0], slopes[128.0]))
        ok &= dev <= 0.15 and drift <= 0.05
        parts.append(f"s={s}: slopes {slopes[64.0][0]:.3f}/{slopes[64.0][1]:.3f} vs {target:.2f} "
                     f"(dev {dev:.3f} <= 0.15), L-doubling change {drift:.1e} (<= 0.05)")
    record(9, ok, f"window [{window[0]:g}, {window[1]:g}]; " + "; ".join(parts))
    assert ok


def test_criterion_10_thresholds(record):
    grid = make_grid(32.0, 1024)
    spec = OperatorSpec(0.75)
    nl = standard_model(grid)
    rep = scan_and_bisect(spec, nl.potential, c_max=10.0, n_scan=21, bisect_tol=1e-2,
                          R_line_schedule=[4.0, 8.0, 16.0, 32.0])
    lam0, lam_max = rep.lambda_values[0], rep.lambda_values[-1]
    widths = [hi - lo for lo, hi in rep.brackets]
    cfg = SimConfig(dt=0.05, T_max=300.0)
    c_in = 0.5 * rep.c_star_bracket[0]
    c_out = rep.c_star_star_bracket[1] + 1.0
    outcomes = []
    for c in (c_in, c_out):
        op = build_operator(grid, spec.with_speed(c), nl.potential)
        outcomes.append(evolve(_bump(grid), op, nl, cfg).outcome)
    ok = (lam0 < 0 and lam_max > 0 and widths and max(widths) <= 1e-2
          and outcomes[0] is Outcome.STEADY and outcomes[1] is Outcome.EXTINCT)
    record(10, ok, f"lambda1(0)={lam0:.3f}, lambda1(10)={lam_max:.3f}, brackets "
                   f"{[(round(lo, 5), round(hi, 5)) for lo, hi in rep.brackets]}; "
                   f"c={c_in:.3f}: {outcomes[0].value}, c={c_out:.3f}: {outcomes[1].value}")
    assert ok


def test_criterion_11_barrier(record):
    s, nu = 0.75, 1.0
    spec = OperatorSpec(s)
    C = [certify_barrier(Barrier(k, s), spec, nu).C_beta for k in (4.0, 16.0, 64.0)]
    mean = float(np.mean(C))
    spread = max(abs(v - mean) / mean for v in C)
    kappa = admissible_kappa(s, nu, mean)
    certs = [certify_barrier(Barrier(kappa, s), spec.with_speed(c), nu) for c in (0.0, 1.0)]
    beyond_ok = all(cert.passed and np.all(cert.passed_points[np.abs(cert.x) >= cert.R_nu]) for cert in certs)
    ok = beyond_ok and spread <= 0.10
    record(11, ok, f"C(beta) = {', '.join(f'{v:.4f}' for v in C)} (spread {spread:.1e} <= 0.10); "
                   f"kappa = {kappa:.3e}, R_nu = {certs[0].R_nu:.3f} (c=0), {certs[1].R_nu:.3f} (c=1)")
    assert ok


def test_criterion_12_heat_kernel(record):
    s = 0.75
    grid = make_grid(128.0, 4097)
    zero = custom(lambda x, u: np.zeros_like(u), lambda x, u: np.zeros_like(u), nu=0.0, R0=0.0)
    op = build_operator(grid, OperatorSpec(s))
    u0 = Field(grid, np.exp(-(grid.x / 0.2) ** 2))
    traj = evolve(u0, op, zero, SimConfig(dt=0.01, T_max=1.0, snapshot_stride=100))
    slopes = [fit_tail_exponent(traj.final, (10.0, 40.0), side).slope for side in (Side.LEFT, Side.RIGHT)]
    dev = max(abs(v + 1 + 2 * s) for v in slopes)
    ok = record(12, dev <= 0.2, f"t={traj.times[-1]:g}: slopes {slopes[0]:.4f}/{slopes[1]:.4f} "
                                f"vs {-(1 + 2 * s):.2f} (dev {dev:.3f} <= 0.2)")
    assert ok


def test_criterion_13_performance(record):
    res = bench_matvec(make_grid(64.0, 8192), OperatorSpec(0.75), repeats=5)
    ok = res["max_rel_diff"] <= 1e-10 and res["speedup"] >= 10
    record(13, ok, f"N=8192: speedup {res['speedup']:.1f}x (>= 10), max rel diff {res['max_rel_diff']:.1e} (<= 1e-10)")
    assert ok
