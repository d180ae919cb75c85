"""Command-line interface.

    fracpatch <subcommand> [--config run.ini] [subcommand flags]

Exit status: 0 on success, 1 for domain/configuration errors, 2 for
numerical failures.  Artifacts go to the configured output directory, which
the FRACPATCH_OUTPUT_DIR environment variable overrides.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, parse_config
from .dynamics import Outcome, SimConfig, evolve
from .errors import DomainError, NumericalError
from .fracop import OperatorSpec, bench_matvec, build_operator
from .grid import Analytic, Field, make_grid
from .kpp import (Barrier, admissible_kappa, certify_barrier, check_hypotheses, patch_radius,
                  standard_model)
from .spectral import EigenOptions, default_schedule, principal_eigen, principal_eigen_line
from .thresholds import scan_and_bisect
from .waves import Side, default_window, fit_tail_exponent, solve_wave

log = logging.getLogger("fracpatch")

SUBCOMMANDS = ("symbol-check", "eigen", "eigen-line", "evolve", "wave", "tail-fit",
               "thresholds", "barrier-check", "hypotheses", "bench-matvec")


def verdict_line(lambda1: float) -> str:
    outcome = "Persist" if lambda1 < 0 else "Extinct"
    return f"lambda1 = {lambda1:.17g}; predicted outcome = {outcome} (dichotomy)"


class _Run:
    """Shared state for one subcommand invocation."""

    def __init__(self, cfg: RunConfig, name: str):
        self.cfg, self.name = cfg, name
        self.out = cfg.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.lines: list[str] = [f"subcommand = {name}"]
        self._model = None

    @property
    def precision(self) -> int:
        return self.cfg.output.precision

    def csv(self, fname, header, columns):
        path = io.write_csv(self.out / fname, header, columns, self.precision)
        self.lines.append(f"wrote {path.name}")
        return path

    def field(self, fname, f: Field, value_name: str):
        path = io.write_field(self.out / fname, f, value_name, self.precision)
        self.lines.append(f"wrote {path.name}")
        return path

    def say(self, line: str):
        self.lines.append(line)

    def finish(self):
        text = "\n".join(self.lines) + "\n"
        (self.out / f"{self.name.replace('-', '_')}_summary.txt").write_text(text)
        sys.stdout.write(text)

    # -- model assembly ---------------------------------------------------------

    @property
    def grid(self):
        return make_grid(self.cfg.grid.L, self.cfg.grid.N)

    @property
    def model(self):
        if self._model is None:
            m = self.cfg.model
            grid = self.grid
            nl = standard_model(grid, m.a0, m.nu, m.p, m.patch_width, m.patch_shape, m.S or None)
            self._model = (grid, nl, build_operator(grid, self.cfg.operator_spec, nl.potential))
        return self._model

    @property
    def R0(self) -> float:
        m = self.cfg.model
        return patch_radius(m.patch_width, m.patch_shape)

    @property
    def eigen_opts(self) -> EigenOptions:
        e = self.cfg.eigen
        return EigenOptions(tol=e.tol, max_iter=e.max_iter)

    @property
    def schedule(self):
        e = self.cfg.eigen
        return list(e.R_schedule) or default_schedule(self.cfg.model.patch_width, self.cfg.grid.L)

    @property
    def sim(self) -> SimConfig:
        s = self.cfg.sim
        return SimConfig(s.dt, s.T_max, s.steady_tol, s.extinction_tol, s.snapshot_stride)


def cmd_symbol_check(run: _Run, args):
    cfg = run.cfg
    grid = run.grid
    spec = OperatorSpec(cfg.operator.s, normalization="paper")
    op = build_operator(grid, spec)
    i0 = int(np.argmin(np.abs(grid.x)))
    x0 = float(grid.x[i0])
    rows = []
    for xi in args.xi:
        u = Field(grid, np.cos(xi * grid.x), Analytic(lambda y, k=xi: np.cos(k * y)))
        val = float(op.apply(u).values[i0])
        exact = -abs(xi) ** (2 * spec.s) * np.cos(xi * x0)
        rows.append((xi, x0, val, exact, abs(val - exact) / abs(exact)))
        run.say(f"xi = {xi:g}: discrete = {val:.12g}, exact = {exact:.12g}, rel_error = {rows[-1][-1]:.3e}")
    run.csv("symbol.csv", ("xi", "x0", "discrete", "exact", "rel_error"), list(zip(*rows)))


def cmd_eigen(run: _Run, args):
    grid, nl, op = run.model
    R = args.R or grid.half_width
    res = principal_eigen(op, R, run.eigen_opts)
    run.csv("eigen.csv", ("R", "lambda1"), [[R], [res.lambda1]])
    run.field("phi.csv", res.eigenfunction, "phi")
    run.say(f"lambda1 = {res.lambda1:.17g}")
    run.say(f"residual = {res.residual:.3e}")
    run.say(f"iterations = {res.iterations}")
    run.say(verdict_line(res.lambda1))


def cmd_eigen_line(run: _Run, args):
    grid, nl, op = run.model
    res = principal_eigen_line(run.cfg.operator_spec, nl.potential, run.schedule,
                               run.cfg.eigen.line_tol, run.eigen_opts, op=op)
    Rs, lams = zip(*res.sequence)
    run.csv("eigen_line.csv", ("R", "lambda1"), [Rs, lams])
    run.say(f"lambda1_line = {res.lambda1_line:.17g}")
    run.say(f"converged = {res.converged}; tail_gap = {res.tail_gap:.3e}")
    run.say(verdict_line(res.lambda1_line))


def _initial(grid, kind: str, M: float) -> Field:
    if kind == "bump":
        return Field(grid, np.exp(-grid.x ** 2))
    if kind == "constant":
        return Field(grid, np.full(grid.n_points, M))
    raise DomainError(f"unknown initial datum {kind!r}")


def cmd_evolve(run: _Run, args):
    grid, nl, op = run.model
    M = run.cfg.model.M or float(np.max(nl.saturation(grid.x)))
    traj = evolve(_initial(grid, args.init, M), op, nl, run.sim)
    names = []
    for k, (t, snap) in enumerate(zip(traj.times, traj.snapshots)):
        name = f"snapshots/u_{k:05d}.csv"
        io.write_field(run.out / name, snap, "u", run.precision)
        names.append(name)
    run.csv("manifest.csv", ("t", "filename"), [traj.times, names])
    lam = principal_eigen(op, grid.half_width, run.eigen_opts).lambda1
    run.say(f"outcome = {traj.outcome.value}")
    run.say(f"t_final = {traj.times[-1]:.17g}; steps = {traj.steps}")
    run.say(f"sup_norm = {traj.final.sup_norm():.17g}")
    run.say(f"stationary_residual = {traj.residual:.3e}")
    run.say(f"monotone = {traj.monotone_flag.value}")
    run.say(verdict_line(lam))


def cmd_wave(run: _Run, args):
    grid, nl, op = run.model
    t = run.cfg.tail
    window = default_window(run.R0, grid.half_width, t.window_lo_factor, t.window_hi_factor)
    M = run.cfg.model.M or None
    res = solve_wave(op, nl, run.sim, M=M, window=window, refine=args.refine,
                     eigen_opts=run.eigen_opts)
    run.field("wave_below.csv", res.below.profile, "u")
    run.field("wave_above.csv", res.above.profile, "u")
    run.say(f"gap = {res.gap:.3e} (uniqueness probe {'ok' if res.uniqueness_ok else 'FAILED'})")
    run.say(f"outcomes = {res.below.outcome.value}, {res.above.outcome.value}")
    run.say(f"residuals = {res.below.residual:.3e}, {res.above.residual:.3e}")
    run.say(f"eps = {res.eps:.3g}")
    if res.above.outcome is not Outcome.EXTINCT:
        _write_fits(run, res.above.profile, window)
    run.say(verdict_line(res.lambda1))


def _write_fits(run: _Run, profile: Field, window):
    fits = [fit_tail_exponent(profile, window, side) for side in (Side.LEFT, Side.RIGHT)]
    run.csv("tail_fit.csv", ("side", "x_lo", "x_hi", "slope", "stderr"),
            [[f.side.value for f in fits], [f.window[0] for f in fits], [f.window[1] for f in fits],
             [f.slope for f in fits], [f.slope_stderr for f in fits]])
    for f in fits:
        run.say(f"{f.side.value}: slope = {f.slope:.6f} +- {f.slope_stderr:.2e} on [{f.window[0]:g}, {f.window[1]:g}]")


def cmd_tail_fit(run: _Run, args):
    if args.profile:
        profile = io.read_field(args.profile)
    else:
        grid, nl, op = run.model
        profile = solve_wave(op, nl, run.sim, eigen_opts=run.eigen_opts).above.profile
    t = run.cfg.tail
    window = default_window(run.R0, profile.grid.half_width, t.window_lo_factor, t.window_hi_factor)
    _write_fits(run, profile, window)


def cmd_thresholds(run: _Run, args):
    grid, nl, op = run.model
    t = run.cfg.thresholds
    rep = scan_and_bisect(run.cfg.operator_spec, nl.potential, t.c_max, t.n_scan, t.bisect_tol,
                          run.schedule, run.cfg.eigen.line_tol, run.eigen_opts, workers=args.workers)
    run.csv("lambda_of_c.csv", ("c", "lambda1"), [rep.c_grid, rep.lambda_values])
    for line in rep.summary_lines():
        run.say(line)


def cmd_barrier_check(run: _Run, args):
    spec = run.cfg.operator_spec
    nu = run.cfg.model.nu
    probe = certify_barrier(Barrier(1.0, spec.s), spec.with_speed(0.0), nu)
    kappa = args.kappa or admissible_kappa(spec.s, nu, probe.C_beta)
    cert = certify_barrier(Barrier(kappa, spec.s), spec, nu)
    run.csv("certificate.csv", ("x", "value", "passed"), [cert.x, cert.values, cert.passed_points])
    run.say(f"kappa = {kappa:.17g}")
    run.say(f"C_beta = {cert.C_beta:.17g}")
    run.say(f"R_nu = {cert.R_nu:.17g}")
    run.say(f"certified = {cert.passed}")


def cmd_hypotheses(run: _Run, args):
    grid, nl, op = run.model
    rep = check_hypotheses(nl, grid)
    for line in rep.lines():
        run.say(line)
    run.say(f"all = {'pass' if rep.passed else 'FAIL'}")


def cmd_bench_matvec(run: _Run, args):
    grid = make_grid(run.cfg.grid.L, args.N or run.cfg.grid.N)
    res = bench_matvec(grid, run.cfg.operator_spec, repeats=args.repeats)
    keys = list(res)
    run.csv("bench.csv", keys, [[res[k]] for k in keys])
    for k in keys:
        run.say(f"{k} = {res[k]}")


HANDLERS = {
    "symbol-check": cmd_symbol_check,
    "eigen": cmd_eigen,
    "eigen-line": cmd_eigen_line,
    "evolve": cmd_evolve,
    "wave": cmd_wave,
    "tail-fit": cmd_tail_fit,
    "thresholds": cmd_thresholds,
    "barrier-check": cmd_barrier_check,
    "hypotheses": cmd_hypotheses,
    "bench-matvec": cmd_bench_matvec,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracpatch", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name) for name in SUBCOMMANDS}
    for sp in parsers.values():
        sp.add_argument("--config", type=Path, help="INI run configuration (defaults if omitted)")
    parsers["symbol-check"].add_argument("--xi", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    parsers["eigen"].add_argument("--R", type=float, default=None)
    parsers["evolve"].add_argument("--init", choices=("bump", "constant"), default="bump")
    parsers["wave"].add_argument("--refine", action="store_true")
    parsers["tail-fit"].add_argument("--profile", type=Path, default=None)
    parsers["thresholds"].add_argument("--workers", type=int, default=1)
    parsers["barrier-check"].add_argument("--kappa", type=float, default=None)
    parsers["bench-matvec"].add_argument("--N", type=int, default=None)
    parsers["bench-matvec"].add_argument("--repeats", type=int, default=5)
    return p


def run_subcommand(name: str, cfg: RunConfig, args) -> int:
    run = _Run(cfg, name)
    HANDLERS[name](run, args)
    run.finish()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
        return run_subcommand(args.command, cfg, args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
