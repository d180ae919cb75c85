"""Critical speeds from the sign of c -> lambda1(L_{c,a}) on the whole line.

Naming: c_star is the persistence radius (lambda1 < 0 for |c| < c_star) and
c_star_star the extinction radius (lambda1 > 0 for |c| > c_star_star).  No
monotonicity in |c| is assumed; all sign changes found on the scan are
bisected and the innermost and outermost brackets reported.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError
from .fracop import OperatorSpec, build_operator
from .grid import Field
from .spectral import EigenOptions, principal_eigen_line

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThresholdReport:
    c_grid: np.ndarray
    lambda_values: np.ndarray
    c_star_bracket: tuple[float, float] | None
    c_star_star_bracket: tuple[float, float] | None
    monotone_observed: bool
    brackets: list = field(default_factory=list)
    endpoint_lambdas: list = field(default_factory=list)
    open_outer: bool = False

    def summary_lines(self) -> list[str]:
        def fmt(b):
            return "none" if b is None else f"[{b[0]:.17g}, {b[1]:.17g}]"
        lines = [f"c_star bracket = {fmt(self.c_star_bracket)}",
                 f"c_star_star bracket = {fmt(self.c_star_star_bracket)}",
                 f"sign changes = {len(self.brackets)}",
                 f"monotone observed = {self.monotone_observed}"]
        if self.open_outer:
            lines.append("warning: no extinction found up to c_max; raise c_max")
        return lines


class _LambdaLine:
    """lambda1 on the line as a function of c, with a fixed R schedule."""

    def __init__(self, spec, a, R_schedule, tol, opts):
        self.spec, self.a, self.R_schedule, self.tol, self.opts = spec, a, R_schedule, tol, opts
        self.residuals = {}

    def __call__(self, c: float) -> float:
        op = build_operator(self.a.grid, self.spec.with_speed(c), self.a)
        res = principal_eigen_line(self.spec.with_speed(c), self.a, self.R_schedule, self.tol,
                                   self.opts, op=op)
        last = res.results[-1]
        self.residuals[c] = last.residual
        return res.lambda1_line


def _bisect(fun, lo: float, hi: float, f_lo: float, f_hi: float, tol: float):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        if f_mid == 0.0:
            return (mid, mid), (f_mid, f_mid)
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return (lo, hi), (f_lo, f_hi)


def scan_and_bisect(spec: OperatorSpec, a: Field, c_max: float = 10.0, n_scan: int = 21,
                    bisect_tol: float = 1e-2, R_line_schedule=None, line_tol: float = 1e-6,
                    opts: EigenOptions | None = None, workers: int = 1) -> ThresholdReport:
    """Scan c in [0, c_max] (lambda1 is even in c) and bisect sign changes."""
    if not (c_max > 0 and math.isfinite(c_max)):
        raise DomainError(f"c_max must be positive and finite, got {c_max}")
    if n_scan < 2 or bisect_tol <= 0:
        raise DomainError("n_scan >= 2 and bisect_tol > 0 are required")
    fun = _LambdaLine(spec, a, R_line_schedule, line_tol, opts)
    lam0 = fun(0.0)
    if lam0 >= 0:
        raise PreconditionError(f"lambda1 at c=0 is {lam0:.6g} >= 0; thresholds need a "
                                "persistent patch at zero speed")
    c_grid = np.linspace(0.0, c_max, n_scan)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rest = list(pool.map(fun, c_grid[1:]))
    else:
        rest = [fun(c) for c in c_grid[1:]]
    lam = np.array([lam0] + rest)
    changes = [i for i in range(n_scan - 1) if (lam[i] < 0) != (lam[i + 1] < 0)]

    def refine(i):
        return _bisect(fun, c_grid[i], c_grid[i + 1], lam[i], lam[i + 1], bisect_tol)

    if workers > 1 and len(changes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            refined = list(pool.map(refine, changes))
    else:
        refined = [refine(i) for i in changes]
    brackets = [tuple(map(float, b)) for b, _ in refined]
    ends = [tuple(map(float, v)) for _, v in refined]
    for (lo, hi), (fl, fh) in zip(brackets, ends):
        resid = max(fun.residuals.get(lo, 0.0), fun.residuals.get(hi, 0.0))
        if min(abs(fl), abs(fh)) < 10 * resid:
            log.warning("bracket [%g, %g]: |lambda1| at an endpoint is below 10x the residual", lo, hi)
    open_outer = not brackets or lam[-1] < 0
    if open_outer:
        warnings.warn(f"lambda1 is still negative at c_max={c_max}; raise c_max", RuntimeWarning, stacklevel=2)
    inner = brackets[0] if brackets else None
    outer = None if open_outer else brackets[-1]
    monotone = bool(np.all(np.diff(lam) >= -1e-9))
    return ThresholdReport(c_grid, lam, inner, outer, monotone, brackets, ends, open_outer)
