"""Principal eigenpairs of L_{c,a} with a Dirichlet exterior.

The discrete operator restricted to (-R, R) is essentially nonnegative
(nonnegative off-diagonal entries), so for every shift sigma above its
spectral abscissa the resolvent (sigma I - A)^-1 is entrywise positive and the
Perron eigenvector is reached by inverse iteration from any positive start.
For a positive vector x the Collatz-Wielandt quotients (Ax)_i / x_i bracket
the abscissa, which gives both a safe way to move the shift towards it and an
a posteriori enclosure of the eigenvalue.

Sign convention: L phi = -lambda1 phi, so lambda1 < 0 means growth.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DomainError, FracPatchError, IterationError, StructuralError
from .fracop import DENSE_CAP, NonlocalOperator, OperatorSpec, build_operator
from .grid import Field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EigenOptions:
    """Stopping rules for the inverse iteration.

    ``tol`` bounds the scaled residual ||L phi + lambda1 phi|| / ||phi||,
    ``rel_tol`` the relative change of lambda1 between iterations.
    With ``adaptive`` the shift follows the upper Collatz-Wielandt bound,
    otherwise it stays at sup a + 1.
    """

    tol: float = 1e-9
    rel_tol: float = 1e-12
    max_iter: int = 10_000
    adaptive: bool = True
    cap: int = DENSE_CAP


@dataclass(frozen=True, eq=False)
class EigenResult:
    lambda1: float
    eigenfunction: Field
    residual: float
    iterations: int
    domain: tuple[float, float]
    bounds: tuple[float, float] = (-math.inf, math.inf)
    shift: float = math.nan


@dataclass(frozen=True)
class LineEigenResult:
    lambda1_line: float
    sequence: list
    converged: bool
    tail_gap: float
    results: list = field(default_factory=list, repr=False, compare=False)


def interior_mask(grid, R: float) -> np.ndarray:
    """Nodes strictly inside (-R, R)."""
    return np.abs(grid.x) < R * (1.0 - 1e-12)


def _check_domain(op: NonlocalOperator, R: float) -> np.ndarray:
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    if R > op.grid.half_width * (1.0 + 1e-12):
        raise DomainError(f"R={R} exceeds the grid half-width {op.grid.half_width}")
    mask = interior_mask(op.grid, R)
    if mask.sum() < 1:
        raise DomainError(f"no grid node inside (-{R}, {R})")
    return mask


def start_vector(x: np.ndarray, R: float) -> np.ndarray:
    return np.maximum(1.0 - (x / R) ** 2, 0.0)


def _cw_bounds(A: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    q = (A @ v) / v
    return float(q.min()), float(q.max())


def principal_eigen(op: NonlocalOperator, R: float | None = None,
                    opts: EigenOptions | None = None) -> EigenResult:
    """Principal eigenpair of ``op`` on (-R, R) with zero exterior values."""
    opts = opts or EigenOptions()
    grid = op.grid
    R = grid.half_width if R is None else float(R)
    mask = _check_domain(op, R)
    A = op.restricted_dense(mask, cap=opts.cap)
    x = grid.x[mask]
    n = len(x)
    scale = max(1.0, float(np.max(np.abs(np.diag(A)))))

    sigma = float(op.potential[mask].max()) + 1.0
    lu = scipy.linalg.lu_factor(sigma * np.eye(n) - A, check_finite=False)
    v = start_vector(x, R)
    v /= v.max()
    lam_old = math.nan
    residual = math.inf
    lo, hi = -math.inf, math.inf
    for it in range(1, opts.max_iter + 1):
        w = scipy.linalg.lu_solve(lu, v, check_finite=False)
        if not np.all(np.isfinite(w)):
            raise IterationError("inverse iteration produced non-finite values",
                                 residual=residual, last_valid=v)
        wmax = np.max(np.abs(w))
        v_new = w / wmax
        if v_new.min() < -1e-10:
            raise StructuralError(
                "eigenvector lost positivity; the discretisation is not an M-matrix "
                "(try drift_scheme='upwind')", last_valid=v)
        v = np.maximum(v_new, 0.0)
        Av = A @ v
        mu = float(v @ Av) / float(v @ v)
        residual = float(np.max(np.abs(Av - mu * v)))
        lam = -mu
        if np.all(v > 0):
            lo, hi = _cw_bounds(A, v)
        change = abs(lam - lam_old)
        lam_old = lam
        if residual < opts.tol and change < opts.rel_tol * max(1.0, abs(lam)):
            break
        if opts.adaptive and np.isfinite(hi):
            # keep sigma strictly above the abscissa bound so the resolvent stays positive
            gap = max(hi - lo, 1e-9 * scale)
            target = hi + gap
            if sigma - target > 0.5 * (sigma - hi):
                sigma = target
                lu = scipy.linalg.lu_factor(sigma * np.eye(n) - A, check_finite=False)
    else:
        raise IterationError(f"no convergence after {opts.max_iter} iterations "
                             f"(residual {residual:.3e})", residual=residual,
                             last_valid=v)

    phi = np.zeros(grid.n_points)
    phi[mask] = v
    log.debug("principal_eigen: R=%g n=%d lambda1=%.15g it=%d res=%.2e",
              R, n, lam, it, residual)
    return EigenResult(lam, Field(grid, phi), residual, it, (-R, R),
                       bounds=(-hi, -lo), shift=sigma)


def dense_principal_eigenvalue(op: NonlocalOperator, R: float | None = None,
                               cap: int = DENSE_CAP) -> float:
    """Oracle: minus the rightmost real part of the restricted spectrum."""
    R = op.grid.half_width if R is None else float(R)
    A = op.restricted_dense(_check_domain(op, R), cap=cap)
    return -float(np.max(np.linalg.eigvals(A).real))


def default_schedule(R0: float, L: float) -> list[float]:
    """R0, 2 R0, 4 R0, ... up to and including L."""
    out = []
    R = R0
    while R < L:
        out.append(R)
        R *= 2.0
    out.append(L)
    return out


def principal_eigen_line(spec: OperatorSpec, a: Field, R_schedule=None, tol: float = 1e-6,
                         opts: EigenOptions | None = None,
                         op: NonlocalOperator | None = None) -> LineEigenResult:
    """Whole-line lambda1 as the limit over an increasing family of intervals."""
    grid = a.grid
    op = op or build_operator(grid, spec, a)
    if R_schedule is None:
        R_schedule = default_schedule(grid.half_width / 16.0, grid.half_width)
    R_schedule = [min(float(R), grid.half_width) for R in R_schedule]
    seq, results = [], []
    converged = False
    gap = math.inf
    for R in R_schedule:
        if seq and R <= seq[-1][0]:
            continue
        res = principal_eigen(op, R, opts)
        results.append(res)
        seq.append((R, res.lambda1))
        if len(seq) > 1:
            gap = abs(seq[-1][1] - seq[-2][1])
            if gap < tol:
                converged = True
                break
    return LineEigenResult(seq[-1][1], seq, converged, gap, results)


def drift_symmetry_check(spec: OperatorSpec, a: Field, c: float, R: float | None = None,
                         opts: EigenOptions | None = None) -> tuple[float, float, float]:
    """(lambda1 at +c, lambda1 at -c, |difference|)."""
    lp = principal_eigen(build_operator(a.grid, spec.with_speed(c), a), R, opts).lambda1
    if c == 0:
        return lp, lp, 0.0
    lm = principal_eigen(build_operator(a.grid, spec.with_speed(-c), a), R, opts).lambda1
    return lp, lm, abs(lp - lm)


def lambda_of_c_profile(spec: OperatorSpec, a: Field, c_values, R: float | None = None,
                        opts: EigenOptions | None = None, workers: int = 1) -> list:
    """Sorted list of (c, lambda1); a failed solve yields (c, exception)."""
    c_values = sorted(float(c) for c in c_values)
    for c in c_values:
        if not math.isfinite(c):
            raise DomainError(f"non-finite speed {c}")

    def one(c):
        try:
            return c, principal_eigen(build_operator(a.grid, spec.with_speed(c), a), R, opts).lambda1
        except FracPatchError as exc:
            log.warning("lambda1 failed at c=%g: %s", c, exc)
            return c, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, c_values))
    else:
        out = [one(c) for c in c_values]
    return sorted(out, key=lambda t: t[0])
