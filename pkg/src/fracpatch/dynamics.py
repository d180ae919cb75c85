"""IMEX Euler for  u_t = Delta^s u + c u' + f(x, u)  in the moving frame.

The linear nonlocal part is implicit, the reaction explicit:

    (I - dt (Delta^s + c d/dx)) u+ = u + dt f(x, u).

With the M-matrix discretisation and dt * Lip(f) <= 1 the update is a
monotone map, so the discrete scheme inherits the comparison principle.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DataError, NumericalError, ShapeError, StructuralWarning
from .fracop import NonlocalOperator, OperatorSpec, build_operator
from .grid import Constant, Field, Zero
from .kpp import Nonlinearity

log = logging.getLogger(__name__)


class Outcome(str, enum.Enum):
    EXTINCT = "Extinct"
    STEADY = "Steady"
    HORIZON = "HorizonReached"


class Monotonicity(str, enum.Enum):
    NONINCREASING = "Nonincreasing"
    NONDECREASING = "Nondecreasing"
    NEITHER = "Neither"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    T_max: float = 300.0
    steady_tol: float = 1e-8
    extinction_tol: float = 1e-6
    snapshot_stride: int = 20
    steady_checks: int = 10
    max_lip_dt: float = 0.5

    def __post_init__(self):
        for name in ("dt", "T_max", "steady_tol", "extinction_tol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be a positive number, got {v}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigurationError("snapshot_stride must be a positive integer")


@dataclass(eq=False)
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    outcome: Outcome = Outcome.HORIZON
    monotone_flag: Monotonicity = Monotonicity.NEITHER
    profile: Field | None = None
    residual: float = math.nan
    steps: int = 0

    @property
    def final(self) -> Field:
        return self.snapshots[-1]


def _far_values(state: Field, nl: Nonlinearity, dt: float) -> Field:
    """Advance a Constant extension with the far-field reaction ODE."""
    ext = state.extension
    if not isinstance(ext, Constant):
        return state
    L = state.grid.half_width + state.grid.h
    fl = float(nl(np.array([-L]), np.array([ext.left_value]))[0])
    fr = float(nl(np.array([L]), np.array([ext.right_value]))[0])
    return state.with_extension(Constant(ext.left_value + dt * fl, ext.right_value + dt * fr))


def step(state: Field, op: NonlocalOperator, nl: Nonlinearity, dt: float) -> Field:
    """One IMEX Euler step; the potential of ``op`` is ignored (it lives in f)."""
    if state.grid != op.grid:
        raise ShapeError("state and operator live on different grids")
    lin = op if not np.any(op.potential) else _linear(op)
    u = state.values
    rhs = u + dt * nl(state.grid.x, u)
    new_ext = state.extension
    if not state.extension.is_zero:
        # exterior values at the new time level enter the implicit operator
        ahead = _far_values(state, nl, dt)
        new_ext = ahead.extension
        rhs = rhs + dt * lin.exterior_term(ahead)
    lu = lin.implicit_factor(dt)
    out = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite values after a time step", last_valid=state)
    if u.min() >= 0 and out.min() < -1e-12:
        warnings.warn(f"negative value {out.min():.3e} from nonnegative data; reduce dt "
                      "or use upwind drift", StructuralWarning, stacklevel=2)
    return Field(state.grid, out, new_ext)


def _linear(op: NonlocalOperator) -> NonlocalOperator:
    """Potential-free operator, cached on ``op`` so its LU is reused."""
    with op._lock:
        lin = op._cache.get("linear")
        if lin is None:
            lin = op._cache["linear"] = op.linear_part()
    return lin


def _monotonicity(snaps: list, tol: float = 1e-10) -> Monotonicity:
    up = down = True
    for a, b in zip(snaps[:-1], snaps[1:]):
        d = b.values - a.values
        up &= bool(d.min() >= -tol)
        down &= bool(d.max() <= tol)
    if up and down:
        total = snaps[-1].values.sum() - snaps[0].values.sum()
        return Monotonicity.NONDECREASING if total >= 0 else Monotonicity.NONINCREASING
    if up:
        return Monotonicity.NONDECREASING
    if down:
        return Monotonicity.NONINCREASING
    return Monotonicity.NEITHER


def stationary_residual(u: Field, op: NonlocalOperator, nl: Nonlinearity) -> float:
    """||Delta^s u + c u' + f(x, u)||_inf with the field's own extension."""
    lin = _linear(op)
    r = lin.apply(u).values + nl(u.grid.x, u.values)
    return float(np.max(np.abs(r)))


def evolve(u0: Field, op: NonlocalOperator, nl: Nonlinearity, cfg: SimConfig | None = None) -> Trajectory:
    """Time-step until extinction, a steady state or the horizon."""
    cfg = cfg or SimConfig()
    if u0.grid != op.grid:
        raise ShapeError("initial datum and operator live on different grids")
    if u0.values.min() < 0:
        raise DataError("the initial datum must be nonnegative")
    x = u0.grid.x
    u_max = max(u0.sup_norm(), float(np.max(nl.saturation(x))))
    lip = nl.lipschitz(x, u_max)
    if cfg.dt * lip > cfg.max_lip_dt:
        raise ConfigurationError(f"dt={cfg.dt} too large for the explicit reaction: "
                                 f"dt*Lip(f)={cfg.dt * lip:.3g} > {cfg.max_lip_dt}")
    traj = Trajectory(times=[0.0], snapshots=[u0])
    u, t, n = u0, 0.0, 0
    quiet = 0
    n_max = int(math.ceil(cfg.T_max / cfg.dt - 1e-9))
    while n < n_max:
        new = step(u, op, nl, cfg.dt)
        n += 1
        t = n * cfg.dt
        rate = float(np.max(np.abs(new.values - u.values))) / cfg.dt
        u = new
        if n % cfg.snapshot_stride == 0:
            traj.times.append(t)
            traj.snapshots.append(u)
        if u.sup_norm() < cfg.extinction_tol:
            traj.outcome = Outcome.EXTINCT
            break
        quiet = quiet + 1 if rate < cfg.steady_tol else 0
        if quiet >= cfg.steady_checks:
            traj.outcome = Outcome.STEADY
            traj.profile = u
            break
    if traj.times[-1] != t:
        traj.times.append(t)
        traj.snapshots.append(u)
    traj.steps = n
    traj.monotone_flag = _monotonicity(traj.snapshots)
    traj.residual = stationary_residual(u, op, nl)
    log.info("evolve: %s after %d steps (t=%g), residual %.2e", traj.outcome.value, n, t, traj.residual)
    return traj


def frame_equivalence_check(u0: Field, spec: OperatorSpec, nl: Nonlinearity, c: float, T: float,
                            commensurate: bool = True, dt: float | None = None,
                            window: float = 0.5) -> float:
    """Sup-norm gap between the fixed-frame and moving-frame solutions.

    Fixed frame: v_t = Delta^s v + f(x - ct, v), no drift.  Moving frame:
    u_t = Delta^s u + c u' + f(x, u).  With dt = h / |c| the coefficient
    moves by exactly one node per step, and v(x + ct) is compared with u(x)
    on the nodes with |x| <= window * L.
    """
    if not commensurate:
        raise ConfigurationError("non-commensurate stepping would need interpolation of "
                                 "the moving coefficient; use commensurate=True")
    grid = u0.grid
    h = grid.h
    if c == 0:
        dt = dt or 0.01
        shift = 0
    else:
        dt = h / abs(c)
        shift = int(round(math.copysign(1, c)))
    n_steps = int(round(T / dt))
    fixed = build_operator(grid, spec.with_speed(0.0))
    moving = build_operator(grid, spec.with_speed(c))
    v = u0.with_extension(Zero())
    u = v
    idx = np.flatnonzero(np.abs(grid.x) <= window * grid.half_width)
    gap = 0.0
    for n in range(1, n_steps + 1):
        t_prev = (n - 1) * dt
        rhs_v = v.values + dt * nl(grid.x - c * t_prev, v.values)
        v = Field(grid, scipy.linalg.lu_solve(fixed.implicit_factor(dt), rhs_v, check_finite=False))
        u = step(u, moving, nl, dt)
        j = idx + shift * n
        ok = (j >= 0) & (j < grid.n_points)
        if np.any(ok):
            gap = max(gap, float(np.max(np.abs(v.values[j[ok]] - u.values[idx[ok]]))))
    return gap
