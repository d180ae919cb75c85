"""Stationary profiles in the moving frame by monotone parabolic relaxation,
and power-law tail fits."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy import stats

from .dynamics import Outcome, SimConfig, Trajectory, _linear, evolve, stationary_residual, step
from .errors import FitError, DomainError
from .fracop import NonlocalOperator
from .grid import Field
from .kpp import Nonlinearity
from .spectral import EigenOptions, principal_eigen

log = logging.getLogger(__name__)


class Side(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


@dataclass(frozen=True)
class TailFit:
    window: tuple[float, float]
    slope: float
    slope_stderr: float
    side: Side
    intercept: float = math.nan
    n_points: int = 0


@dataclass(frozen=True, eq=False)
class WaveProfile:
    profile: Field
    residual: float
    provenance: str
    tail_fit: TailFit | None
    trajectory: Trajectory | None = None

    @property
    def outcome(self) -> Outcome | None:
        return None if self.trajectory is None else self.trajectory.outcome


@dataclass(frozen=True, eq=False)
class WaveResult:
    below: WaveProfile
    above: WaveProfile
    gap: float
    lambda1: float
    eps: float
    partial: bool
    uniqueness_ok: bool


def fit_tail_exponent(profile: Field, window: tuple[float, float], side: Side | str = Side.RIGHT) -> TailFit:
    """Least-squares slope of log u against log |x| on the window nodes."""
    side = Side(side) if not isinstance(side, Side) else side
    lo, hi = float(window[0]), float(window[1])
    if not 0 < lo < hi:
        raise FitError(f"window must satisfy 0 < x_lo < x_hi, got {window}")
    if hi > profile.grid.half_width * (1 + 1e-12):
        raise FitError(f"window {window} leaves the grid")
    x = profile.grid.x
    r = x if side is Side.RIGHT else -x
    m = (r >= lo) & (r <= hi)
    if m.sum() < 3:
        raise FitError(f"fewer than 3 nodes in window {window}")
    u = profile.values[m]
    if np.any(u <= 0):
        raise FitError(f"nonpositive value {u.min():.3g} in window {window} on the {side.value} side")
    res = stats.linregress(np.log(r[m]), np.log(u))
    return TailFit((lo, hi), float(res.slope), float(res.stderr), side, float(res.intercept), int(m.sum()))


def default_window(R0: float, L: float, lo_factor: float = 4.0, hi_factor: float = 0.5) -> tuple[float, float]:
    return lo_factor * R0, hi_factor * L


def choose_eps(phi: Field, op: NonlocalOperator, nl: Nonlinearity, dt: float,
               ladder=None) -> float:
    """Largest eps in a geometric ladder for which one step does not decrease eps*phi."""
    ladder = np.geomspace(1.0, 1e-8, 33) if ladder is None else ladder
    for eps in ladder:
        u = phi.with_values(eps * phi.values)
        new = step(u, op, nl, dt)
        if np.all(new.values >= u.values - 1e-14 * eps):
            return float(eps)
    raise DomainError("no eps on the ladder gives a subsolution (is lambda1 < 0?)")


def newton_refine(u: Field, op: NonlocalOperator, nl: Nonlinearity, max_iter: int = 8,
                  tol: float = 1e-12) -> Field:
    """Damped Newton on Delta^s u + c u' + f(x, u) = 0 (dense, zero exterior)."""
    lin = _linear(op).to_dense(cap=max(4096, op.n))
    x = u.grid.x
    v = u.values.copy()
    r = lin @ v + nl(x, v)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            break
        J = lin + np.diag(nl.df(x, v))
        dv = scipy.linalg.solve(J, -r)
        t = 1.0
        while t > 1e-4:
            w = np.maximum(v + t * dv, 0.0)
            rw = lin @ w + nl(x, w)
            if np.max(np.abs(rw)) < np.max(np.abs(r)):
                v, r = w, rw
                break
            t *= 0.5
        else:
            break
    return u.with_values(v)


def solve_wave(op: NonlocalOperator, nl: Nonlinearity, cfg: SimConfig | None = None,
               R: float | None = None, M: float | None = None,
               window: tuple[float, float] | None = None, refine: bool = False,
               eigen_opts: EigenOptions | None = None) -> WaveResult:
    """Relax from eps*phi_R (below) and from the constant M (above).

    ``op`` must carry the linearised potential a(x); it is used for the
    principal eigenfunction, while time stepping uses its potential-free part.
    """
    cfg = cfg or SimConfig()
    grid = op.grid
    x = grid.x
    R = grid.half_width if R is None else R
    eig = principal_eigen(op, R, eigen_opts)
    if M is None:
        M = float(np.max(nl.saturation(x)))
    if np.any(nl(x, np.full_like(x, M)) > 0):
        raise DomainError(f"M={M} is not a supersolution level: f(x, M) > 0 somewhere")
    if eig.lambda1 < 0:
        eps = choose_eps(eig.eigenfunction, op, nl, cfg.dt)
    else:
        eps = 1e-3
    u_below = eig.eigenfunction.with_values(eps * eig.eigenfunction.values)
    u_above = Field(grid, np.full(grid.n_points, M))
    traj_b = evolve(u_below, op, nl, cfg)
    traj_a = evolve(u_above, op, nl, cfg)
    profiles = []
    for traj, prov in ((traj_b, "FromSubsolution"), (traj_a, "FromSupersolution")):
        u = traj.final
        if refine and traj.outcome is Outcome.STEADY:
            u = newton_refine(u, op, nl)
        res = stationary_residual(u, op, nl)
        fit = None
        if window is not None and traj.outcome is not Outcome.EXTINCT:
            try:
                fit = fit_tail_exponent(u, window, Side.RIGHT)
            except FitError as exc:
                log.warning("tail fit failed: %s", exc)
        profiles.append(WaveProfile(u, res, prov, fit, traj))
    gap = float(np.max(np.abs(profiles[0].profile.values - profiles[1].profile.values)))
    partial = Outcome.HORIZON in (traj_b.outcome, traj_a.outcome)
    ok = gap <= 100 * cfg.steady_tol
    if partial:
        log.warning("solve_wave: a relaxation run reached the horizon")
    if not ok:
        log.warning("solve_wave: limits differ by %.3e > 100*steady_tol", gap)
    return WaveResult(profiles[0], profiles[1], gap, eig.lambda1, eps, partial, ok)
