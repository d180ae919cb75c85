"""KPP reaction terms, hypothesis checks and the power-law barrier.

The barrier is Phi(x) = min(kappa |x|^(2s-1), |x|^-beta).  Its fractional
Laplacian is evaluated by adaptive quadrature on the exact piecewise-power
function; near the evaluation point the second difference is expanded in a
binomial series and integrated in closed form, which avoids the cancellation
a direct evaluation suffers close to the singularity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import CertificationError, DomainError, PreconditionError
from .fracop import OperatorSpec
from .grid import Constant, Field, Grid

PATCH_SHAPES = ("box-smoothed", "gaussian")
DEFAULT_LADDER = np.geomspace(0.1, 10.0, 25)


# --------------------------------------------------------------------------
# nonlinearities
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Reaction f(x, u) with its u-derivative.

    ``nu`` is the far-field death rate and ``R0`` the radius beyond which
    a(x) = d_u f(x, 0) <= -nu.  ``saturation`` returns S(x) with f(x, S) <= 0.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    df: Callable[[np.ndarray, np.ndarray], np.ndarray]
    nu: float
    R0: float
    saturation: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    p: float | None = None
    potential: Field | None = field(default=None, repr=False)

    def __call__(self, x, u) -> np.ndarray:
        return self.f(np.asarray(x, dtype=float), np.asarray(u, dtype=float))

    def a(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.df(x, np.zeros_like(x))

    def lipschitz(self, x, u_max: float, n: int = 64) -> float:
        """max |d_u f| over nodes ``x`` and u in [0, u_max]."""
        x = np.asarray(x, dtype=float)
        return max(float(np.max(np.abs(self.df(x, np.full_like(x, u)))))
                   for u in np.linspace(0.0, u_max, n))


def model_kpp(a: Field | Callable, p: float = 1.0, nu: float | None = None,
              R0: float | None = None, S: float | None = None) -> Nonlinearity:
    """f(x, u) = u (a(x) - u^p).

    ``a`` is a Field (evaluated with its extension outside the grid) or a
    vectorised callable.  When ``a`` is a Field with a Constant extension the
    far-field rate defaults to minus that constant.
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    afun = a if callable(a) and not isinstance(a, Field) else None
    if isinstance(a, Field):
        afun = a
        if nu is None and isinstance(a.extension, Constant):
            nu = -max(a.extension.left_value, a.extension.right_value)
        if R0 is None:
            R0 = _far_radius(a, nu)
    if afun is None:
        raise DomainError("a must be a Field or a callable")
    if nu is None or R0 is None:
        raise DomainError("nu and R0 are required for a callable potential")
    if S is None:
        amax = float(np.max(a.values)) if isinstance(a, Field) else 1.0
        S = 1.5 * max(amax, 0.0) ** (1.0 / p) + 1e-12
    S = float(S)

    def f(x, u):
        up = np.maximum(u, 0.0) ** p
        return u * (afun(x) - up)

    def df(x, u):
        return afun(x) - (p + 1.0) * np.maximum(u, 0.0) ** p

    return Nonlinearity(f, df, float(nu), float(R0), lambda x: np.full(np.shape(x), S),
                        kind="model", p=float(p),
                        potential=a if isinstance(a, Field) else None)


def _far_radius(a: Field, nu) -> float:
    """Smallest node radius beyond which a <= -nu on the grid."""
    if nu is None:
        return math.nan
    x = a.grid.x
    bad = np.abs(x)[a.values > -nu + 1e-12 * (1.0 + abs(nu))]
    return float(bad.max()) if bad.size else 0.0


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        g0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return g0 / (g0 + g1)


def patch_bump(x, width: float = 2.0, shape: str = "box-smoothed", transition: float = 0.25):
    """Patch indicator: a smoothed box of the given width, or a Gaussian."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * width
    if shape == "box-smoothed":
        return 1.0 - smooth_step((np.abs(x) - half) / transition)
    if shape == "gaussian":
        return np.exp(-(x / half) ** 2)
    raise DomainError(f"unknown patch shape {shape!r}; expected one of {PATCH_SHAPES}")


def patch_radius(width: float = 2.0, shape: str = "box-smoothed", transition: float = 0.25) -> float:
    """R0 beyond which the bump vanishes (Gaussian: drops below 1e-12)."""
    if shape == "box-smoothed":
        return 0.5 * width + transition
    return 0.5 * width * math.sqrt(math.log(1e12))


def standard_patch(grid: Grid, a0: float = 2.0, nu: float = 1.0, width: float = 2.0,
                   shape: str = "box-smoothed", transition: float = 0.25) -> Field:
    """a(x) = a0 b(x) - nu (1 - b(x)) with a Constant(-nu) extension."""
    if not nu > 0:
        raise DomainError(f"nu must be > 0, got {nu}")
    b = patch_bump(grid.x, width, shape, transition)
    return Field(grid, a0 * b - nu * (1.0 - b), Constant(-nu, -nu))


def standard_model(grid: Grid, a0: float = 2.0, nu: float = 1.0, p: float = 1.0,
                   width: float = 2.0, shape: str = "box-smoothed", S: float | None = None,
                   transition: float = 0.25) -> Nonlinearity:
    a = standard_patch(grid, a0, nu, width, shape, transition)
    return model_kpp(a, p, nu, patch_radius(width, shape, transition), S)


def custom(f, df, nu: float, R0: float, S: float | Callable = 1.0) -> Nonlinearity:
    sat = S if callable(S) else (lambda x, v=float(S): np.full(np.shape(x), v))
    return Nonlinearity(f, df, float(nu), float(R0), sat)


# --------------------------------------------------------------------------
# hypothesis checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    detail: str = ""
    witness: tuple | None = None


@dataclass(frozen=True)
class HypothesisReport:
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __getitem__(self, name) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [f"{c.name}: {'pass' if c.passed else 'FAIL'}"
                + (f" ({c.detail})" if c.detail else "") for c in self.clauses]


def check_hypotheses(nl: Nonlinearity, grid: Grid, ladder=DEFAULT_LADDER) -> HypothesisReport:
    """Check the structural hypotheses on the nodes of ``grid``."""
    x = grid.x
    ladder = np.asarray(ladder, dtype=float)
    X, U = np.meshgrid(x, ladder, indexing="ij")
    out = []

    f0 = nl(x, np.zeros_like(x))
    i = int(np.argmax(np.abs(f0)))
    ok = bool(np.all(f0 == 0.0))
    out.append(Clause("H1 f(x,0)=0", ok, "" if ok else f"f={f0[i]:.3g} at x={x[i]:.6g}",
                      None if ok else (x[i], 0.0)))

    ratio = nl(X, U) / U
    d = np.diff(ratio, axis=1)
    ok = bool(np.all(d < 0))
    if ok:
        out.append(Clause("H1 f(x,u)/u decreasing", True))
    else:
        i, j = np.unravel_index(int(np.argmax(d)), d.shape)
        out.append(Clause("H1 f(x,u)/u decreasing", False,
                          f"increases between u={ladder[j]:.3g} and u={ladder[j + 1]:.3g} "
                          f"at x={x[i]:.6g}", (x[i], ladder[j])))

    S = nl.saturation(x)
    fS = nl(x, S)
    ok = bool(np.all(fS <= 0))
    i = int(np.argmax(fS))
    out.append(Clause("H1 f(x,S(x))<=0", ok, "" if ok else f"f={fS[i]:.3g} at x={x[i]:.6g}",
                      None if ok else (x[i], S[i])))

    a = nl.a(x)
    far = np.abs(x) >= nl.R0
    ok = nl.nu > 0
    detail = "" if ok else f"nu={nl.nu:.3g} is not positive"
    witness = None
    if ok and np.any(far):
        excess = a[far] + nl.nu
        tol = 1e-12 * (1.0 + nl.nu)
        if np.any(excess > tol):
            k = int(np.argmax(excess))
            ok = False
            witness = (x[far][k], a[far][k])
            detail = f"a={witness[1]:.3g} > -nu at x={witness[0]:.6g}"
    out.append(Clause("H2 a<=-nu for |x|>=R0", ok, detail, witness))

    dfu = nl.df(X, U)
    lip = np.abs(np.diff(dfu, axis=1)) / np.diff(ladder)
    L = float(np.max(lip))
    ok = bool(np.isfinite(L))
    out.append(Clause("H3 d_u f Lipschitz", ok, f"estimate {L:.4g}"))
    return HypothesisReport(tuple(out))


# --------------------------------------------------------------------------
# barrier
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Barrier:
    """Phi(x) = min(kappa |x|^(2s-1), |x|^-beta)."""

    kappa: float
    s: float
    beta: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if not 0.5 < self.s < 1:
            raise DomainError(f"s must lie in (0.5, 1), got {self.s}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be > 0, got {self.kappa}")
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 + 2.0 * self.s)
        if not 1.0 < self.beta <= 1.0 + 2.0 * self.s:
            raise DomainError(f"beta must lie in (1, 1+2s], got {self.beta}")
        if self.eps is not None and not 0 < self.eps < 0.5 * self.r_kappa:
            raise DomainError(f"eps must lie in (0, r_kappa/2) = (0, {0.5 * self.r_kappa:.6g})")

    @property
    def r_kappa(self) -> float:
        return self.kappa ** (-1.0 / (2 * self.s - 1 + self.beta))

    @property
    def theta(self) -> float:
        return 2 * self.s / (2 * self.s - 1 + self.beta)

    def __call__(self, x) -> np.ndarray:
        r = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            inner = self.kappa * r ** (2 * self.s - 1)
            outer = np.where(r > 0, r, np.inf) ** (-self.beta)
        return np.where(r <= self.r_kappa, inner, outer)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.abs(x)
        q = np.where(r <= self.r_kappa, 2 * self.s - 1, -self.beta)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sign(x) * q * self(x) / r

    def _branch(self, r: float) -> tuple[float, float]:
        """(amplitude, exponent) of the power law active at radius r."""
        if r <= self.r_kappa:
            return self.kappa, 2 * self.s - 1
        return 1.0, -self.beta

    def mollified(self, x, eps: float | None = None, n_nodes: int = 64) -> np.ndarray:
        """(eta_eps * Phi)(x), eta_eps proportional to (1 - (y/eps)^2)^3 on [-eps, eps]."""
        eps = eps or self.eps
        if eps is None:
            raise DomainError("mollification radius is not set")
        t, w = np.polynomial.legendre.leggauss(n_nodes)
        bump = (1.0 - t ** 2) ** 3
        w = w * bump / np.sum(w * bump)
        x = np.asarray(x, dtype=float)
        return (self(x[..., None] - eps * t) * w).sum(axis=-1)


def barrier_values(b: Barrier, x, grid: Grid | None = None, mollified: bool = False) -> Field:
    """Phi (or Phi_eps) sampled at the grid nodes."""
    if grid is None:
        x = np.asarray(x, dtype=float)
        grid = Grid(float(np.max(np.abs(x))), len(x))
    vals = b.mollified(grid.x) if mollified else b(grid.x)
    return Field(grid, vals)


def _series_second_difference(A: float, q: float, x: float, delta: float, s: float,
                              n_terms: int = 80) -> float:
    """int_0^delta [f(x+r) + f(x-r) - 2 f(x)] r^(-1-2s) dr for f = A r^q, delta <= x/2."""
    k = np.arange(1, n_terms + 1)
    coef = special.binom(q, 2 * k)
    terms = coef * (delta / x) ** (2 * k) / (2 * k - 2 * s)
    return float(2.0 * A * x ** q * delta ** (-2 * s) * np.sum(terms))


def fractional_laplacian_barrier(b: Barrier, x: float, constant: float = 1.0,
                                 epsabs: float = 1e-12) -> tuple[float, float]:
    """(Delta^s Phi(x), error estimate) by adaptive quadrature."""
    s = b.s
    r = abs(float(x))
    if r == 0:
        raise DomainError("the barrier is evaluated away from the origin")
    kinks = [0.0, b.r_kappa]
    delta = 0.5 * min(abs(r - k) for k in kinks)
    A, q = b._branch(r)
    near = _series_second_difference(A, q, r, delta, s)
    phi_x = float(b(r))
    breaks = sorted({r - b.r_kappa, r, r + b.r_kappa} - {0.0})
    breaks = [p for p in breaks if p > delta]
    pts = [delta] + breaks

    def g(t):
        return (float(b(r + t)) + float(b(r - t))) * t ** (-1.0 - 2.0 * s)

    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(pts[:-1], pts[1:]):
            v, e = integrate.quad(g, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=200)
            total += v
            err += e
        v, e = integrate.quad(g, pts[-1], np.inf, epsabs=epsabs, epsrel=1e-12, limit=200)
    total += v
    err += e
    far = total - 2.0 * phi_x * delta ** (-2 * s) / (2 * s)
    return constant * (near + far), constant * err


@dataclass(frozen=True)
class BarrierCertificate:
    x: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    passed_points: np.ndarray
    C_beta: float
    R_nu: float
    kappa: float
    nu: float
    c: float

    @property
    def passed(self) -> bool:
        """True when a finite radius R_nu exists inside the sample."""
        return bool(np.isfinite(self.R_nu))

    def rows(self):
        return self.x, self.values, self.passed_points


def default_sample(b: Barrier, factor_max: float = 1e3, n: int = 40) -> np.ndarray:
    """Log-spaced points |x| / r_kappa in (1, factor_max], both signs."""
    r = b.r_kappa * np.geomspace(1.05, factor_max, n)
    return np.concatenate([-r[::-1], r])


def certify_barrier(b: Barrier, spec: OperatorSpec, nu: float, sample=None,
                    abs_tol: float = 1e-8) -> BarrierCertificate:
    """Evaluate Delta^s Phi + c Phi' - nu Phi on a sample of points.

    C_beta is the largest value of Delta^s Phi / (kappa^theta Phi) over
    sampled |x| > r_kappa.  R_nu is the smallest sampled radius beyond which
    the combination is nonpositive at every sampled point (inf if the
    outermost point already fails).
    """
    if spec.s != b.s:
        raise PreconditionError("barrier and operator use different orders s")
    if not nu >= 0:
        raise DomainError(f"nu must be >= 0, got {nu}")
    x = default_sample(b) if sample is None else np.asarray(sample, dtype=float)
    C = spec.constant
    vals = np.empty(len(x))
    errs = np.empty(len(x))
    lap = np.empty(len(x))
    for i, xi in enumerate(x):
        if min(abs(abs(xi)), abs(abs(xi) - b.r_kappa)) < 1e-9 * max(1.0, b.r_kappa):
            raise PreconditionError(f"sample point {xi} sits on a kink of the barrier")
        v, e = fractional_laplacian_barrier(b, xi, C)
        if e > abs_tol:
            raise CertificationError(f"quadrature error {e:.2e} exceeds {abs_tol:.0e} at x={xi}",
                                     last_valid=v)
        lap[i] = v
        errs[i] = e
    phi = b(x)
    vals = lap + spec.c * b.derivative(x) - nu * phi
    ok = vals + errs <= 0
    outer = np.abs(x) > b.r_kappa
    ratio = lap[outer] / (b.kappa ** b.theta * phi[outer])
    C_beta = float(np.max(ratio)) if ratio.size else math.nan

    radii = np.abs(x)
    failing = radii[~ok]
    if failing.size == 0:
        R_nu = float(radii.min())
    elif failing.max() >= radii.max():
        R_nu = math.inf
    else:
        R_nu = float(np.min(radii[radii > failing.max()]))
    return BarrierCertificate(x, vals, errs, ok, C_beta, R_nu, b.kappa, nu, spec.c)


def admissible_kappa(s: float, nu: float, C_beta: float, margin: float = 2.0,
                     beta: float | None = None) -> float:
    """Largest kappa with kappa^theta C_beta <= nu / margin."""
    beta = 1.0 + 2.0 * s if beta is None else beta
    theta = 2 * s / (2 * s - 1 + beta)
    return (nu / (margin * C_beta)) ** (1.0 / theta)
