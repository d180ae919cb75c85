"""Discrete fractional Laplacian and the drift-reaction operator built on it.

On a uniform grid with spacing h the discrete Delta^s (= -(-Delta)^s) is a
symmetric Toeplitz matrix

    (Delta^s u)_i = sum_{k>=1} t_k (u_{i+k} + u_{i-k} - 2 u_i),

assembled as follows:

* cells away from the singularity, |r| >= h: the piecewise-linear interpolant
  of u is integrated exactly against |r|^(-1-2s) (hat-function moments), with
  a curvature correction of the moments that removes the O(h^2) interpolation
  error;
* the singular cell |r| < h: second-order Taylor rule, the symmetric
  difference u_{i+1} + u_{i-1} - 2u_i standing in for u'' h^2;
* the remaining local error terms scaling like u'' h^(2-2s) and
  u^(4) h^(4-2s) are computed in closed form (Hurwitz zeta, analytically
  continued) and cancelled through t_1 and a sparse spacing-m stencil.

The result is (at least) second-order consistent for smooth u, has t_k > 0 for k >= 1
(nonnegative off-diagonal couplings) and annihilates constants once the
exterior is accounted for.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
import scipy.fft
import scipy.linalg
from scipy import special

from .errors import DataError, DomainError, ResourceError, ShapeError
from .grid import Analytic, Constant, Field, Grid, PowerTail, Zero

FFT_MIN_POINTS = 512
DENSE_CAP = 4096
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL01_X = 0.5 * (_GL_NODES + 1.0)
_GL01_W = 0.5 * _GL_WEIGHTS


def c_s_constant(s: float) -> float:
    """Normalising constant of (-Delta)^s in one dimension."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    return 2.0 ** (2 * s) * s * special.gamma(0.5 + s) / (math.sqrt(math.pi) * special.gamma(1.0 - s))


# --------------------------------------------------------------------------
# scaled (h = 1) kernel moments
# --------------------------------------------------------------------------

def _hat_moment_first(s: float) -> float:
    """int_1^2 (2 - t) t^(-1-2s) dt."""
    a = 2.0 * s
    return 2.0 * (1.0 - 2.0 ** (-a)) / a - (2.0 ** (1.0 - a) - 1.0) / (1.0 - a)


def _hat_moments(s: float, k: np.ndarray) -> np.ndarray:
    """int hat_k(t) t^(-1-2s) dt for integer offsets k >= 2 (Gauss-Legendre)."""
    k = np.asarray(k, dtype=float)[:, None]
    q = -1.0 - 2.0 * s
    rising = (_GL01_X * (k - 1.0 + _GL01_X) ** q) @ _GL01_W
    falling = ((1.0 - _GL01_X) * (k + _GL01_X) ** q) @ _GL01_W
    return rising + falling


def _hat_tail_sum(s: float, m: np.ndarray) -> np.ndarray:
    """sum_{k>=m} of the hat moments, m >= 2."""
    m = np.asarray(m, dtype=float)
    q = -1.0 - 2.0 * s
    rising = (_GL01_X * (m[..., None] - 1.0 + _GL01_X) ** q) @ _GL01_W
    return m ** (-2.0 * s) / (2.0 * s) + rising


def interpolation_bias(s: float) -> float:
    """sum_{k>=1} int_k^{k+1} (t-k)(k+1-t) t^(-1-2s) dt, via the Hurwitz zeta."""
    z = special.zeta(1.0 + 2.0 * s, 1.0 + _GL01_X)
    return float(np.sum(_GL01_W * _GL01_X * (1.0 - _GL01_X) * z))


def _near_weight(s: float) -> float:
    """Extra weight on the first offset: singular cell minus far-field biases."""
    return 1.0 / (2.0 - 2.0 * s) - interpolation_bias(s) + 1.0 / (12.0 * s)


def _regularised_far_sum(s: float, n: int) -> float:
    """Zeta-regularised action of the far-field rule on the monomial t^n.

    The hat-interpolated, curvature-corrected sum is expanded in powers of
    t = k + tau; each power sums to a Hurwitz zeta value, continued
    analytically where the plain sum diverges.
    """
    P = np.polynomial.Polynomial
    mono = P([0.0] * n + [1.0])
    corrected = mono - (mono(P([1.0, 1.0])) - 2.0 * mono + mono(P([-1.0, 1.0]))) / 12.0
    total = 0.0
    for tau, w in zip(_GL01_X, _GL01_W):
        poly = (1.0 - tau) * corrected(P([-tau, 1.0])) + tau * corrected(P([1.0 - tau, 1.0]))
        acc = 0.0
        for j, a in enumerate(poly.coef):
            if a != 0.0:
                acc += a * float(mpmath.zeta(1.0 + 2.0 * s - j, 1.0 + tau))
        total += w * acc
    return total


@lru_cache(maxsize=64)
def _row_structure(s: float) -> tuple[float, float, int]:
    """(near weight, quartic error coefficient, quartic stencil spacing).

    The quartic term of the local error, of size u^(4) h^(4-2s), is removed
    with the spacing-m estimate g_{2m} - 4 g_m of u^(4) m^4 h^4.  The smallest
    m is taken for which t_{2m} keeps at least a quarter of its uncorrected
    value, so all off-diagonal couplings stay positive.
    """
    eta = _near_weight(s)
    q4 = float(eta + _regularised_far_sum(s, 4))
    m = 1
    while True:
        base = _curvature_weights(s, np.array([2 * m]))[0]
        if base - q4 / (12.0 * m ** 4) >= 0.25 * base:
            return eta, q4, m
        m += 1


def _omega(s: float, k: np.ndarray) -> np.ndarray:
    """Hat moments for k >= 0 (zero at k = 0, half hat at k = 1)."""
    k = np.asarray(k)
    out = np.zeros(k.shape)
    out[k == 1] = _hat_moment_first(s)
    big = k >= 2
    if np.any(big):
        out[big] = _hat_moments(s, k[big])
    return out


def _curvature_weights(s: float, k: np.ndarray) -> np.ndarray:
    """Hat moments with the trapezoid-type curvature correction, k >= 1."""
    k = np.asarray(k)
    om = _omega(s, k)
    return om - (_omega(s, k - 1) - 2.0 * om + _omega(s, k + 1)) / 12.0


def _unit_weights(s: float, k) -> np.ndarray:
    """Couplings t_k (h = 1, unit normalisation) for offsets k >= 1."""
    k = np.asarray(k)
    eta, q4, m = _row_structure(s)
    out = _curvature_weights(s, k)
    out = out + np.where(k == 1, eta, 0.0)
    out = out + np.where(k == m, 4.0 * q4 / (12.0 * m ** 4), 0.0)
    out = out - np.where(k == 2 * m, q4 / (12.0 * m ** 4), 0.0)
    return out


def _unit_tail_sum(s: float, M) -> np.ndarray:
    """sum_{k>=M} t_k (h = 1, unit normalisation) for M >= 2."""
    M = np.asarray(M)
    eta, q4, m = _row_structure(s)
    out = _hat_tail_sum(s, M) - (_omega(s, M - 1) - _omega(s, M)) / 12.0
    out = out + np.where(M <= m, 4.0 * q4 / (12.0 * m ** 4), 0.0)
    out = out - np.where(M <= 2 * m, q4 / (12.0 * m ** 4), 0.0)
    return out


@lru_cache(maxsize=32)
def _unit_row(s: float, n: int) -> np.ndarray:
    """Toeplitz row for h = 1 and unit normalisation, offsets 0..n-1."""
    eta, q4, m = _row_structure(s)
    row = np.empty(n)
    # off-diagonal mass over the whole line, in closed form
    total = 1.0 / (2.0 * s) + _hat_moment_first(s) / 12.0 + eta + q4 / (4.0 * m ** 4)
    row[0] = -2.0 * total
    if n > 1:
        row[1:] = _unit_weights(s, np.arange(1, n))
    row.flags.writeable = False
    return row


# --------------------------------------------------------------------------
# specs and assembled objects
# --------------------------------------------------------------------------

NORMALIZATIONS = ("unit", "paper")
DRIFT_SCHEMES = ("central", "upwind")


@dataclass(frozen=True)
class OperatorSpec:
    """Order, drift speed and discretisation choices for L_{c,a}.

    ``peclet_threshold`` controls the automatic switch from central to upwind
    drift: the switch happens when |c| exceeds ``peclet_threshold`` times the
    largest speed for which the central stencil keeps the M-matrix sign
    structure.  Use ``math.inf`` to disable it.
    """

    s: float
    c: float = 0.0
    normalization: str = "unit"
    drift_scheme: str = "central"
    peclet_threshold: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.s < 1.0:
            raise DomainError(f"s must lie in (0.5, 1), got {self.s}")
        if not math.isfinite(self.c):
            raise DomainError("drift speed c must be finite")
        if self.normalization not in NORMALIZATIONS:
            raise DomainError(f"normalization must be one of {NORMALIZATIONS}")
        if self.drift_scheme not in DRIFT_SCHEMES:
            raise DomainError(f"drift_scheme must be one of {DRIFT_SCHEMES}")
        if not self.peclet_threshold > 0:
            raise DomainError("peclet_threshold must be > 0")

    @property
    def constant(self) -> float:
        return c_s_constant(self.s) if self.normalization == "paper" else 1.0

    def with_speed(self, c: float) -> "OperatorSpec":
        return OperatorSpec(self.s, c, self.normalization, self.drift_scheme, self.peclet_threshold)


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Symmetric Toeplitz row of the discrete Delta^s on ``grid``."""

    grid: Grid
    s: float
    constant: float
    row: np.ndarray

    @property
    def h(self) -> float:
        return self.grid.h

    def weight(self, k) -> np.ndarray:
        """Coupling t_k for arbitrary offsets (including beyond the grid)."""
        k = np.abs(np.asarray(k))
        out = np.empty(k.shape)
        inside = k < len(self.row)
        out[inside] = self.row[k[inside]]
        if np.any(~inside):
            out[~inside] = self._scale * _unit_weights(self.s, k[~inside])
        return out

    @property
    def _scale(self) -> float:
        return self.constant * self.grid.h ** (-2.0 * self.s)

    def tail_sum(self, m) -> np.ndarray:
        """sum_{k>=m} t_k for m >= 2."""
        return self._scale * _unit_tail_sum(self.s, m)

    def exterior_mass(self) -> tuple[np.ndarray, np.ndarray]:
        """(right, left) kernel mass beyond +-L seen from each node."""
        x, L, a = self.grid.x, self.grid.half_width, 2.0 * self.s
        with np.errstate(divide="ignore"):
            right = self.constant * (L - x) ** (-a) / a
            left = self.constant * (L + x) ** (-a) / a
        return right, left

    def to_csv(self, path) -> None:
        from .io import write_csv
        k = np.arange(len(self.row))
        write_csv(path, ("offset", "weight"), [k, self.row])


def build_kernel(grid: Grid, spec: OperatorSpec) -> KernelWeights:
    C = spec.constant
    row = C * grid.h ** (-2.0 * spec.s) * _unit_row(spec.s, grid.n_points)
    row.flags.writeable = False
    return KernelWeights(grid, spec.s, C, row)


class _ToeplitzFFT:
    """Circulant embedding of a symmetric Toeplitz matrix."""

    def __init__(self, row: np.ndarray):
        n = len(row)
        circ = np.concatenate([row, [0.0], row[:0:-1]])
        self.n = n
        self.size = 2 * n
        self.symbol = scipy.fft.rfft(circ)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if v.ndim == 1:
            return scipy.fft.irfft(self.symbol * scipy.fft.rfft(v, self.size), self.size)[: self.n]
        vf = scipy.fft.rfft(v, self.size, axis=0)
        return scipy.fft.irfft(self.symbol[:, None] * vf, self.size, axis=0)[: self.n]


@dataclass(eq=False)
class NonlocalOperator:
    """L_{c,a} u = Delta^s u + c u' + a(x) u on a uniform grid.

    Immutable after construction.  Factorisations requested by the spectral
    and time-stepping modules are cached per shift under a lock.
    """

    spec: OperatorSpec
    kernel: KernelWeights
    potential: np.ndarray
    drift: str = field(init=False)
    peclet: float = field(init=False)
    _lock: threading.Lock = field(init=False, repr=False, default_factory=threading.Lock)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        a = np.array(self.potential, dtype=float)
        if a.shape != (self.grid.n_points,):
            raise ShapeError("potential must have one value per grid node")
        if not np.all(np.isfinite(a)):
            raise DataError("potential must be finite")
        a.flags.writeable = False
        self.potential = a
        # central drift keeps t_1 - |c|/(2h) >= 0 iff |c| <= 2 h t_1
        c_max = 2.0 * self.grid.h * self.kernel.row[1]
        self.peclet = abs(self.spec.c) / c_max
        if self.spec.drift_scheme == "upwind" or self.peclet > self.spec.peclet_threshold:
            self.drift = "upwind"
        else:
            self.drift = "central"

    @property
    def grid(self) -> Grid:
        return self.kernel.grid

    @property
    def c(self) -> float:
        return self.spec.c

    @property
    def n(self) -> int:
        return self.grid.n_points

    def with_potential(self, a) -> "NonlocalOperator":
        return NonlocalOperator(self.spec, self.kernel, _potential_values(self.grid, a))

    def with_speed(self, c: float) -> "NonlocalOperator":
        return NonlocalOperator(self.spec.with_speed(c), self.kernel, self.potential)

    def linear_part(self) -> "NonlocalOperator":
        """Same operator without the potential term (Delta^s + c d/dx)."""
        return NonlocalOperator(self.spec, self.kernel, np.zeros(self.n))

    # -- drift ----------------------------------------------------------------

    def _drift_offsets(self) -> dict[int, float]:
        """Stencil coefficients {offset: weight} of c d/dx."""
        c, h = self.spec.c, self.grid.h
        if c == 0.0:
            return {}
        if self.drift == "central":
            return {1: c / (2 * h), -1: -c / (2 * h)}
        if c > 0:
            return {1: c / h, 0: -c / h}
        return {0: c / h, -1: -c / h}

    # -- application ----------------------------------------------------------

    @property
    def _fft(self) -> _ToeplitzFFT:
        with self._lock:
            if "fft" not in self._cache:
                self._cache["fft"] = _ToeplitzFFT(self.kernel.row)
            return self._cache["fft"]

    @property
    def _toeplitz_dense(self) -> np.ndarray:
        with self._lock:
            if "toeplitz" not in self._cache:
                self._cache["toeplitz"] = scipy.linalg.toeplitz(self.kernel.row)
            return self._cache["toeplitz"]

    def fractional_matvec(self, v: np.ndarray, method: str = "auto") -> np.ndarray:
        """Delta^s v for nodal values v with a zero exterior."""
        if method == "auto":
            method = "fft" if self.n >= FFT_MIN_POINTS else "dense"
        if method == "fft":
            return self._fft.matvec(v)
        if method == "dense":
            return self._toeplitz_dense @ v
        raise DomainError(f"unknown method {method!r}")

    def matvec(self, v, method: str = "auto") -> np.ndarray:
        """L v for raw nodal values with a zero exterior (``to_dense() @ v``)."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise ShapeError(f"expected {self.n} rows, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise DataError("input contains NaN or inf")
        out = self.fractional_matvec(v, method)
        pot = self.potential if v.ndim == 1 else self.potential[:, None]
        out = out + pot * v
        for off, w in self._drift_offsets().items():
            if off == 0:
                out += w * v
            elif off > 0:
                out[:-off] += w * v[off:]
            else:
                out[-off:] += w * v[:off]
        return out

    def apply(self, u: Field, method: str = "auto", pad: int | None = None) -> Field:
        """L u nodewise, honouring the exterior extension of ``u``.

        The result carries a zero extension (it is only defined on the grid).
        """
        if not isinstance(u, Field):
            raise ShapeError("apply expects a Field; use matvec for raw arrays")
        if u.grid != self.grid:
            raise ShapeError("field and operator live on different grids")
        out = self.matvec(u.values, method)
        if not u.extension.is_zero:
            out = out + self.exterior_term(u, pad)
        return Field(self.grid, out)

    def exterior_term(self, u: Field, pad: int | None = None) -> np.ndarray:
        """Contribution of the exterior values of ``u`` to L u at each node."""
        ext = u.extension
        grid, ker = self.grid, self.kernel
        n, h, L = self.n, grid.h, grid.half_width
        P = n - 1 if pad is None else int(pad)
        # exterior lattice j = -P..-1 and n..n+P-1
        j_left = np.arange(-P, 0)
        j_right = np.arange(n, n + P)
        v = np.zeros(n + 2 * P)
        v[:P] = ext.values(grid.lattice(j_left))
        v[P + n:] = ext.values(grid.lattice(j_right))
        M = n + P
        t = ker.weight(np.arange(M))
        kern = np.concatenate([t[:0:-1], t])
        conv = scipy.fft.irfft(
            scipy.fft.rfft(v, len(v) + len(kern) - 1) * scipy.fft.rfft(kern, len(v) + len(kern) - 1),
            len(v) + len(kern) - 1)
        idx = np.arange(n)
        out = conv[M - 1 + P + idx]
        # far remainder beyond the padded lattice
        if isinstance(ext, Constant):
            out += ext.right_value * ker.tail_sum(n + P - idx)
            out += ext.left_value * ker.tail_sum(idx + P + 1)
        elif not ext.is_zero:
            D = L + P * h + 0.5 * h
            ratio = L / D
            n_terms = max(4, int(math.ceil(math.log(1e-17) / math.log(ratio))))
            rem, err = ext.kernel_tail(grid.x, D, self.spec.s, n_terms)
            out += ker.constant * rem
            with self._lock:
                self._cache["last_exterior_error"] = ker.constant * err
        # drift reaches one node beyond the boundary
        offs = self._drift_offsets()
        if offs:
            left_val = ext.values(grid.lattice(np.array([-1])))[0]
            right_val = ext.values(grid.lattice(np.array([n])))[0]
            if 1 in offs:
                out[-1] += offs[1] * right_val
            if -1 in offs:
                out[0] += offs[-1] * left_val
        return out

    # -- matrices ---------------------------------------------------------------

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.n > cap:
            raise ResourceError(f"N={self.n} exceeds the dense cap {cap}")
        M = scipy.linalg.toeplitz(self.kernel.row)
        i = np.arange(self.n)
        M[i, i] += self.potential
        for off, w in self._drift_offsets().items():
            rows = i[max(0, -off):self.n - max(0, off)]
            M[rows, rows + off] += w
        return M

    def restricted_dense(self, mask: np.ndarray, cap: int = DENSE_CAP) -> np.ndarray:
        """Principal submatrix on the nodes selected by ``mask``."""
        idx = np.flatnonzero(mask)
        if len(idx) > cap:
            raise ResourceError(f"{len(idx)} unknowns exceed the dense cap {cap}")
        row = self.kernel.row
        k = np.abs(idx[:, None] - idx[None, :])
        M = row[k]
        M[np.diag_indices(len(idx))] += self.potential[idx]
        for off, w in self._drift_offsets().items():
            M[(idx[None, :] - idx[:, None]) == off] += w
        return M

    def implicit_factor(self, dt: float):
        """Cached LU factors of (I - dt (Delta^s + c d/dx)) on the full grid."""
        key = ("implicit", float(dt))
        with self._lock:
            lu = self._cache.get(key)
        if lu is None:
            A = -dt * self.linear_part().to_dense(cap=max(DENSE_CAP, self.n))
            A[np.diag_indices(self.n)] += 1.0
            lu = scipy.linalg.lu_factor(A, check_finite=False)
            with self._lock:
                self._cache[key] = lu
        return lu


def _potential_values(grid: Grid, a) -> np.ndarray:
    if a is None:
        return np.zeros(grid.n_points)
    if isinstance(a, Field):
        if a.grid != grid:
            raise ShapeError("potential lives on a different grid")
        return a.values
    if callable(a):
        return np.asarray(a(grid.x), dtype=float)
    return np.asarray(a, dtype=float)


def build_operator(grid: Grid, spec: OperatorSpec, a=None) -> NonlocalOperator:
    """Assemble L_{c,a}; ``a`` may be a Field, callable, array or None (zero)."""
    return NonlocalOperator(spec, build_kernel(grid, spec), _potential_values(grid, a))


def apply(op: NonlocalOperator, u: Field, method: str = "auto") -> Field:
    return op.apply(u, method)


def to_dense(op: NonlocalOperator, cap: int = DENSE_CAP) -> np.ndarray:
    return op.to_dense(cap)


def bench_matvec(grid: Grid, spec: OperatorSpec, repeats: int = 5, seed: int = 0) -> dict:
    """Time dense and FFT application of Delta^s on random input."""
    op = build_operator(grid, spec)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.n_points)
    dense = op.to_dense(cap=grid.n_points)
    best_dense = best_fft = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        y_dense = dense @ v
        best_dense = min(best_dense, time.perf_counter() - t0)
        t0 = time.perf_counter()
        y_fft = op.matvec(v, method="fft")
        best_fft = min(best_fft, time.perf_counter() - t0)
    rel = float(np.max(np.abs(y_dense - y_fft)) / np.max(np.abs(y_dense)))
    return {
        "n_points": grid.n_points,
        "dense_seconds": best_dense,
        "fft_seconds": best_fft,
        "speedup": best_dense / best_fft,
        "max_rel_diff": rel,
    }
