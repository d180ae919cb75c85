"""Uniform grids on [-L, L], sampled fields and far-field extension policies.

A :class:`Field` carries its own exterior model (an :class:`Extension`), so the
same operator can be applied under different far-field assumptions.  The
default is :class:`Zero`, i.e. a Dirichlet exterior.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, DataError, DomainError


@dataclass(frozen=True)
class Grid:
    """Endpoint-inclusive uniform grid with ``n_points`` nodes on [-L, L]."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if not np.isfinite(self.half_width) or self.half_width <= 0:
            raise ConfigurationError(f"half_width must be > 0, got {self.half_width}")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise ConfigurationError(f"n_points must be an integer >= 3, got {self.n_points}")
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.half_width, self.half_width, self.n_points)
        x.flags.writeable = False
        return x

    def __len__(self):
        return self.n_points

    def lattice(self, indices) -> np.ndarray:
        """Positions -L + i*h for arbitrary (possibly exterior) integer indices."""
        return -self.half_width + np.asarray(indices, dtype=float) * self.h

    def index_of(self, x: float, atol: float = 1e-9) -> int:
        """Index of the node at position ``x``; raises if ``x`` is not a node."""
        i = int(round((x + self.half_width) / self.h))
        if i < 0 or i >= self.n_points or abs(self.x[i] - x) > atol * max(1.0, abs(x)):
            raise DomainError(f"x={x} is not a grid node")
        return i


def make_grid(L: float, N: int) -> Grid:
    return Grid(L, N)


# --------------------------------------------------------------------------
# exterior extensions
# --------------------------------------------------------------------------

def _tail_integral_power(L: float, p: float, q: float) -> float:
    """Closed form of int_L^inf y^-p / (1 + y^q) dy  (p >= 0, p + q > 1)."""
    a = (p + q - 1.0) / q
    return L ** (1.0 - p - q) / (p + q - 1.0) * special.hyp2f1(1.0, a, a + 1.0, -L ** (-q))


def _kernel_tail_moments(D: float, x: np.ndarray, s: float, moment, n_terms: int) -> np.ndarray:
    """int_D^inf u(y) (y - x)^(-1-2s) dy via a binomial expansion in x/y.

    ``moment(m)`` must return int_D^inf u(y) y^(-1-2s-m) dy.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    coef = 1.0
    xm = np.ones_like(x)
    for m in range(n_terms):
        out += coef * moment(m) * xm
        coef *= (1.0 + 2.0 * s + m) / (m + 1.0)
        xm = xm * x
    return out


class Extension:
    """Far-field model for a sampled field beyond [-L, L]."""

    #: True when the extension is identically zero (lets operators skip work).
    is_zero = False

    def values(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tail_weighted_l1(self, L: float, q: float) -> tuple[float, float]:
        """(value, error) of int_{|y|>L} |u(y)| / (1 + |y|^q) dy."""
        raise NotImplementedError

    def kernel_tail(self, x: np.ndarray, D: float, s: float, n_terms: int) -> tuple[np.ndarray, float]:
        """Sum over both sides of int_{|y|>D} u(y) |x - y|^(-1-2s) dy.

        Returns the per-node values and an absolute error estimate.
        """
        raise NotImplementedError

    def translated(self, shift: float) -> "Extension":
        """Extension of u(. - shift)."""
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Extension):
    is_zero = True

    def values(self, y):
        return np.zeros(np.shape(y))

    def tail_weighted_l1(self, L, q):
        return 0.0, 0.0

    def kernel_tail(self, x, D, s, n_terms):
        return np.zeros(np.shape(x)), 0.0

    def translated(self, shift):
        return self


@dataclass(frozen=True)
class Constant(Extension):
    left_value: float = 0.0
    right_value: float = 0.0

    def values(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, self.left_value, self.right_value)

    def tail_weighted_l1(self, L, q):
        t = _tail_integral_power(L, 0.0, q)
        return (abs(self.left_value) + abs(self.right_value)) * t, 0.0

    def kernel_tail(self, x, D, s, n_terms):
        x = np.asarray(x, dtype=float)
        right = self.right_value * (D - x) ** (-2 * s) / (2 * s)
        left = self.left_value * (D + x) ** (-2 * s) / (2 * s)
        return right + left, 0.0

    def translated(self, shift):
        return self


@dataclass(frozen=True)
class PowerTail(Extension):
    """u(y) = amplitude * |y|^-exponent on each side."""

    amplitude_left: float = 0.0
    amplitude_right: float = 0.0
    exponent: float = 2.0

    def __post_init__(self):
        if not self.exponent > 1.0:
            raise DomainError(f"PowerTail exponent must be > 1, got {self.exponent}")

    def values(self, y):
        y = np.asarray(y, dtype=float)
        amp = np.where(y < 0, self.amplitude_left, self.amplitude_right)
        return amp * np.abs(y) ** (-self.exponent)

    def tail_weighted_l1(self, L, q):
        t = _tail_integral_power(L, self.exponent, q)
        return (abs(self.amplitude_left) + abs(self.amplitude_right)) * t, 0.0

    def kernel_tail(self, x, D, s, n_terms):
        p = self.exponent

        def moment(m):
            k = p + 2 * s + m
            return D ** (-k) / k

        x = np.asarray(x, dtype=float)
        right = self.amplitude_right * _kernel_tail_moments(D, x, s, moment, n_terms)
        left = self.amplitude_left * _kernel_tail_moments(D, -x, s, moment, n_terms)
        return right + left, 0.0

    def translated(self, shift):
        if shift == 0:
            return self
        return Analytic(lambda y, f=self.values, d=shift: f(np.asarray(y) - d))


@dataclass(frozen=True)
class Analytic(Extension):
    """Exterior values given by a vectorised callback ``func(y)``."""

    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    def values(self, y):
        return np.asarray(self.func(np.asarray(y, dtype=float)), dtype=float) * np.ones(np.shape(y))

    def _scalar(self, y):
        return float(self.values(np.array([y]))[0])

    def tail_weighted_l1(self, L, q):
        total = err = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for sign in (1.0, -1.0):
                val, e = integrate.quad(lambda t: abs(self._scalar(sign * t)) / (1.0 + t ** q),
                                        L, np.inf, limit=400)
                total += val
                err += e
        return total, err

    def kernel_tail(self, x, D, s, n_terms):
        err = 0.0
        cache = {}

        def moment_factory(sign):
            def moment(m):
                key = (sign, m)
                if key not in cache:
                    # oscillatory tails trip the QUADPACK heuristics; the
                    # error estimate is accumulated and reported instead
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", integrate.IntegrationWarning)
                        val, e = integrate.quad(
                            lambda t: self._scalar(sign * t) * t ** (-1.0 - 2 * s - m),
                            D, np.inf, limit=400)
                    nonlocal err
                    err += abs(e) * (1.0 + 2 * s) ** m
                    cache[key] = val
                return cache[key]
            return moment

        x = np.asarray(x, dtype=float)
        right = _kernel_tail_moments(D, x, s, moment_factory(1.0), n_terms)
        left = _kernel_tail_moments(D, -x, s, moment_factory(-1.0), n_terms)
        return right + left, err

    def translated(self, shift):
        if shift == 0:
            return self
        return Analytic(lambda y, f=self.func, d=shift: f(np.asarray(y) - d))


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Field:
    """Real values sampled at the nodes of ``grid`` plus an exterior model."""

    grid: Grid
    values: np.ndarray
    extension: Extension = field(default_factory=Zero)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise DataError(f"expected {self.grid.n_points} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func, extension: Extension | None = None,
                      analytic: bool = False) -> "Field":
        """Sample ``func`` on the grid; ``analytic=True`` also uses it outside."""
        ext = Analytic(func) if analytic else (extension or Zero())
        return cls(grid, func(grid.x), ext)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.extension)

    def with_extension(self, extension: Extension) -> "Field":
        return Field(self.grid, self.values, extension)

    def __call__(self, y) -> np.ndarray:
        """Piecewise-linear interpolant inside, extension outside."""
        y = np.asarray(y, dtype=float)
        L = self.grid.half_width
        inside = np.abs(y) <= L
        out = np.empty(y.shape)
        out[inside] = np.interp(y[inside], self.grid.x, self.values)
        if np.any(~inside):
            out[~inside] = self.extension.values(y[~inside])
        return out

    def resample(self, grid: Grid) -> "Field":
        if grid == self.grid:
            return self
        return Field(grid, self(grid.x), self.extension)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return (f"Field(N={self.grid.n_points}, L={self.grid.half_width}, "
                f"extension={type(self.extension).__name__})")


@dataclass(frozen=True)
class WeightedNormSpec:
    s: float

    def __post_init__(self):
        if not 0.5 < self.s < 1.0:
            raise DomainError(f"s must lie in (0.5, 1), got {self.s}")


def weighted_l1_norm(f: Field, spec: WeightedNormSpec, full_output: bool = False):
    """Approximate int |f(y)| / (1 + |y|^(1+2s)) dy over the whole line.

    Trapezoid rule on the grid plus the exterior contribution of the field's
    extension (closed form except for :class:`Analytic`, which uses adaptive
    quadrature).  With ``full_output`` the error estimate of the exterior part
    is returned as well.
    """
    q = 1.0 + 2.0 * spec.s
    x = f.grid.x
    inner = integrate.trapezoid(np.abs(f.values) / (1.0 + np.abs(x) ** q), x)
    tail, err = f.extension.tail_weighted_l1(f.grid.half_width, q)
    value = float(inner + tail)
    return (value, err) if full_output else value
