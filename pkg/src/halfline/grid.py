"""Uniform grids, sampled functions, quadrature and discrete calculus on [0, L].

All other modules represent real-valued functions on a truncated half-line by
their samples at the ``n + 1`` nodes of a uniform grid.  Definite integrals use
composite Simpson (exact for cubics on each panel).  Running integrals use a
corrected trapezoid rule whose increments are clipped at zero for nonnegative
integrands, so cumulative integrals of squares are guaranteed monotone.
Derivatives use central differences in the interior and one-sided 4-point
stencils at the two boundary nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import GridTooCoarse, HypothesisViolated


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, L] with n intervals (n even, so Simpson applies)."""

    L: float
    n: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.L) or self.L <= 0.0:
            raise ValueError(f"domain length must be positive and finite, got {self.L}")
        if self.n < 16:
            raise GridTooCoarse(f"need at least 16 intervals, got {self.n}")
        if self.n % 2 != 0:
            raise ValueError(f"interval count must be even for Simpson quadrature, got {self.n}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)

    def refined(self) -> "Grid":
        return Grid(self.L, 2 * self.n)

    def coarsened(self) -> "Grid":
        if self.n % 2 != 0 or (self.n // 2) % 2 != 0:
            raise ValueError("interval count must be divisible by 4 to coarsen")
        return Grid(self.L, self.n // 2)


@dataclass(eq=False)
class SampledFunction:
    """Real-valued function represented by its node values on a Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise ValueError(
                f"expected {self.grid.n + 1} samples, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        self.values = v

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "SampledFunction":
        v = np.asarray(fn(grid.x), dtype=float)
        if v.ndim == 0:
            v = np.full(grid.n + 1, float(v))
        return cls(grid, v)

    @classmethod
    def zeros(cls, grid: Grid) -> "SampledFunction":
        return cls(grid, np.zeros(grid.n + 1))

    def copy(self) -> "SampledFunction":
        return SampledFunction(self.grid, self.values.copy())


@dataclass(frozen=True)
class Robin:
    """Boundary condition phi'(0) - sigma0 * phi(0) = 0; sigma0 = 0 is Neumann."""

    sigma0: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma0):
            raise ValueError("Robin parameter must be finite")


@dataclass(frozen=True)
class Dirichlet:
    """Boundary condition phi(0) = 0."""


BoundaryCondition = Union[Robin, Dirichlet]


@dataclass(eq=False)
class Problem:
    """Potential plus origin boundary condition on a truncated half-line.

    ``support_end`` records the smallest node coordinate beyond which the
    potential vanishes; nodes strictly beyond it must carry zeros.  When
    ``lt_mode`` is set the potential must be nonpositive (the hypothesis of
    the 3/2-moment bounds), and violations raise ``HypothesisViolated``.
    """

    potential: SampledFunction
    bc: BoundaryCondition
    support_end: float
    lt_mode: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.bc, (Robin, Dirichlet)):
            raise TypeError(f"unsupported boundary condition {self.bc!r}")
        L = self.potential.grid.L
        if not (0.0 <= self.support_end <= L):
            raise ValueError(f"support_end {self.support_end} outside [0, {L}]")
        if self.lt_mode and np.max(self.potential.values) > 1e-12:
            raise HypothesisViolated(
                f"potential has positive samples up to {np.max(self.potential.values):.3e}"
            )

    @property
    def grid(self) -> Grid:
        return self.potential.grid


def integrate(f: SampledFunction) -> float:
    """Composite Simpson value of the integral of f over [0, L]."""
    g = f.grid
    if g.n % 2 != 0:
        raise ValueError("Simpson quadrature needs an even interval count")
    v = f.values
    return (g.h / 3.0) * (v[0] + v[-1] + 4.0 * np.sum(v[1:-1:2]) + 2.0 * np.sum(v[2:-1:2]))


def simpson_inner(f: SampledFunction, g: SampledFunction) -> float:
    """Simpson inner product of two functions on the same grid."""
    if f.grid != g.grid:
        raise ValueError("functions live on different grids")
    return integrate(SampledFunction(f.grid, f.values * g.values))


def _corrected_increments(f: SampledFunction) -> np.ndarray:
    """Per-interval integral estimates: trapezoid with derivative correction.

    The correction term restores fourth-order accuracy for smooth data.  When
    both endpoint samples are nonnegative the increment is clipped at zero;
    in dead zones of a nonnegative integrand the clip is exact and it keeps
    running integrals of squares monotone.
    """
    g = f.grid
    v = f.values
    fp = derivative(f).values
    h = g.h
    inc = 0.5 * h * (v[:-1] + v[1:]) - (h * h / 12.0) * (fp[1:] - fp[:-1])
    both_nonneg = (v[:-1] >= 0.0) & (v[1:] >= 0.0)
    return np.where(both_nonneg, np.maximum(inc, 0.0), inc)


def cumulative_integral(f: SampledFunction) -> SampledFunction:
    """Running integral g(x_i) of f from 0, with g(0) = 0."""
    inc = _corrected_increments(f)
    out = np.concatenate(([0.0], np.cumsum(inc)))
    return SampledFunction(f.grid, out)


def reversed_cumulative_integral(f: SampledFunction) -> SampledFunction:
    """Running integral R(x_i) of f from x_i to L, with R(L) = 0.

    Summing from the right keeps R relatively accurate deep in an
    exponentially decaying tail, where the forward running integral would be
    dominated by quadrature error accumulated over the bulk.
    """
    inc = _corrected_increments(f)
    out = np.concatenate((np.cumsum(inc[::-1])[::-1], [0.0]))
    return SampledFunction(f.grid, out)


def derivative(f: SampledFunction) -> SampledFunction:
    """Discrete d/dx: central differences inside, 4-point one-sided at the ends."""
    g = f.grid
    if g.n < 4:
        raise ValueError("derivative needs at least 4 intervals")
    v = f.values
    h = g.h
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    d[0] = (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h)
    d[-1] = (11.0 * v[-1] - 18.0 * v[-2] + 9.0 * v[-3] - 2.0 * v[-4]) / (6.0 * h)
    return SampledFunction(g, d)


def default_domain(support_end: float, lam_est: float | None = None) -> float:
    """Default truncation length: support plus max(10, 8 / sqrt(|lam_est|)).

    ``lam_est`` should estimate the negative eigenvalue closest to zero since
    that mode decays slowest.  The eigensolver doubles the domain further if
    an eigenfunction tail still reaches the boundary.
    """
    pad = 10.0
    if lam_est is not None and lam_est < 0.0:
        pad = max(10.0, 8.0 / np.sqrt(abs(lam_est)))
    return support_end + pad


def write_csv(f: SampledFunction, path) -> None:
    """Write a sampled function as two-column CSV (x, value) at full precision."""
    data = np.column_stack([f.grid.x, f.values])
    np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column (x, value) CSV with a header line."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"expected two columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1]


def sampled_from_csv(path) -> SampledFunction:
    """Load a sampled function whose x column is a uniform grid starting at 0."""
    x, v = read_csv(path)
    if len(x) < 17:
        raise GridTooCoarse(f"need at least 17 samples, got {len(x)}")
    if abs(x[0]) > 1e-12 * max(1.0, abs(x[-1])):
        raise ValueError("grid must start at x = 0")
    h = x[1] - x[0]
    if not np.allclose(np.diff(x), h, rtol=0.0, atol=1e-9 * max(h, 1.0)):
        raise ValueError("grid is not uniform")
    grid = Grid(float(x[-1]), len(x) - 1)
    return SampledFunction(grid, v)
