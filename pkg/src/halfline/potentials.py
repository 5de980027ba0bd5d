"""Built-in potential families, their closed-form metadata, and CSV ingestion.

Each family constructor returns a ready-to-solve :class:`Problem`.  Families
with known spectra expose independent oracles (transcendental matching for
the square well, closed forms for the free operator and the insertion
family) so the finite-difference solver can be cross-checked against
arithmetic that never touches a matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import GridTooCoarse, HypothesisViolated
from .grid import (
    BoundaryCondition,
    Dirichlet,
    Grid,
    Problem,
    Robin,
    SampledFunction,
    default_domain,
    read_csv,
)

DEFAULT_N = 4096
NODES_PER_UNIT = 400.0  # default resolution; long domains get proportionally more intervals

# Guards: oscillation and decay scales must stay resolvable on default grids.
MAX_WELL_PHASE = 30.0      # sqrt(depth) * width
MAX_INSERTION_PHASE = 120.0  # omega * L, keeps cosh arithmetic inside double range


def _auto_n(L: float) -> int:
    n = max(DEFAULT_N, int(math.ceil(NODES_PER_UNIT * L)))
    return n + (-n) % 8


def _cs(mu: float, a: float) -> tuple[float, float]:
    """Fundamental solutions of u'' = -mu u at x = a: (C, S) with C(0)=1, S'(0)=1."""
    if mu > 0.0:
        r = math.sqrt(mu)
        return math.cos(r * a), math.sin(r * a) / r
    if mu < 0.0:
        r = math.sqrt(-mu)
        return math.cosh(r * a), math.sinh(r * a) / r
    return 1.0, a


def _well_matching(kappa: float, depth: float, width: float, bc: BoundaryCondition) -> float:
    """Matching function whose zeros are the bound states lambda = -kappa^2.

    Inside [0, width] the solution with the origin boundary condition is
    propagated analytically; outside it must join C exp(-kappa x), so the
    eigenvalue condition is phi'(width) + kappa phi(width) = 0.
    """
    mu = depth - kappa * kappa
    C, S = _cs(mu, width)
    if isinstance(bc, Dirichlet):
        # phi(0) = 0, phi'(0) = 1
        return C + kappa * S
    s0 = bc.sigma0
    # phi(0) = 1, phi'(0) = sigma0
    phi_a = C + s0 * S
    dphi_a = -mu * S + s0 * C
    return dphi_a + kappa * phi_a


def square_well_spectrum(depth: float, width: float, bc: BoundaryCondition) -> list[float]:
    """All negative eigenvalues of the square well, by transcendental matching.

    Scans the matching function on a dense kappa grid and polishes each sign
    change with Brent's method.  Independent of any grid discretization.
    """
    if depth <= 0.0 or width <= 0.0:
        raise ValueError("well depth and width must be positive")
    sigma0 = bc.sigma0 if isinstance(bc, Robin) else 0.0
    kappa_max = math.sqrt(depth + (sigma0 * sigma0 if sigma0 < 0.0 else 0.0)) + 1e-9
    npts = max(400, 200 * int(math.ceil(math.sqrt(depth) * width)))
    kappas = np.linspace(1e-12, kappa_max, npts)
    vals = np.array([_well_matching(k, depth, width, bc) for k in kappas])
    roots: list[float] = []
    for i in range(len(kappas) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(kappas[i])
        elif a * b < 0.0:
            roots.append(
                brentq(_well_matching, kappas[i], kappas[i + 1],
                       args=(depth, width, bc), xtol=1e-14, rtol=1e-15)
            )
    lams = sorted(-k * k for k in roots if k * k >= 1e-8)
    return lams


def _snapped_well_grid(width: float, L_raw: float, n_target: int) -> Grid:
    """Grid whose nodes hit the well edge at every refinement level.

    L is the smallest multiple of the width at least L_raw, and the interval
    count is a multiple of 8 * (L / width), so the jump stays on a node after
    three rounds of coarsening.
    """
    k = max(2, int(math.ceil(L_raw / width - 1e-12)))
    L = k * width
    m = 8 * max(2, int(math.ceil(n_target / (8.0 * k))))
    return Grid(L, k * m)


def family_square_well(depth: float, width: float, bc: BoundaryCondition,
                       L: float | None = None, n: int | None = None) -> Problem:
    """V = -depth on [0, width], zero beyond; the standard test family.

    The node at the jump carries the midpoint value -depth/2, which keeps the
    discretization second-order accurate across the discontinuity.
    """
    if depth <= 0.0 or width <= 0.0:
        raise ValueError("well depth and width must be positive")
    if math.sqrt(depth) * width > MAX_WELL_PHASE:
        raise ValueError(
            f"sqrt(depth)*width = {math.sqrt(depth) * width:.1f} exceeds "
            f"{MAX_WELL_PHASE}; eigenfunction oscillation would be under-resolved"
        )
    lams = square_well_spectrum(depth, width, bc)
    lam_est = lams[-1] if lams else None
    L_raw = L if L is not None else default_domain(width, lam_est)
    L_raw = max(L_raw, 2.0 * width)
    grid = _snapped_well_grid(width, L_raw, n or _auto_n(L_raw))
    j = int(round(width / grid.h))
    v = np.zeros(grid.n + 1)
    v[:j] = -depth
    v[j] = -0.5 * depth
    return Problem(SampledFunction(grid, v), bc, support_end=width, lt_mode=True)


def family_free(sigma0: float, L: float | None = None, n: int | None = None) -> Problem:
    """V = 0 with Robin parameter sigma0.

    For sigma0 < 0 the operator has the single negative eigenvalue -sigma0^2
    with eigenfunction proportional to exp(sigma0 x); for sigma0 >= 0 the
    negative spectrum is empty.
    """
    lam_est = -sigma0 * sigma0 if sigma0 < 0.0 else None
    Lf = L if L is not None else default_domain(0.0, lam_est)
    grid = Grid(Lf, n or _auto_n(Lf))
    return Problem(SampledFunction.zeros(grid), Robin(sigma0), support_end=0.0, lt_mode=True)


def free_spectrum(sigma0: float) -> list[float]:
    return [-sigma0 * sigma0] if sigma0 < 0.0 else []


def insertion_potential(omega: float, gamma: float, x: np.ndarray) -> np.ndarray:
    """Potential produced by coupling a cosh(omega x) seed into the free Neumann operator.

    Evaluates V = -2 d/dx (gamma cosh^2(omega x) / (1 + gamma int_0^x cosh^2)).
    The numerator of the derivative is expanded in terms of sinh(2 omega x)
    and cosh(2 omega x), which removes the catastrophic cancellation the raw
    cosh^4 form suffers deep in the tail.
    """
    if gamma <= 0.0:
        raise ValueError("coupling gamma must be positive")
    x = np.asarray(x, dtype=float)
    if omega == 0.0:
        return 2.0 * gamma * gamma / (1.0 + gamma * x) ** 2
    w = abs(omega)
    sh2 = np.sinh(2.0 * w * x)
    ch2 = np.cosh(2.0 * w * x)
    phi = 1.0 + gamma * (x / 2.0 + sh2 / (4.0 * w))
    numer = w * sh2 * (1.0 + gamma * x / 2.0) - gamma * (1.0 + ch2) / 2.0
    return -2.0 * gamma * numer / (phi * phi)


def insertion_seed(omega: float, grid: Grid) -> tuple[SampledFunction, SampledFunction]:
    """cosh(omega x) seed and the closed form of its running squared integral."""
    w = abs(omega)
    x = grid.x
    u = np.cosh(w * x)
    if w == 0.0:
        cum = x.copy()
    else:
        cum = x / 2.0 + np.sinh(2.0 * w * x) / (4.0 * w)
    return SampledFunction(grid, u), SampledFunction(grid, cum)


def insertion_v2_moment(omega: float, gamma: float) -> float:
    """Closed form of (3/16) times the squared-potential integral for the insertion family."""
    w = abs(omega)
    return 0.25 * gamma**3 - 0.75 * gamma * w * w + w**3


def insertion_spectrum(omega: float) -> list[float]:
    return [-omega * omega] if omega != 0.0 else []


def _insertion_support_end(omega: float, gamma: float) -> float:
    """Smallest x beyond which the analytic potential stays below 1e-14."""
    w = abs(omega)
    X = 20.0 / w
    while abs(insertion_potential(omega, gamma, np.array([X]))[0]) > 1e-14:
        X *= 1.3
        if w * X > MAX_INSERTION_PHASE:
            break
    xs = np.linspace(0.0, X, 20001)
    vv = np.abs(insertion_potential(omega, gamma, xs))
    above = np.nonzero(vv >= 1e-14)[0]
    if len(above) == 0:
        return 0.0
    return float(xs[min(above[-1] + 1, len(xs) - 1)])


def family_neumann_insertion(omega: float, gamma: float,
                             L: float | None = None, n: int | None = None) -> Problem:
    """Sharp one-eigenvalue family: insert -omega^2 into the free Neumann operator.

    The potential is sampled from its analytic expression (not generated by
    running the insertion transform), so it serves as an independent fixture
    against which the transform code is tested.  The boundary condition is
    Robin(-gamma).  The tail is truncated to zero where |V| < 1e-14.

    omega = 0 is a documented degenerate case: the potential 2 gamma^2 /
    (1 + gamma x)^2 is positive with no negative eigenvalue.
    """
    if gamma <= 0.0:
        raise ValueError("coupling gamma must be positive")
    w = abs(omega)
    if w == 0.0:
        Lf = L if L is not None else 10.0
        grid = Grid(Lf, n or _auto_n(Lf))
        v = insertion_potential(0.0, gamma, grid.x)
        return Problem(SampledFunction(grid, v), Robin(-gamma), support_end=grid.L,
                       lt_mode=False)
    x0 = _insertion_support_end(omega, gamma)
    Lf = L if L is not None else x0 + max(10.0, 8.0 / w)
    if w * Lf > MAX_INSERTION_PHASE:
        raise ValueError(f"omega*L = {w * Lf:.1f} exceeds {MAX_INSERTION_PHASE}")
    grid = Grid(Lf, n or _auto_n(Lf))
    v = insertion_potential(omega, gamma, grid.x)
    v[grid.x > x0] = 0.0
    # V(0) = +2 gamma^2, so this family never satisfies the nonpositivity
    # hypothesis; inequality reports must be asked to skip the sign check.
    return Problem(SampledFunction(grid, v), Robin(-gamma), support_end=min(x0, Lf),
                   lt_mode=False)


def load_potential(path, bc: BoundaryCondition, x0: float | None = None,
                   n: int | None = None, lt_mode: bool = True) -> Problem:
    """Build a Problem from a two-column (x, V) CSV file.

    The x column must increase strictly from 0.  Uniform sample grids are
    reused verbatim (so export/import round-trips are exact); non-uniform
    data is resampled by monotone cubic interpolation.
    """
    x, v = read_csv(path)
    if len(x) < 8:
        raise GridTooCoarse(f"need at least 8 samples, got {len(x)}")
    if np.any(np.diff(x) <= 0.0):
        raise ValueError("x column must be strictly increasing")
    if abs(x[0]) > 1e-12 * max(1.0, x[-1]):
        raise ValueError("x column must start at 0")
    if lt_mode and np.max(v) > 1e-12:
        raise HypothesisViolated(
            f"potential has positive samples up to {np.max(v):.3e}"
        )
    h = x[1] - x[0]
    uniform = np.allclose(np.diff(x), h, rtol=0.0, atol=1e-9 * h)
    n_file = len(x) - 1
    if uniform and n_file >= 16 and n_file % 4 == 0 and (n is None or n == n_file):
        grid = Grid(float(x[-1]), n_file)
        values = np.asarray(v, dtype=float)
    else:
        n_out = n or max(DEFAULT_N, 4 * n_file)
        n_out += (-n_out) % 8
        grid = Grid(float(x[-1]), n_out)
        values = PchipInterpolator(x, v)(grid.x)
    if x0 is None:
        thresh = 1e-13 * max(1.0, float(np.max(np.abs(values))))
        above = np.nonzero(np.abs(values) > thresh)[0]
        x0 = float(grid.x[above[-1]]) if len(above) else 0.0
    return Problem(SampledFunction(grid, values), bc, support_end=min(x0, grid.L),
                   lt_mode=lt_mode)


@dataclass(frozen=True)
class PotentialFamily:
    """Registry entry describing one built-in family."""

    name: str
    parameters: tuple[str, ...]
    description: str
    build: Callable = field(compare=False)


FAMILIES = {
    "free": PotentialFamily(
        "free", ("sigma0",),
        "V = 0; single negative eigenvalue -sigma0^2 when sigma0 < 0",
        family_free),
    "square-well": PotentialFamily(
        "square-well", ("depth", "width"),
        "V = -depth on [0, width]; spectrum from transcendental matching",
        family_square_well),
    "neumann-insertion": PotentialFamily(
        "neumann-insertion", ("omega", "gamma"),
        "cosh-seed insertion into the free Neumann operator; eigenvalue -omega^2, "
        "(3/16) int V^2 = gamma^3/4 - 3 gamma omega^2/4 + omega^3",
        family_neumann_insertion),
}


def list_families() -> list[PotentialFamily]:
    return sorted(FAMILIES.values(), key=lambda fam: fam.name)
