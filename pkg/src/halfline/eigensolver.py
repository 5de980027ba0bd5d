"""Negative spectrum of -d^2/dx^2 + V on [0, L] with Dirichlet truncation at L.

The operator is discretized by the standard 3-point Laplacian.  A Robin
condition at the origin is imposed through ghost-point elimination, and the
resulting first row is symmetrized by half-weighting the origin node, which
preserves both matrix symmetry and second-order convergence.  Eigenvalues
below zero are located by bisection on the Sturm sequence with eigenvectors
from inverse iteration (LAPACK stebz/stein), cross-checked against an
independent Sturm count, and refined by Richardson extrapolation from the
working grid and its 2h coarsening.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import ClusterDetected, NotAnEigenpair, TruncationTooSmall
from .grid import (
    Dirichlet,
    Grid,
    Problem,
    Robin,
    SampledFunction,
    derivative,
    integrate,
    simpson_inner,
)

EDGE_TOL = 1e-8  # eigenvalues in (-EDGE_TOL, 0) are threshold artifacts, reported separately
_SQRT2 = np.sqrt(2.0)


@dataclass(eq=False)
class TridiagonalSystem:
    """Symmetric tridiagonal discretization of one Problem."""

    d: np.ndarray
    e: np.ndarray
    grid: Grid
    bc: Robin | Dirichlet

    @property
    def dim(self) -> int:
        return len(self.d)

    @property
    def scale(self) -> float:
        """Infinity-norm bound of the matrix, used for residual tolerances."""
        return float(np.max(np.abs(self.d)) + 2.0 * np.max(np.abs(self.e)))


def discretize(problem: Problem) -> TridiagonalSystem:
    """3-point finite differences; Dirichlet row at L always dropped.

    Robin at 0: the ghost value phi(-h) = phi(h) - 2 h sigma0 phi(0) turns the
    first row into (2/h^2 + 2 sigma0/h + V0, -2/h^2).  Rescaling the origin
    unknown by sqrt(2) restores symmetry, giving the off-diagonal -sqrt(2)/h^2.
    """
    g = problem.grid
    h = g.h
    inv = 1.0 / (h * h)
    V = problem.potential.values
    if isinstance(problem.bc, Dirichlet):
        d = 2.0 * inv + V[1:-1]
        e = np.full(g.n - 2, -inv)
    else:
        d = np.empty(g.n)
        d[0] = 2.0 * inv + 2.0 * problem.bc.sigma0 / h + V[0]
        d[1:] = 2.0 * inv + V[1:-1]
        e = np.full(g.n - 1, -inv)
        e[0] = -_SQRT2 * inv
    return TridiagonalSystem(d, e, g, problem.bc)


def gershgorin_bounds(system: TridiagonalSystem) -> tuple[float, float]:
    d, e = system.d, system.e
    r = np.zeros_like(d)
    r[:-1] += np.abs(e)
    r[1:] += np.abs(e)
    return float(np.min(d - r)), float(np.max(d + r))


def sturm_count(system: TridiagonalSystem, shift: float) -> int:
    """Number of eigenvalues strictly below ``shift``.

    Counts negative values of the LDL^T pivot recurrence
    q_k = (d_k - shift) - e_{k-1}^2 / q_{k-1}, with pivots floored away from
    zero so underflow cannot derail the sign count.
    """
    d, e = system.d, system.e
    pivmin = np.finfo(float).tiny * max(1.0, float(np.max(e * e)) if len(e) else 1.0)
    count = 0
    q = d[0] - shift
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    e2 = e * e
    for k in range(1, len(d)):
        q = (d[k] - shift) - e2[k - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


def _tridiag_matvec(system: TridiagonalSystem, u: np.ndarray) -> np.ndarray:
    out = system.d * u
    out[:-1] += system.e * u[1:]
    out[1:] += system.e * u[:-1]
    return out


def _inverse_iteration(system: TridiagonalSystem, lam: float, u0: np.ndarray,
                       rtol: float) -> np.ndarray:
    """Polish an eigenvector by shifted tridiagonal solves (at most 5)."""
    m = system.dim
    ab = np.zeros((3, m))
    shift = lam + 1e-3 * rtol * system.scale  # keep the solve nonsingular
    ab[0, 1:] = system.e
    ab[1, :] = system.d - shift
    ab[2, :-1] = system.e
    u = u0 / np.linalg.norm(u0)
    for _ in range(5):
        r = _tridiag_matvec(system, u) - lam * u
        if np.linalg.norm(r) <= rtol * np.linalg.norm(u):
            break
        u = solve_banded((1, 1), ab, u)
        u /= np.linalg.norm(u)
    return u


def _negative_matrix_eigs(system: TridiagonalSystem, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """All matrix eigenvalues below zero with inverse-iteration eigenvectors."""
    lo, _ = gershgorin_bounds(system)
    if lo >= 0.0:
        return np.empty(0), np.empty((system.dim, 0))
    w, v = eigh_tridiagonal(
        system.d, system.e, select="v", select_range=(lo - 1.0, 0.0), tol=tol
    )
    if len(w) == 0:
        return np.empty(0), np.empty((system.dim, 0))
    nneg = sturm_count(system, 0.0)
    if nneg != len(w):
        raise RuntimeError(
            f"Sturm count {nneg} disagrees with bisection result {len(w)}"
        )
    # Residual target: bisection/inverse iteration cannot beat machine epsilon
    # times the matrix scale, so the floor widens with 1/h^2.
    rtol = max(1e-10, 100.0 * np.finfo(float).eps * system.scale)
    for j in range(len(w)):
        r = _tridiag_matvec(system, v[:, j]) - w[j] * v[:, j]
        if np.linalg.norm(r) > rtol * np.linalg.norm(v[:, j]):
            v[:, j] = _inverse_iteration(system, w[j], v[:, j], rtol)
    return w, v


@dataclass(eq=False)
class EigenPair:
    """One negative eigenvalue with its normalized eigenfunction samples.

    ``lam`` is the Richardson-extrapolated eigenvalue; ``lam_fine`` and
    ``lam_coarse`` retain the raw grid values.  ``phi0`` and ``dphi0`` are
    extrapolated boundary data of the Simpson-normalized eigenfunction.
    """

    lam: float
    phi: SampledFunction
    norm_sq: float
    raw_norm_sq: float
    phi0: float
    dphi0: float
    index: int
    lam_fine: float
    lam_coarse: float | None = None
    dphi0_flagged: bool = False


@dataclass(eq=False)
class NegativeSpectrum:
    """Ordered negative eigenpairs of one problem plus refinement metadata.

    ``problem`` is the problem actually solved; it may live on a larger
    domain than the one originally supplied if the tail test forced
    extension.  ``edge_eigenvalues`` lists values in (-1e-8, 0), which are
    truncation-threshold artifacts and take no part in removal chains.
    """

    pairs: list[EigenPair]
    problem: Problem
    edge_eigenvalues: list[float] = field(default_factory=list)
    refinement: dict = field(default_factory=dict)
    tail_metric: float = 0.0

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def sigma0(self) -> float | None:
        return self.problem.bc.sigma0 if isinstance(self.problem.bc, Robin) else None


def _pair_functions(problem: Problem, lam: np.ndarray, U: np.ndarray):
    """Turn matrix eigenvectors into normalized, orthogonal grid functions.

    Maps the symmetrized unknowns back to node values, Simpson-normalizes,
    then runs one Gram-Schmidt pass in the Simpson metric: tridiagonal
    eigenvectors are exactly orthogonal only in the trapezoid metric, and the
    O(h^2) mismatch would otherwise leak into inner products.
    """
    g = problem.grid
    dirichlet = isinstance(problem.bc, Dirichlet)
    funcs: list[SampledFunction] = []
    raw_norms: list[float] = []
    for j in range(len(lam)):
        full = np.zeros(g.n + 1)
        if dirichlet:
            full[1:-1] = U[:, j]
        else:
            full[:-1] = U[:, j]
            full[0] *= _SQRT2
        f = SampledFunction(g, full)
        nsq = integrate(SampledFunction(g, full * full))
        raw_norms.append(float(nsq))
        f.values /= np.sqrt(nsq)
        for prev in funcs:
            f.values -= simpson_inner(f, prev) * prev.values
        f.values /= np.sqrt(integrate(SampledFunction(g, f.values * f.values)))
        # Sign convention: phi(0) > 0 (Robin), phi'(0) > 0 (Dirichlet).
        anchor = f.values[1] if dirichlet else f.values[0]
        if anchor < 0.0:
            f.values = -f.values
        funcs.append(f)
    return funcs, raw_norms


def _boundary_samples(f: SampledFunction, dirichlet: bool) -> tuple[float, float]:
    """(phi(0), stencil phi'(0)) of one normalized eigenfunction."""
    phi0 = 0.0 if dirichlet else float(f.values[0])
    v = f.values
    h = f.grid.h
    dphi0 = float((-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h))
    return phi0, dphi0


def _coarsened(problem: Problem) -> Problem:
    g = problem.grid
    coarse = Grid(g.L, g.n // 2)
    return Problem(
        SampledFunction(coarse, problem.potential.values[::2]),
        problem.bc,
        support_end=problem.support_end,
        lt_mode=False,
    )


def _extended(problem: Problem) -> Problem:
    """Double the domain (and the interval count, preserving h)."""
    g = problem.grid
    V = problem.potential.values
    if abs(V[-1]) > 1e-10 * max(1.0, float(np.max(np.abs(V)))):
        raise TruncationTooSmall(
            "potential does not vanish at the truncation point; cannot extend domain"
        )
    big = Grid(2.0 * g.L, 2 * g.n)
    padded = np.concatenate([V, np.zeros(g.n)])
    return Problem(SampledFunction(big, padded), problem.bc,
                   support_end=problem.support_end, lt_mode=False)


def _solve_levels(problem: Problem, tol: float) -> NegativeSpectrum:
    if problem.grid.n % 4 != 0:
        raise ValueError("interval count must be a multiple of 4 for extrapolation")
    sys_f = discretize(problem)
    lam_f, U_f = _negative_matrix_eigs(sys_f, tol)
    keep = lam_f < -EDGE_TOL
    edge = [float(v) for v in lam_f[~keep]]
    lam_f, U_f = lam_f[keep], U_f[:, keep]

    coarse = _coarsened(problem)
    lam_c, U_c = _negative_matrix_eigs(discretize(coarse), tol)
    lam_c = lam_c[lam_c < -EDGE_TOL]

    funcs, raw_norms = _pair_functions(problem, lam_f, U_f)
    funcs_c, _ = _pair_functions(coarse, lam_c, U_c) if len(lam_c) else ([], [])

    dirichlet = isinstance(problem.bc, Dirichlet)
    pairs: list[EigenPair] = []
    tail = 0.0
    for j, f in enumerate(funcs):
        lf = float(lam_f[j])
        matched = j < len(lam_c) and abs(float(lam_c[j]) - lf) < 0.3 * abs(lf) + 1e-3
        lc = float(lam_c[j]) if matched else None
        lam_ext = (4.0 * lf - lc) / 3.0 if matched else lf
        phi0_f, dphi0_f = _boundary_samples(f, dirichlet)
        if matched:
            phi0_c, dphi0_c = _boundary_samples(funcs_c[j], dirichlet)
            phi0 = (4.0 * phi0_f - phi0_c) / 3.0
            dphi0 = (4.0 * dphi0_f - dphi0_c) / 3.0
        else:
            phi0, dphi0 = phi0_f, dphi0_f
        flagged = False
        if not dirichlet:
            sigma0 = problem.bc.sigma0
            if abs(dphi0 - sigma0 * phi0) < 1e-6 * (1.0 + abs(dphi0)):
                dphi0 = sigma0 * phi0
            else:
                flagged = True
                warnings.warn(
                    f"stencil phi'(0) = {dphi0:.3e} disagrees with the Robin "
                    f"identity sigma0*phi(0) = {sigma0 * phi0:.3e}",
                    stacklevel=3,
                )
        tail = max(tail, float(np.abs(f.values[-2]) / np.max(np.abs(f.values))))
        pairs.append(EigenPair(
            lam=lam_ext, phi=f, norm_sq=1.0, raw_norm_sq=raw_norms[j],
            phi0=phi0, dphi0=dphi0, index=j + 1,
            lam_fine=lf, lam_coarse=lc, dphi0_flagged=flagged,
        ))

    lam_ext_arr = np.array([p.lam for p in pairs])
    if len(lam_ext_arr) > 1:
        gaps = np.diff(lam_ext_arr)
        if np.any(gaps < 10.0 * tol):
            raise ClusterDetected(
                f"eigenvalue gap {np.min(gaps):.3e} below 10*tol = {10 * tol:.3e}"
            )
    return NegativeSpectrum(
        pairs=pairs,
        problem=problem,
        edge_eigenvalues=edge,
        refinement={
            "lambda_fine": [p.lam_fine for p in pairs],
            "lambda_coarse": [p.lam_coarse for p in pairs],
            "lambda_extrapolated": [p.lam for p in pairs],
        },
        tail_metric=tail,
    )


def negative_eigenvalues(problem: Problem, tol: float = 1e-10,
                         auto_extend: bool = True) -> NegativeSpectrum:
    """All negative eigenvalues and eigenfunctions of the problem.

    If any eigenfunction still carries more than 1e-8 of its peak amplitude
    at the last interior node, the domain is doubled (up to three times)
    before giving up with ``TruncationTooSmall``.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    prob = problem
    for attempt in range(4):
        spectrum = _solve_levels(prob, tol)
        if not auto_extend or spectrum.tail_metric <= 1e-8 or len(spectrum) == 0:
            return spectrum
        if attempt == 3:
            break
        prob = _extended(prob)
    raise TruncationTooSmall(
        f"eigenfunction tail {spectrum.tail_metric:.3e} exceeds 1e-8 "
        f"after 3 domain doublings (L = {prob.grid.L:g})"
    )


def boundary_data(pair: EigenPair) -> tuple[float, float, float]:
    """(phi(0), phi'(0), |phi|^2) of one pair, with a consistency re-check."""
    nsq = integrate(SampledFunction(pair.phi.grid, pair.phi.values**2))
    if abs(nsq - 1.0) > 1e-10:
        raise NotAnEigenpair(f"stored eigenfunction norm {nsq} drifted from 1")
    return pair.phi0, pair.dphi0, pair.norm_sq


def check_eigenpair(problem: Problem, pair: EigenPair,
                    rtol: float = 1e-3) -> float:
    """Relative residual of the pair against the problem's discrete operator.

    Raises ``NotAnEigenpair`` when it exceeds ``rtol`` times the natural
    scale; pairs from a different potential or boundary condition fail by
    orders of magnitude.
    """
    if pair.phi.grid != problem.grid:
        raise NotAnEigenpair("eigenfunction grid does not match the problem grid")
    system = discretize(problem)
    if isinstance(problem.bc, Dirichlet):
        u = pair.phi.values[1:-1].copy()
    else:
        u = pair.phi.values[:-1].copy()
        u[0] /= _SQRT2
    r = _tridiag_matvec(system, u) - pair.lam_fine * u
    scale = (1.0 + abs(pair.lam) + float(np.max(np.abs(problem.potential.values))))
    rel = float(np.linalg.norm(r) / (scale * np.linalg.norm(u)))
    if rel > rtol:
        raise NotAnEigenpair(
            f"relative residual {rel:.3e} exceeds {rtol:.1e}; "
            "pair does not belong to this problem"
        )
    return rel


def eigenfunction_residual(problem: Problem, pair: EigenPair) -> float:
    """Max-norm residual of -phi'' + V phi - lam phi over interior nodes.

    Uses the second difference of the stored samples with the extrapolated
    eigenvalue, normalized by the eigenfunction's peak; decreases as O(h^2).
    """
    v = pair.phi.values
    h = pair.phi.grid.h
    V = problem.potential.values
    lap = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / (h * h)
    r = -lap + (V[1:-1] - pair.lam) * v[1:-1]
    return float(np.max(np.abs(r)) / np.max(np.abs(v)))


def convergence_study(problem: Problem, tol: float = 1e-10) -> dict:
    """Raw eigenvalues at h, 2h, 4h and the Richardson ratios between levels.

    Second-order convergence shows up as ratios
    (lam_4h - lam_2h) / (lam_2h - lam_h) near 4.
    """
    if problem.grid.n % 8 != 0:
        raise ValueError("interval count must be a multiple of 8 for a 3-level study")
    probs = [problem, _coarsened(problem), _coarsened(_coarsened(problem))]
    levels = []
    for p in probs:
        lam, _ = _negative_matrix_eigs(discretize(p), tol)
        levels.append(lam[lam < -EDGE_TOL])
    m = min(len(lv) for lv in levels)
    ratios = []
    for j in range(m):
        num = levels[2][j] - levels[1][j]
        den = levels[1][j] - levels[0][j]
        ratios.append(float(num / den) if den != 0.0 else np.inf)
    return {
        "n_levels": [p.grid.n for p in probs],
        "eigenvalues": [list(map(float, lv[:m])) for lv in levels],
        "ratios": ratios,
    }


def spectrum_to_json(spectrum: NegativeSpectrum) -> dict:
    """Spectrum record in the documented JSON layout."""
    bc = spectrum.problem.bc
    bc_rec = (
        {"kind": "dirichlet"} if isinstance(bc, Dirichlet)
        else {"kind": "robin", "sigma0": bc.sigma0}
    )
    g = spectrum.problem.grid
    return {
        "bc": bc_rec,
        "eigenvalues": [p.lam for p in spectrum.pairs],
        "phi0": [p.phi0 for p in spectrum.pairs],
        "dphi0": [p.dphi0 for p in spectrum.pairs],
        "grid": {"L": g.L, "n": g.n},
        "edge_eigenvalues": list(spectrum.edge_eigenvalues),
    }
