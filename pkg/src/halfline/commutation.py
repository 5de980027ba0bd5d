"""Double and single commutation transforms plus their diagnostic identities.

Removing an eigenvalue lam with eigenfunction phi uses the coupling
gamma = -1/|phi|^2 and the running integral Phi(x) = 1 + gamma * int_0^x phi^2.
The transformed potential is V - 2 G' with G = gamma phi^2 / Phi, where G' is
always evaluated through its analytically expanded form
gamma (2 phi phi' Phi - gamma phi^4) / Phi^2; differencing log(Phi) twice
would cancel catastrophically where Phi is small near the truncation point.

On a truncated domain Phi would hit zero exactly at L if gamma were built
from the grid norm alone.  Each eigenfunction is therefore continued with
its analytic exponential tail C exp(-kappa x) beyond the support (the
truncation wall distorts the raw samples there), the missing tail mass
phi(L)^2 / (2 kappa) is added to the norm, and the running integral is
accumulated from the right so that Phi keeps relative accuracy all the way
into the tail.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import (
    EigenPair,
    NegativeSpectrum,
    check_eigenpair,
    negative_eigenvalues,
)
from .errors import (
    ConditioningWarning,
    GroundStateHasZeros,
    SameEigenvalue,
    SeedResidualTooLarge,
)
from .grid import (
    Dirichlet,
    Problem,
    Robin,
    SampledFunction,
    derivative,
    integrate,
    reversed_cumulative_integral,
)

PHI_FLOOR = 1e-300          # denominator floor for the running integral
PHI_WARN = 1e-6             # conditioning warning threshold for Phi(L)
WINDOW = 0.8                # identity checks restrict to [0, WINDOW * L]
TAIL_DECAY_LENGTHS = 10.0   # splice the analytic tail 10/kappa before the wall


def _tail_extend(pair: EigenPair, problem: Problem) -> tuple[SampledFunction, float, float]:
    """Continue an eigenfunction with its exact exponential tail.

    Beyond the potential's support the eigenfunction is C exp(-kappa x) with
    kappa = sqrt(|lam|); the Dirichlet wall bends the computed samples toward
    zero within a few decay lengths of L.  Splicing the analytic tail at
    x_s = max(x0, L - 10/kappa), value-continuously, removes the distortion.
    Returns the extended samples, the tail mass int_L^inf, and kappa.
    """
    kappa = float(np.sqrt(-pair.lam))
    g = pair.phi.grid
    x = g.x
    h = g.h
    x_s = max(problem.support_end, g.L - TAIL_DECAY_LENGTHS / kappa)
    i_s = min(int(np.searchsorted(x, x_s)), g.n - 2)
    v = pair.phi.values.copy()
    rate = kappa
    if i_s >= 1 and v[i_s] != 0.0:
        # Decay rate the samples actually follow; the discrete rate differs
        # from kappa by O(kappa^3 h^2) and a mismatch would kink the splice.
        slope = (v[i_s + 1] - v[i_s - 1]) / (2.0 * h * v[i_s])
        if -3.0 * kappa < slope < -kappa / 3.0:
            rate = -slope
        sign = 1.0 if v[i_s] > 0.0 else -1.0
        target = np.log(abs(v[i_s])) - rate * (x[i_s:] - x[i_s])
        # Cosine-blend the logarithms over a couple of decay lengths so the
        # log-derivative stays C^1; a hard splice leaves an O(h^2) one-node
        # kink that aliases into O(h) residuals under differentiation.
        width = max(8, int(round(min(2.0 / rate, 0.3 * (g.L - x[i_s])) / h)))
        i_e = min(i_s + width, g.n)
        raw = sign * v[i_s:i_e + 1]
        if np.all(raw > 0.0):
            w = 0.5 * (1.0 - np.cos(np.pi * (x[i_s:i_e + 1] - x[i_s]) / (x[i_e] - x[i_s])))
            v[i_s:i_e + 1] = sign * np.exp((1.0 - w) * np.log(raw) + w * target[:i_e + 1 - i_s])
        v[i_e:] = sign * np.exp(target[i_e - i_s:])
    tail = float(v[-1] ** 2 / (2.0 * rate))
    return SampledFunction(g, v), tail, kappa


def _running_structures(phi_ext: SampledFunction, tail: float):
    """gamma, Phi, G and G' for one extended eigenfunction.

    The norm includes the analytic tail mass, so Phi(L) = tail/norm stays
    strictly positive; the running integral is summed from the right.
    """
    g = phi_ext.grid
    v = phi_ext.values
    rem = reversed_cumulative_integral(SampledFunction(g, v * v)).values + tail
    norm_total = float(rem[0])
    gamma = -1.0 / norm_total
    Phi = np.maximum(rem / norm_total, PHI_FLOOR)
    dphi = derivative(phi_ext).values
    G = gamma * v * v / Phi
    Gp = gamma * (2.0 * v * dphi * Phi - gamma * v**4) / (Phi * Phi)
    return gamma, SampledFunction(g, Phi), G, Gp, norm_total


@dataclass(eq=False)
class CommutationStep:
    """Record of one double-commutation removal."""

    lambda_removed: float
    gamma: float
    Phi: SampledFunction
    sigma_before: float | None
    sigma_after: float | None
    V_in: SampledFunction
    V_out: SampledFunction
    phi_used: SampledFunction
    intV2_in: float
    intV2_out: float
    predicted_intV2_out: float
    phi0_sq: float
    dphi0_sq: float
    kappa: float
    norm_total: float
    phi_end: float
    problem_in: Problem
    problem_out: Problem

    @property
    def dirichlet(self) -> bool:
        return self.sigma_before is None


def _output_problem(problem: Problem, V_out: np.ndarray, bc) -> Problem:
    """Next problem in a chain: the transformed potential vanishes beyond the
    support, so the sub-tolerance numerical residue out there is dropped."""
    g = problem.grid
    v = V_out.copy()
    v[g.x > problem.support_end + 0.5 * g.h] = 0.0
    return Problem(SampledFunction(g, v), bc, support_end=problem.support_end,
                   lt_mode=False)


def double_commute_remove(problem: Problem, pair: EigenPair) -> CommutationStep:
    """Remove one eigenvalue; works for any eigenpair, zeros included.

    The new boundary condition is Robin(sigma + phi(0)^2/|phi|^2) for a Robin
    input and Dirichlet again for a Dirichlet input (the vanishing-Wronskian
    condition collapses to psi(0) = 0 there).
    """
    check_eigenpair(problem, pair)
    phi_ext, tail, kappa = _tail_extend(pair, problem)
    gamma, Phi, _, Gp, norm_total = _running_structures(phi_ext, tail)
    if Phi.values[-1] < PHI_WARN:
        warnings.warn(
            f"Phi(L) = {Phi.values[-1]:.3e}: running integral nearly exhausted "
            "at the truncation point",
            ConditioningWarning,
            stacklevel=2,
        )
    V_in = problem.potential
    V_out = SampledFunction(problem.grid, V_in.values - 2.0 * Gp)
    phi0_sq = pair.phi0**2
    dphi0_sq = pair.dphi0**2
    intV2_in = integrate(SampledFunction(problem.grid, V_in.values**2))
    intV2_out = integrate(SampledFunction(problem.grid, V_out.values**2))
    if isinstance(problem.bc, Robin):
        sb = problem.bc.sigma0
        sa = sb + phi0_sq
        bc_out: Robin | Dirichlet = Robin(sa)
        predicted = (intV2_in - (16.0 / 3.0) * kappa**3
                     + 4.0 * kappa**2 * (sa - sb) - (4.0 / 3.0) * (sa**3 - sb**3))
    else:
        sb = sa = None
        bc_out = Dirichlet()
        predicted = intV2_in - (16.0 / 3.0) * kappa**3 - 4.0 * dphi0_sq
    return CommutationStep(
        lambda_removed=pair.lam,
        gamma=gamma,
        Phi=Phi,
        sigma_before=sb,
        sigma_after=sa,
        V_in=V_in,
        V_out=V_out,
        phi_used=phi_ext,
        intV2_in=intV2_in,
        intV2_out=intV2_out,
        predicted_intV2_out=predicted,
        phi0_sq=phi0_sq,
        dphi0_sq=dphi0_sq,
        kappa=kappa,
        norm_total=norm_total,
        phi_end=float(Phi.values[-1]),
        problem_in=problem,
        problem_out=_output_problem(problem, V_out.values, bc_out),
    )


def _seed_residual(problem: Problem, seed: SampledFunction, lam: float) -> float:
    """Largest node-relative defect of -u'' + V u - lam u for a seed."""
    v = seed.values
    h = seed.grid.h
    V = problem.potential.values
    lap = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / (h * h)
    r = -lap + (V[1:-1] - lam) * v[1:-1]
    scale = (abs(lam) + np.abs(V[1:-1]) + 1.0) * (np.abs(v[1:-1]) + 1e-300)
    return float(np.max(np.abs(r) / scale))


def double_commute_insert(problem: Problem, seed: SampledFunction, lam: float,
                          gamma: float,
                          seed_cumulative: SampledFunction | None = None) -> Problem:
    """Insert the eigenvalue ``lam`` using a (generally non-normalizable) seed.

    The seed must solve -u'' + V u = lam u together with the problem's origin
    condition.  With gamma > 0 the running integral 1 + gamma int_0^x u^2
    grows, the transformed potential is V - 2 d/dx(gamma u^2 / Phi), and the
    vanishing-Wronskian rule turns Robin(sigma) into
    Robin(sigma - gamma u(0)^2) while Dirichlet stays Dirichlet.

    ``seed_cumulative`` may supply the running integral of u^2 in closed form
    to keep sharp-equality checks free of seed-integration error.
    """
    if gamma <= 0.0:
        raise ValueError("insertion coupling gamma must be positive")
    if seed.grid != problem.grid:
        raise ValueError("seed grid does not match the problem grid")
    res = _seed_residual(problem, seed, lam)
    if res > 1e-6:
        raise SeedResidualTooLarge(
            f"seed defect {res:.3e} exceeds 1e-6; not a solution at lambda = {lam}"
        )
    u = seed.values
    if seed_cumulative is not None:
        cum = seed_cumulative.values
    else:
        from .grid import cumulative_integral

        cum = cumulative_integral(SampledFunction(seed.grid, u * u)).values
    Phi = 1.0 + gamma * cum
    du = derivative(seed).values
    Gp = gamma * (2.0 * u * du * Phi - gamma * u**4) / (Phi * Phi)
    V_out = problem.potential.values - 2.0 * Gp
    if isinstance(problem.bc, Robin):
        bc_out: Robin | Dirichlet = Robin(problem.bc.sigma0 - gamma * u[0] ** 2)
    else:
        bc_out = Dirichlet()
    g = problem.grid
    thresh = 1e-13 * max(1.0, float(np.max(np.abs(V_out))))
    above = np.nonzero(np.abs(V_out) > thresh)[0]
    support = float(g.x[above[-1]]) if len(above) else 0.0
    return Problem(SampledFunction(g, V_out), bc_out,
                   support_end=min(support, g.L), lt_mode=False)


def single_commute_remove(problem: Problem, ground: EigenPair) -> Problem:
    """Remove the lowest eigenvalue via the one-step factorization.

    Requires a zero-free ground state; the output problem carries the
    potential V - 2 (phi'/phi)' and a Dirichlet condition at the origin.
    """
    check_eigenpair(problem, ground)
    phi_ext, _, _ = _tail_extend(ground, problem)
    v = phi_ext.values
    if np.min(np.abs(v)) < 1e-12 * np.max(np.abs(v)):
        raise GroundStateHasZeros(
            "eigenfunction vanishes on the grid; single commutation needs the ground state"
        )
    F = derivative(phi_ext).values / v
    Fp = derivative(SampledFunction(problem.grid, F)).values
    V_out = problem.potential.values - 2.0 * Fp
    return _output_problem(problem, V_out, Dirichlet())


def transform_eigenfunction(step: CommutationStep, psi: EigenPair) -> SampledFunction:
    """Map an eigenfunction of the pre-step operator to one of the post-step operator.

    Implements psi - gamma * (phi/Phi) * int_0^x psi phi.  The running
    integral is evaluated through orthogonality as -int_x^inf psi phi (with
    analytic tails), which keeps the product with the growing phi/Phi factor
    well conditioned; psi is first projected exactly orthogonal to phi in the
    same quadrature so the identity int_0^0 = 0 is preserved.
    """
    if abs(psi.lam - step.lambda_removed) <= 1e-8 * max(1.0, abs(step.lambda_removed)):
        raise SameEigenvalue(
            f"cannot transform the removed eigenvalue {step.lambda_removed} itself"
        )
    problem = step.problem_in
    phi = step.phi_used
    g = phi.grid
    psi_ext, tail_psi, kappa_psi = _tail_extend(psi, problem)
    kappa_sum = step.kappa + kappa_psi

    def cross_remainder(pv: np.ndarray) -> tuple[np.ndarray, float]:
        w = SampledFunction(g, pv * phi.values)
        rem = reversed_cumulative_integral(w).values
        t = float(pv[-1] * phi.values[-1] / kappa_sum)
        return rem, t

    rem, t = cross_remainder(psi_ext.values)
    total = rem[0] + t  # quadrature value of <psi, phi>; small but not exactly 0
    alpha = total / step.norm_total
    pv = psi_ext.values - alpha * phi.values
    rem, t = cross_remainder(pv)
    integral = -(rem + t)               # int_0^x psi phi, exactly 0 at x = 0
    phi_tilde = phi.values / step.Phi.values
    return SampledFunction(g, pv - step.gamma * phi_tilde * integral)


@dataclass(eq=False)
class RiccatiDiagnostics:
    """Log-derivative pair of the ground state and its transform.

    F = phi'/phi solves F^2 + F' = V - lam; the companion
    Ftilde = (phi/Phi)'/(phi/Phi) solves Ftilde^2 - Ftilde' + 2F' = V - lam.
    Their difference reproduces G = gamma phi^2 / Phi.
    """

    F: SampledFunction
    F_tilde: SampledFunction
    G: SampledFunction
    residual_F: float
    residual_Ftilde: float
    boundary: dict


def riccati_diagnostics(problem: Problem, ground: EigenPair,
                        step: CommutationStep) -> RiccatiDiagnostics:
    """Residuals and boundary values of the first-order equations for F, Ftilde.

    Residual maxima and boundary plateaus are measured on [0, 0.8 L]; beyond
    that the truncation wall dominates the raw samples.
    """
    phi_ext, tail, kappa = _tail_extend(ground, problem)
    v = phi_ext.values
    if np.min(np.abs(v)) < 1e-12 * np.max(np.abs(v)):
        raise GroundStateHasZeros("log-derivative diagnostics need a zero-free ground state")
    g = problem.grid
    lam = ground.lam
    V = problem.potential.values

    F = derivative(phi_ext).values / v
    phi_tilde = v / step.Phi.values
    Ft = derivative(SampledFunction(g, phi_tilde)).values / phi_tilde
    G = step.gamma * v * v / step.Phi.values

    Fp = derivative(SampledFunction(g, F)).values
    Ftp = derivative(SampledFunction(g, Ft)).values
    res_F = F * F + Fp - (V - lam)
    res_Ft = Ft * Ft - Ftp + 2.0 * Fp - (V - lam)

    # Nodes 0 and 1 are excluded: the one-sided end stencil and the central
    # stencil differ at second order, and that one-node mismatch would alias
    # into an O(h) residual when differentiated again.
    iw = int(WINDOW * g.n)
    interior = slice(2, iw)
    x = g.x
    plateau = (x >= problem.support_end) & (x <= WINDOW * g.L)
    boundary = {
        "F0": float(F[0]),
        "Ftilde0": float(Ft[0]),
        "F_tail_max_dev": float(np.max(np.abs(F[plateau] + kappa))),
        "Ftilde_tail_max_dev": float(np.max(np.abs(Ft[plateau] - kappa))),
        "kappa": kappa,
    }
    return RiccatiDiagnostics(
        F=SampledFunction(g, F),
        F_tilde=SampledFunction(g, Ft),
        G=SampledFunction(g, G),
        residual_F=float(np.max(np.abs(res_F[interior]))),
        residual_Ftilde=float(np.max(np.abs(res_Ft[interior]))),
        boundary=boundary,
    )


@dataclass(eq=False)
class AntiderivativeCheck:
    """Pointwise and integrated comparison of G'(G' - V) with its antiderivative."""

    residual: float            # scaled max-norm on the window
    residual_raw: float
    int_quadrature: float      # Simpson value of G'(G'-V) on the window
    int_bracket: float         # endpoint difference of the antiderivative
    rel_difference: float


def antiderivative_identity_check(problem: Problem, pair: EigenPair,
                                  step: CommutationStep) -> AntiderivativeCheck:
    """Check the zero-free antiderivative identity for G'(G' - V).

    The bracket |lam| G - (gamma phi'^2 Phi^2 - gamma^2 phi' phi^3 Phi
    + gamma^3 phi^6 / 3) / Phi^3 is an exact antiderivative even when phi has
    zeros, which is what permits removal in arbitrary order.
    """
    phi = step.phi_used
    g = phi.grid
    v = phi.values
    dphi = derivative(phi).values
    gamma = step.gamma
    Phi = step.Phi.values
    lam_abs = abs(pair.lam)
    V = problem.potential.values

    G = gamma * v * v / Phi
    Gp = gamma * (2.0 * v * dphi * Phi - gamma * v**4) / (Phi * Phi)
    lhs = Gp * (Gp - V)
    bracket = lam_abs * G - (
        gamma * dphi**2 * Phi**2 - gamma**2 * dphi * v**3 * Phi
        + (gamma**3 / 3.0) * v**6
    ) / Phi**3
    rhs = derivative(SampledFunction(g, bracket)).values

    iw = int(WINDOW * g.n)
    iw -= iw % 2  # Simpson needs an even interval count
    window = slice(0, iw + 1)
    raw = float(np.max(np.abs(lhs[window] - rhs[window])))
    scale = 1.0 + float(np.max(np.abs(lhs[window])))

    # Simpson on the window reuses the uniform spacing directly.
    w = np.ones(iw + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    int_quad = float(g.h / 3.0 * np.dot(w, lhs[:iw + 1]))
    int_bracket = float(bracket[iw] - bracket[0])
    denom = (4.0 / 3.0) * lam_abs**1.5 + abs(int_bracket) + abs(int_quad) + 1e-12
    return AntiderivativeCheck(
        residual=raw / scale,
        residual_raw=raw,
        int_quadrature=int_quad,
        int_bracket=int_bracket,
        rel_difference=abs(int_quad - int_bracket) / denom,
    )


@dataclass(eq=False)
class CommutationChain:
    """Full removal sequence with the sigma ladder it generated."""

    steps: list[CommutationStep]
    sigma_sequence: list[float]
    order: list[int]
    spectrum_initial: NegativeSpectrum
    problem_initial: Problem
    problem_final: Problem
    final_count: int


def run_chain(problem: Problem, order: str | list[int] = "increasing",
              tol: float = 1e-10) -> CommutationChain:
    """Remove eigenvalues one by one, re-solving after each step.

    ``order`` lists 1-based indices into the initial spectrum; removal in
    arbitrary order is supported since the double commutation never divides
    by the eigenfunction.
    """
    spec0 = negative_eigenvalues(problem, tol=tol)
    base = spec0.problem
    N = len(spec0)
    if order == "increasing":
        idx = list(range(1, N + 1))
    else:
        idx = list(order)
        if sorted(idx) != list(range(1, N + 1)):
            raise ValueError(f"order {idx} is not a permutation of 1..{N}")

    robin = isinstance(base.bc, Robin)
    sigma_seq = [base.bc.sigma0] if robin else []
    steps: list[CommutationStep] = []
    current = base
    current_spec = spec0
    for j in idx:
        target = spec0.pairs[j - 1].lam
        if current_spec is None:
            current_spec = negative_eigenvalues(current, tol=tol, auto_extend=False)
        cand = min(current_spec.pairs, key=lambda p: abs(p.lam - target))
        if abs(cand.lam - target) > max(1e-4, 1e-3 * abs(target)):
            raise RuntimeError(
                f"eigenvalue {target} not preserved in the current spectrum "
                f"(closest: {cand.lam})"
            )
        step = double_commute_remove(current, cand)
        steps.append(step)
        if robin:
            sigma_seq.append(step.sigma_after)
        current = step.problem_out
        current_spec = None
    final_spec = negative_eigenvalues(current, tol=tol, auto_extend=False)
    return CommutationChain(
        steps=steps,
        sigma_sequence=sigma_seq,
        order=idx,
        spectrum_initial=spec0,
        problem_initial=base,
        problem_final=current,
        final_count=len(final_spec),
    )


def chain_to_json(chain: CommutationChain) -> dict:
    """Chain record in the documented JSON layout."""
    records = []
    for k, s in enumerate(chain.steps):
        pred = s.predicted_intV2_out
        denom = (s.intV2_in + (16.0 / 3.0) * s.kappa**3
                 + abs(s.intV2_in - pred) + 1e-12)
        records.append({
            "lambda": s.lambda_removed,
            "sigma_before": s.sigma_before,
            "sigma_after": s.sigma_after,
            "intV2_in": s.intV2_in,
            "intV2_out": s.intV2_out,
            "residuals": {
                "identity_relative": abs(pred - s.intV2_out) / denom,
                "phi_end": s.phi_end,
            },
        })
    return {
        "order": chain.order,
        "sigma_sequence": chain.sigma_sequence,
        "steps": records,
        "final_negative_count": chain.final_count,
    }
