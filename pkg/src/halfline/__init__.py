"""Numerical lab for half-line Schrodinger operators.

Computes negative spectra under Robin or Dirichlet conditions at the origin,
applies double and single commutation transforms to remove or insert
eigenvalues, and certifies the associated spectral inequalities and integral
identities.
"""

from .errors import (
    ClusterDetected,
    ConditioningWarning,
    DominanceViolated,
    GridTooCoarse,
    GroundStateHasZeros,
    HalflineError,
    HypothesisViolated,
    NotAnEigenpair,
    SameEigenvalue,
    SeedResidualTooLarge,
    TruncationTooSmall,
)
from .grid import (
    BoundaryCondition,
    Dirichlet,
    Grid,
    Problem,
    Robin,
    SampledFunction,
    cumulative_integral,
    default_domain,
    derivative,
    integrate,
    read_csv,
    reversed_cumulative_integral,
    sampled_from_csv,
    simpson_inner,
    write_csv,
)
from .eigensolver import (
    EigenPair,
    NegativeSpectrum,
    TridiagonalSystem,
    boundary_data,
    check_eigenpair,
    convergence_study,
    discretize,
    eigenfunction_residual,
    negative_eigenvalues,
    spectrum_to_json,
    sturm_count,
)
from .potentials import (
    family_free,
    family_neumann_insertion,
    family_square_well,
    free_spectrum,
    insertion_potential,
    insertion_seed,
    insertion_spectrum,
    insertion_v2_moment,
    list_families,
    load_potential,
    square_well_spectrum,
)

__version__ = "0.1.0"
