"""Mori-Zwanzig decomposition toolkit for stochastic differential equations.

Computes streaming matrices, memory kernels, fluctuation terms and their
equilibrium limits for SDEs via spectral Galerkin discretization of the
backward Kolmogorov generator, with eigen-spectrum diagnostics and Monte
Carlo cross-validation.
"""

__version__ = "0.1.0"

from .basis import (
    OrthonormalBasis,
    ProductBasis,
    QuadratureRule,
    build_hermite_basis,
    build_weighted_basis,
    gauss_quadrature,
    project_function,
)
from .emz import (
    EmzDecomposition,
    emz_decomposition,
    equilibrium_limits,
    fluctuation_term,
    memory_kernel,
    second_fdt_diagnostic,
    solve_gle,
    streaming_matrix,
)
from .montecarlo import (
    CorrelationEstimate,
    McConfig,
    PathEnsemble,
    cross_validate,
    noise_averaged_observable,
    simulate_langevin_baoab,
    simulate_ou_exact,
    stationary_autocorrelation,
)
from .operator import (
    GeneralDiffusion1D,
    GeneratorMatrix,
    LadderForm,
    Langevin1D,
    OrnsteinUhlenbeck,
    apply_generator,
    assemble_ladder_form,
    assemble_langevin_generator,
    assemble_ou_generator,
    build_langevin_workspace,
    build_ou_workspace,
    flat_space_transform,
)
from .projection import (
    MoriProjection,
    OrthogonalGenerator,
    assemble_qkq,
    build_mori_projection,
    build_pi0q,
    kernel_qkq,
    orthogonal_dynamics,
    solve_conjugate_observables,
)
from .spectral import (
    SpectrumReport,
    cusp_diagnostic,
    eigen_decompose,
    fit_exponential_decay,
    semigroup_decay,
    spectral_gap,
    submultiplicativity_check,
)
