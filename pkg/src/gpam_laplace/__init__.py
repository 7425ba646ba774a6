"""Numerical laboratory for the leading Laplace coefficient of generalised PAM on the 2-torus."""

from .errors import (
    BasisTooLarge,
    DegenerateFit,
    HypothesisViolation,
    MollifierTooWide,
    NonDegeneracyViolation,
    NotSymmetric,
    PicardDivergence,
)
from .fredholm import A0Report, a0_assemble, a0_product_form, det2
from .hessian import HessianBundle, assemble, eigen_sym, hs_tail_study
from .lab import (
    MCEstimate,
    covariance_check,
    estimate_J,
    estimate_lambda,
    lambda_delta_study,
    sample_hessian_Q,
    simulate_renormalized_gpam,
    solve_linear_spde_pair,
    validate_expansion,
)
from .minimizer import (
    MinimizerResult,
    minimize,
    nondegeneracy_check,
    phase_functional,
    phase_gradient,
    regularity_diagnostic,
)
from .noise import MollifierSpec, NoiseSample, renorm_constant, sample_noise
from .observables import Observable, make_profile
from .solver import (
    GFunction,
    SolverConfig,
    make_g,
    solve_first_variation,
    solve_gpam,
    solve_second_variation_combined,
    solve_second_variation_nonsingular,
    solve_second_variation_singular,
)
from .torus import (
    TimePath,
    TorusField,
    heat_propagate,
    holder_norm_surrogate,
    inner_l2,
    multiply,
    sobolev_norm,
)

__version__ = "0.1.0"
