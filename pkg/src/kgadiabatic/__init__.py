"""Adiabatic invariants of the Klein-Gordon chain.

Symbolic construction of the truncated formal integral, Gibbs sampling and
transfer-kernel oracles, Monte Carlo estimators, Hamiltonian dynamics and
spatial correlation decay.
"""

from .model import ModelParams, build_hamiltonian, energy, force, potential
from .poly import (
    COMPLEX,
    REAL,
    CompiledPolynomial,
    LocalityProfile,
    Polynomial,
    evaluate,
    p,
    plus_norm,
    poisson_bracket,
    profile,
    project_kernel,
    project_range,
    q,
    solve_homological,
    to_complex,
    to_real,
)
from .normal_form import (
    DivergenceGuard,
    NormalFormState,
    TruncatedInvariant,
    advance_order,
    build_invariant,
    build_state,
    tbar,
    verify_structure,
)
from .gibbs import (
    GibbsSamples,
    MarginalQuery,
    SamplerConfig,
    TransferKernel,
    marginal_bound_check,
    mcmc_run,
    mcmc_samples,
    sample_p,
    transfer_moments,
)
from .estimators import (
    MCEstimate,
    ObservableSet,
    build_xbar,
    estimate_moments,
    n_scan,
    stability_ratio,
)
from .dynamics import (
    CorrCurve,
    IntegratorConfig,
    Trajectory,
    autocorrelation,
    integrate,
    relaxation_bound,
    verify_autocorr_bound,
)
from .decay import DecayResult, decay_vs_eps, spatial_correlation, spatial_correlation_transfer

__version__ = "0.1.0"
