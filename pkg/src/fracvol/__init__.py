"""Pricing toolkit for derivatives under long-memory stochastic volatility.

Subpackages
-----------
``fracvol.processes``
    Fractional Brownian motion and fractional Ornstein-Uhlenbeck analytics
    and exact samplers.
``fracvol.mc``
    Correlated joint simulation of asset and volatility, Monte Carlo pricing,
    the time-changed Black-Scholes reference price, and model presets.
``fracvol.pde``
    Backward parabolic solver, discrete pricing operator, and heat-kernel
    machinery for the corrector system.
``fracvol.corrector``
    Corrector-surface construction and the second-order-accurate approximate
    price assembly.
``fracvol.cli``
    Experiment harness: table reproduction, amplitude-scaling study, sampler
    validation, CSV/plot-data emission.
"""

from .processes import (
    FouParams,
    GaussianPathBatch,
    KernelTable,
    TimeGrid,
    fbm_cov,
    fou_cov,
    fou_kernel,
    fou_stationary_var,
    phi_forecast,
    sample_fbm,
    sample_fou,
    sigma_h_sq,
    theta,
)
from .mc import (
    MarketModel,
    McConfig,
    PayoffSpec,
    PricingEstimate,
    bs_reference,
    build_stein_stein_vbar,
    constant_vol,
    model_presets,
    price_mc,
    simulate_joint_paths,
)
from .pde import (
    ParabolicProblem,
    SpaceTimeGrid,
    Surface,
    apply_L,
    duhamel_heat_solve,
    solve_backward,
    transform_constants,
    triangular_heat_solve,
)
from .corrector import (
    ApproxConfig,
    CorrectorSet,
    assemble_price,
    build_corrector_set,
    m1_derivs,
    m1_price,
    residual_report,
)

__version__ = "0.1.0"
