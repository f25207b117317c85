"""Geometric MCMC: Riemannian Hamiltonian and Lagrangian Monte Carlo samplers."""

from .diagnostics import EssReport, ess_initial_monotone, ess_per_dimension, summarize
from .geometry import LocalGeometry, MetricBundle, NotPositiveDefinite, build_metric_bundle
from .integrators import (
    IntegratorConfig,
    PhasePoint,
    TrajectoryResult,
    ermlmc_step,
    generalized_leapfrog_step,
    integrate,
    leapfrog_step,
    rmlmc_step,
)
from .samplers import (
    ChainSummary,
    SamplerSpec,
    calibrate_fixed_point,
    energy,
    hamiltonian,
    mh_step,
    new_chain,
    run_chain,
    tune_step_size,
)

__version__ = "0.1.0"
