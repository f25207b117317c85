"""Markov chain drivers for HMC, RMHMC, RMLMC and e-RMLMC."""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import blas

from .diagnostics import ess_per_dimension
from .geometry import LocalGeometry, MetricBundle
from .integrators import (
    MOMENTUM,
    VELOCITY,
    IntegratorConfig,
    PhasePoint,
    TrajectoryResult,
    ermlmc_step,
    euclidean_hamiltonian,
    generalized_leapfrog_step,
    integrate,
    lagrangian_energy,
    leapfrog_step,
    riemannian_hamiltonian,
    rmlmc_step,
)
from .models.base import ModelError

STEPPERS = {
    "hmc": leapfrog_step,
    "rmhmc": generalized_leapfrog_step,
    "rmlmc": rmlmc_step,
    "ermlmc": ermlmc_step,
}
AUX_KIND = {"hmc": MOMENTUM, "rmhmc": MOMENTUM, "rmlmc": VELOCITY, "ermlmc": VELOCITY}
METHOD_LABELS = {"hmc": "HMC", "rmhmc": "RMHMC", "rmlmc": "RMLMC", "ermlmc": "e-RMLMC"}


@dataclass(frozen=True)
class SamplerSpec:
    """Sampler choice and integrator settings.

    ``fp_tol``/``fp_max``/``fp_fixed`` only affect the implicit integrators
    (rmhmc, rmlmc). ``mass`` is an optional diagonal (vector) or dense mass
    matrix for plain HMC. ``volume_correction=False`` drops the log-Jacobian
    from the acceptance ratio and exists only as a negative control.
    """

    method: str
    epsilon: float
    n_steps: int
    fp_tol: float = 1e-10
    fp_max: int = 100
    fp_fixed: bool = False
    mass: Optional[np.ndarray] = None
    seed: int = 0
    volume_correction: bool = True
    check_reversibility: bool = True

    def __post_init__(self):
        if self.method not in STEPPERS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(STEPPERS)}")
        if self.mass is not None and self.method != "hmc":
            raise ValueError("a mass matrix only applies to plain hmc")
        self.integrator_config  # validates the numeric settings

    @property
    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(self.epsilon, self.n_steps, self.fp_tol, self.fp_max,
                                self.fp_fixed, self.check_reversibility)

    @classmethod
    def with_trajectory_length(cls, method, epsilon, length, **kwargs):
        """Spec whose ``n_steps`` is ``round(length / epsilon)`` (at least 1)."""
        n_steps = max(1, int(round(length / epsilon)))
        return cls(method, epsilon, n_steps, **kwargs)

    @property
    def stepper(self):
        return STEPPERS[self.method]

    @property
    def label(self) -> str:
        return METHOD_LABELS[self.method]


@dataclass
class ChainState:
    theta: np.ndarray
    rng: np.random.Generator
    iteration: int = 0
    accept_count: int = 0
    cumulative_seconds: float = 0.0
    n_diverged: int = 0
    n_nonconverged: int = 0
    n_negative_det: int = 0
    fp_iters: int = 0
    geometry: Optional[LocalGeometry] = field(default=None, repr=False)
    last_trajectory: Optional[TrajectoryResult] = field(default=None, repr=False)


@dataclass
class ChainSummary:
    samples: np.ndarray
    acceptance_rate: float
    seconds_per_iteration: float
    ess: tuple
    min_ess_per_second: float
    per_dimension_ess: np.ndarray
    n_diverged: int = 0
    n_nonconverged: int = 0
    n_negative_det: int = 0
    mean_fp_iters: float = 0.0
    traces: Optional[list] = None


def refresh_momentum(bundle: MetricBundle, rng) -> np.ndarray:
    """Draw ``p ~ N(0, G)`` as ``chol @ z``."""
    return bundle.chol @ rng.standard_normal(bundle.dim)


def refresh_velocity(bundle: MetricBundle, rng) -> np.ndarray:
    """Draw ``v ~ N(0, G^-1)`` as ``chol^-T z``."""
    z = rng.standard_normal(bundle.dim)
    return blas.dtrsv(bundle.chol, z, lower=1, trans=1)


def hamiltonian(model, theta, p) -> float:
    """Riemannian Hamiltonian ``-log p + log det G / 2 + p^T G^-1 p / 2``."""
    return riemannian_hamiltonian(LocalGeometry(model, theta), np.asarray(p, dtype=float))


def energy(model, theta, v) -> float:
    """Velocity-space energy ``-log p - log det G / 2 + v^T G v / 2``."""
    return lagrangian_energy(LocalGeometry(model, theta), np.asarray(v, dtype=float))


class _Euclidean:
    """Cholesky factor and inverse of a constant HMC mass matrix."""

    def __init__(self, mass, dim):
        if mass is None:
            self.chol = None
            self.inv = None
            return
        mass = np.asarray(mass, dtype=float)
        if mass.ndim == 1:
            mass = np.diag(mass)
        if mass.shape != (dim, dim):
            raise ValueError(f"mass matrix must be ({dim}, {dim})")
        self.chol = np.linalg.cholesky(mass)
        self.inv = np.linalg.inv(mass)

    def draw(self, rng, dim):
        z = rng.standard_normal(dim)
        return z if self.chol is None else self.chol @ z


def new_chain(model, spec: SamplerSpec, theta0=None) -> ChainState:
    theta = model.initial_position() if theta0 is None else theta0
    theta = model.check_position(theta)
    geom = LocalGeometry(model, theta)
    if not np.isfinite(geom.log_density):
        raise ModelError("log density is not finite at the initial position")
    if spec.method != "hmc":
        geom.bundle  # raises NotPositiveDefinite for an invalid start
    return ChainState(theta, np.random.default_rng(spec.seed), geometry=geom)


def mh_step(model, chain: ChainState, spec: SamplerSpec, *, record_path=False,
            _mass=None) -> tuple:
    """One MCMC transition; updates ``chain`` in place and returns ``(chain, accepted)``.

    The auxiliary variable is refreshed from its conditional, ``L`` steps are
    integrated, and the proposal is accepted with probability
    ``min(1, exp(E_start - E_end + log|det J|))``. Diverged trajectories are
    always rejected, and so are trajectories whose fixed-point solves missed
    ``fp_tol`` in tolerance mode, since the unconverged map is not
    reversible. A uniform variate is drawn every iteration so the random
    stream does not depend on the integration outcome.
    """
    t0 = time.process_time()
    rng = chain.rng
    geom = chain.geometry if chain.geometry is not None else LocalGeometry(model, chain.theta)
    kind = AUX_KIND[spec.method]
    mass = _mass if _mass is not None else _Euclidean(spec.mass, model.dim)
    if spec.method == "hmc":
        aux = mass.draw(rng, model.dim)
    elif kind == MOMENTUM:
        aux = refresh_momentum(geom.bundle, rng)
    else:
        aux = refresh_velocity(geom.bundle, rng)
    traj = integrate(model, PhasePoint(chain.theta, aux, kind), spec.integrator_config,
                     spec.stepper, geom=geom, mass_inv=mass.inv, record_path=record_path)
    log_u = np.log(rng.random())

    accepted = False
    if traj.diverged:
        chain.n_diverged += 1
    elif not traj.converged and not spec.fp_fixed:
        pass
    else:
        log_ratio = traj.start_energy - traj.end_energy
        if spec.volume_correction:
            log_ratio += traj.log_jacobian
        if log_u < log_ratio:
            accepted = True
            chain.theta = traj.end.theta
            chain.geometry = traj.end_geometry
    if not traj.converged:
        chain.n_nonconverged += 1
    if traj.negative_det:
        chain.n_negative_det += 1
    if chain.geometry is None:
        chain.geometry = geom
    chain.fp_iters += traj.fixed_point_iters
    chain.accept_count += accepted
    chain.iteration += 1
    chain.last_trajectory = traj
    chain.cumulative_seconds += time.process_time() - t0
    return chain, accepted


def run_chain(model, spec: SamplerSpec, n_iters: int, burn_in: int = 0, theta0=None,
              record_trace: bool = False) -> ChainSummary:
    """Run ``n_iters`` transitions and summarise the post-burn-in part.

    Timing and acceptance statistics cover kept iterations only. Results are
    a deterministic function of ``spec.seed``.
    """
    if not n_iters > burn_in >= 0:
        raise ValueError("need n_iters > burn_in >= 0")
    chain = new_chain(model, spec, theta0)
    mass = _Euclidean(spec.mass, model.dim)
    kept = n_iters - burn_in
    samples = np.empty((kept, model.dim))
    traces = [] if record_trace else None
    accepts = 0
    seconds = 0.0
    counters = None
    for i in range(n_iters):
        if i == burn_in:
            counters = (chain.n_diverged, chain.n_nonconverged, chain.n_negative_det,
                        chain.fp_iters)
            seconds_before = chain.cumulative_seconds
        _, accepted = mh_step(model, chain, spec, record_path=record_trace, _mass=mass)
        if i >= burn_in:
            samples[i - burn_in] = chain.theta
            accepts += accepted
            if record_trace:
                traces.append(chain.last_trajectory.path)
    seconds = chain.cumulative_seconds - seconds_before

    ess = ess_per_dimension(samples) if kept > 1 else np.ones(model.dim)
    lo = float(ess.min())
    return ChainSummary(
        samples=samples,
        acceptance_rate=accepts / kept,
        seconds_per_iteration=seconds / kept,
        ess=(lo, float(np.median(ess)), float(ess.max())),
        min_ess_per_second=lo / seconds if seconds > 0 else np.inf,
        per_dimension_ess=ess,
        n_diverged=chain.n_diverged - counters[0],
        n_nonconverged=chain.n_nonconverged - counters[1],
        n_negative_det=chain.n_negative_det - counters[2],
        mean_fp_iters=(chain.fp_iters - counters[3]) / kept,
        traces=traces,
    )


def acceptance_rate(model, spec: SamplerSpec, n_iters: int, theta0=None) -> float:
    chain = new_chain(model, spec, theta0)
    mass = _Euclidean(spec.mass, model.dim)
    for _ in range(n_iters):
        mh_step(model, chain, spec, _mass=mass)
    return chain.accept_count / n_iters


def tune_step_size(model, spec: SamplerSpec, target: float = 0.75,
                   trajectory_length: Optional[float] = None, n_iters: int = 200,
                   n_rounds: int = 8, theta0=None) -> SamplerSpec:
    """Bisect ``log(epsilon)`` towards a target acceptance rate.

    When ``trajectory_length`` is given, ``n_steps`` follows ``epsilon`` so
    that their product stays fixed. Returns the spec with the best epsilon
    found; this is a warm-up helper and is not part of measured runs.
    """
    lo, hi = np.log(spec.epsilon) - 3.0, np.log(spec.epsilon) + 3.0

    def at(log_eps):
        eps = float(np.exp(log_eps))
        if trajectory_length is None:
            return replace(spec, epsilon=eps)
        return replace(spec, epsilon=eps, n_steps=max(1, int(round(trajectory_length / eps))))

    best, best_gap = at(np.log(spec.epsilon)), np.inf
    for _ in range(n_rounds):
        mid = 0.5 * (lo + hi)
        candidate = at(mid)
        ap = acceptance_rate(model, candidate, n_iters, theta0)
        if abs(ap - target) < best_gap:
            best, best_gap = candidate, abs(ap - target)
        if ap > target:
            lo = mid
        else:
            hi = mid
    return best


def calibrate_fixed_point(model, spec: SamplerSpec, n_iters: int = 200,
                          quantile: float = 0.95, theta0=None) -> SamplerSpec:
    """Switch an implicit sampler to a fixed iteration count.

    Runs a short tolerance-mode chain, records the iterations each implicit
    solve needed to reach ``spec.fp_tol`` and returns a spec iterating that
    many times (the given quantile over solves) without a convergence test.
    """
    if spec.method not in ("rmhmc", "rmlmc"):
        return spec
    probe = replace(spec, fp_fixed=False)
    chain = new_chain(model, probe, theta0)
    counts = []
    for _ in range(n_iters):
        mh_step(model, chain, probe)
        if not chain.last_trajectory.diverged:
            counts.extend(chain.last_trajectory.fp_counts)
    n_fixed = int(np.ceil(np.quantile(counts, quantile))) if counts else spec.fp_max
    return replace(spec, fp_fixed=True, fp_max=max(1, n_fixed))
