"""Numerical integrators for Euclidean, Riemannian and Lagrangian dynamics.

Four one-step maps are provided:

``leapfrog_step``
    Standard leapfrog for ``H = -log p + p^T M^-1 p / 2`` with a constant
    mass matrix.
``generalized_leapfrog_step``
    Implicit Stormer-Verlet scheme for the Riemannian Hamiltonian in
    ``(theta, p)``; both implicit updates are solved by fixed-point iteration.
``rmlmc_step``
    Semi-explicit scheme in ``(theta, v)`` with ``v = G^-1 p``; only the first
    velocity half step is implicit. Not volume preserving, so each step
    reports the log-determinant of its Jacobian.
``ermlmc_step``
    Fully explicit variant where both velocity half steps are linear solves.

``integrate`` composes ``L`` steps of any of them and records the energies
needed for the Metropolis-Hastings correction.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lapack

from .geometry import (
    LocalGeometry,
    NotPositiveDefinite,
    eta_vector,
    nu_vector,
    omega_matrix,
    omega_tilde_matrix,
)

MOMENTUM = "momentum"
VELOCITY = "velocity"

DIVERGENCE_THRESHOLD = 1000.0
# relative distance between the forward half-step velocity and the one
# recovered by the backward solve above which a step counts as irreversible
REVERSIBILITY_TOL = 1e-6


class IntegrationError(RuntimeError):
    """Base class for failures inside a single integration step."""


class Diverged(IntegrationError):
    pass


class SingularUpdate(IntegrationError):
    pass


class NotReversible(IntegrationError):
    """The implicit solve of the reversed step lands on a different root."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, number of steps and fixed-point iteration controls.

    With ``fp_fixed`` set, implicit equations are iterated exactly ``fp_max``
    times regardless of ``fp_tol``. ``check_reversibility`` makes the
    semi-explicit step verify that its reverse recovers the same implicit
    root.
    """

    epsilon: float
    n_steps: int = 1
    fp_tol: float = 1e-10
    fp_max: int = 100
    fp_fixed: bool = False
    check_reversibility: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if self.fp_max < 1:
            raise ValueError("fp_max must be at least 1")


@dataclass(frozen=True, eq=False)
class PhasePoint:
    theta: np.ndarray
    aux: np.ndarray
    kind: str = MOMENTUM

    def negated(self) -> "PhasePoint":
        return PhasePoint(self.theta, -self.aux, self.kind)


@dataclass(eq=False)
class StepResult:
    """Outcome of one step: the new point, its geometry and bookkeeping."""

    theta: np.ndarray
    aux: np.ndarray
    geometry: LocalGeometry
    log_det: float = 0.0
    fp_iters: int = 0
    converged: bool = True
    negative_det: bool = False
    fp_counts: tuple = ()


@dataclass(eq=False)
class TrajectoryResult:
    end: PhasePoint
    log_jacobian: float
    start_energy: float
    end_energy: float
    fixed_point_iters: int
    diverged: bool
    converged: bool = True
    negative_det: bool = False
    end_geometry: Optional[LocalGeometry] = None
    path: Optional[np.ndarray] = None
    fp_counts: list = field(default_factory=list)

    @property
    def log_accept_ratio(self) -> float:
        """``E_start - E_end + log|det J|``; ``-inf`` when diverged."""
        if self.diverged:
            return -np.inf
        return self.start_energy - self.end_energy + self.log_jacobian


def _epsilon(config) -> float:
    return config.epsilon if isinstance(config, IntegratorConfig) else float(config)


def _check_finite(*arrays):
    # inf or nan anywhere makes the sum non-finite
    for a in arrays:
        if not math.isfinite(a.sum()):
            raise Diverged("non-finite value in integration state")


def _geometry(model, theta, geom):
    if geom is not None:
        return geom
    return LocalGeometry(model, theta)


def _lu_log_abs_det(lu, piv):
    """log|det| and sign from LAPACK LU factors (scipy returns 0-based pivots)."""
    # plain floats are cheaper than numpy reductions for small matrices
    diag = lu.diagonal().tolist()
    try:
        logabs = math.fsum(math.log(abs(d)) for d in diag)
    except ValueError:
        raise SingularUpdate("singular velocity update matrix") from None
    if not math.isfinite(logabs):
        raise SingularUpdate("singular velocity update matrix")
    flips = sum(d < 0.0 for d in diag) + sum(i != k for i, k in enumerate(piv.tolist()))
    return logabs, -1.0 if flips % 2 else 1.0


def _solve_logdet(a, b):
    """Solve ``a x = b``; return ``x`` with log|det a| and its sign."""
    lu, piv, x, info = lapack.dgesv(a, b)
    if info != 0:
        raise SingularUpdate("singular velocity update matrix")
    return (x,) + _lu_log_abs_det(lu, piv)


def _slogdet(a):
    lu, piv, info = lapack.dgetrf(a)
    if info < 0 or (info > 0 and not lu.diagonal().all()):
        raise SingularUpdate("singular Jacobian factor")
    return _lu_log_abs_det(lu, piv)


def leapfrog_step(model, state: PhasePoint, config, geom=None, mass_inv=None) -> StepResult:
    """Half kick, drift, half kick with a constant mass matrix (identity by default)."""
    eps = _epsilon(config)
    g0 = _geometry(model, state.theta, geom)
    p_half = state.aux + 0.5 * eps * g0.grad_log_density
    vel = p_half if mass_inv is None else mass_inv @ p_half
    theta = state.theta + eps * vel
    _check_finite(theta)
    g1 = LocalGeometry(model, theta)
    p = p_half + 0.5 * eps * g1.grad_log_density
    _check_finite(p)
    return StepResult(theta, p, g1)


def _fixed_point(update, x0, config, budget=None):
    """Iterate ``x <- update(x)`` from ``x0``; return ``(x, iters, converged)``.

    Convergence needs the sup-norm change ``delta`` below ``config.fp_tol``
    and also the contraction-based error estimate ``delta r / (1 - r)``,
    with ``r`` the ratio of successive changes, so slowly contracting
    solves are not stopped early. At most ``budget`` iterations are run
    (``config.fp_max`` by default).
    """
    budget = config.fp_max if budget is None else budget
    tol = config.fp_tol
    x = x0
    delta = prev = np.inf
    converged = False
    for it in range(1, budget + 1):
        x_new = update(x)
        delta = float(np.abs(x_new - x).max())
        x = x_new
        if not math.isfinite(delta):
            raise Diverged("fixed-point iteration produced non-finite values")
        # r >= 1 below tol means the iteration sits at its rounding floor
        r = delta / prev if prev > 0 else 0.0
        converged = delta < tol and (r >= 1.0 or delta * r < tol * (1.0 - r))
        if converged and not config.fp_fixed:
            return x, it, True
        prev = delta
    return x, budget, converged


def generalized_leapfrog_step(model, state: PhasePoint, config: IntegratorConfig,
                              geom=None) -> StepResult:
    """One generalized leapfrog step for the Riemannian Hamiltonian.

    The momentum half step is implicit in ``p_half`` and the position update
    is implicit in ``theta_new``; both are solved by fixed-point iteration.
    The final momentum half step is explicit.
    """
    eps = config.epsilon
    h = 0.5 * eps
    g0 = _geometry(model, state.theta, geom)
    b0 = g0.bundle
    gp0 = g0.grad_phi
    p = state.aux

    p_half, it_p, ok_p = _fixed_point(
        lambda ph: p - h * (gp0 - 0.5 * nu_vector(b0, ph)), p, config)

    u0 = b0.g_inv @ p_half
    theta0 = state.theta

    def position_update(th):
        g = model.metric(th)
        try:
            g_inv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("singular metric during position update") from None
        return theta0 + h * (u0 + g_inv @ p_half)

    # the first iterate from theta0 is theta0 + eps * u0 and needs no metric call
    theta_new, it_q, ok_q = _fixed_point(position_update, theta0 + eps * u0, config,
                                         budget=config.fp_max - 1)
    it_q += 1
    _check_finite(theta_new)

    g1 = LocalGeometry(model, theta_new)
    p_new = p_half - h * (g1.grad_phi - 0.5 * nu_vector(g1.bundle, p_half))
    _check_finite(p_new)
    return StepResult(theta_new, p_new, g1, 0.0, it_p + it_q, ok_p and ok_q,
                      fp_counts=(it_p, it_q))


def rmlmc_step(model, state: PhasePoint, config: IntegratorConfig, geom=None) -> StepResult:
    """Semi-explicit Lagrangian step with its log-Jacobian.

    ``v_half`` solves ``v_half = v - eps/2 (eta(theta, v_half) + G^-1 grad phi)``
    by fixed-point iteration, followed by an explicit position step and an
    explicit velocity half step. The Jacobian determinant is
    ``det(I - eps Omega(theta', v_half)) / det(I + eps Omega(theta, v_half))``.

    The implicit equation is quadratic in ``v_half`` and can have several
    roots once ``eps`` is large. The reversed step starts from
    ``(theta', -v')`` and must find ``-v_half``; when that root repels the
    iteration, the map is not reversible. With ``config.check_reversibility``
    the backward solve is run and ``NotReversible`` is raised on mismatch.
    It reuses both geometries, so it costs fixed-point iterations only.
    """
    eps = config.epsilon
    h = 0.5 * eps
    g0 = _geometry(model, state.theta, geom)
    gamma0 = g0.gamma
    a0 = g0.natural_grad_phi
    v = state.aux

    v_half, iters, converged = _fixed_point(
        lambda vh: v - h * (eta_vector(gamma0, vh) + a0), v, config)

    theta = state.theta + eps * v_half
    _check_finite(theta)
    g1 = LocalGeometry(model, theta)
    gamma1 = g1.gamma
    a1 = g1.natural_grad_phi
    v_new = v_half - h * (eta_vector(gamma1, v_half) + a1)
    _check_finite(v_new)

    if config.check_reversibility:
        back, _, ok = _fixed_point(lambda u: -v_new - h * (eta_vector(gamma1, u) + a1),
                                   -v_new, config)
        gap = float(np.abs(back + v_half).max())
        if gap > REVERSIBILITY_TOL * (1.0 + float(np.abs(v_half).max())):
            raise NotReversible(f"reverse step misses the forward root by {gap:.3g}")
        # the reverse move would be rejected for an unconverged solve, so this one is too
        if not ok and not config.fp_fixed:
            raise NotReversible("reverse solve did not converge")

    eye = np.eye(theta.size)
    ld_num, s_num = _slogdet(eye - eps * omega_matrix(gamma1, v_half))
    ld_den, s_den = _slogdet(eye + eps * omega_matrix(gamma0, v_half))
    return StepResult(theta, v_new, g1, ld_num - ld_den, iters, converged,
                      s_num * s_den < 0, (iters,))


def ermlmc_step(model, state: PhasePoint, config, geom=None) -> StepResult:
    """Fully explicit Lagrangian step with its log-Jacobian.

    Each velocity half step solves ``(G + eps/2 Omega_tilde(theta, v_in)) v_out
    = G v_in - eps/2 grad phi``. The log-Jacobian collects
    ``log|G - eps/2 Omega_tilde(., v_out)| - log|G + eps/2 Omega_tilde(., v_in)|``
    for both half steps; the LU factors of the solves supply the
    denominators.
    """
    eps = _epsilon(config)
    h = 0.5 * eps
    g0 = _geometry(model, state.theta, geom)
    G0 = g0.bundle.g
    gt0 = g0.gamma_tilde
    v = state.aux

    v_half, ld_a, s_a = _solve_logdet(G0 + h * omega_tilde_matrix(gt0, v), G0 @ v - h * g0.grad_phi)
    ld_c, s_c = _slogdet(G0 - h * omega_tilde_matrix(gt0, v_half))

    theta = state.theta + eps * v_half
    _check_finite(v_half, theta)
    g1 = LocalGeometry(model, theta)
    G1 = g1.bundle.g
    gt1 = g1.gamma_tilde

    v_new, ld_b, s_b = _solve_logdet(G1 + h * omega_tilde_matrix(gt1, v_half),
                                     G1 @ v_half - h * g1.grad_phi)
    _check_finite(v_new)
    ld_e, s_e = _slogdet(G1 - h * omega_tilde_matrix(gt1, v_new))

    log_det = ld_c - ld_a + ld_e - ld_b
    return StepResult(theta, v_new, g1, log_det, 0, True, s_a * s_b * s_c * s_e < 0)


STEPPER_KIND = {
    leapfrog_step: MOMENTUM,
    generalized_leapfrog_step: MOMENTUM,
    rmlmc_step: VELOCITY,
    ermlmc_step: VELOCITY,
}


def euclidean_hamiltonian(geom: LocalGeometry, p, mass_inv=None) -> float:
    """``-log p(theta) + p^T M^-1 p / 2``."""
    kinetic = p @ p if mass_inv is None else p @ mass_inv @ p
    return -geom.log_density + 0.5 * float(kinetic)


def riemannian_hamiltonian(geom: LocalGeometry, p) -> float:
    """``-log p(theta) + log det G / 2 + p^T G^-1 p / 2``."""
    b = geom.bundle
    return -geom.log_density + 0.5 * b.log_det + 0.5 * float(p @ b.g_inv @ p)


def lagrangian_energy(geom: LocalGeometry, v) -> float:
    """``-log p(theta) - log det G / 2 + v^T G v / 2``."""
    b = geom.bundle
    return -geom.log_density - 0.5 * b.log_det + 0.5 * float(v @ b.g @ v)


def state_energy(stepper, geom, aux, mass_inv=None) -> float:
    if stepper is leapfrog_step:
        return euclidean_hamiltonian(geom, aux, mass_inv)
    if STEPPER_KIND[stepper] == MOMENTUM:
        return riemannian_hamiltonian(geom, aux)
    return lagrangian_energy(geom, aux)


def integrate(model, state: PhasePoint, config: IntegratorConfig, stepper: Callable,
              geom: Optional[LocalGeometry] = None, mass_inv=None,
              record_path: bool = False) -> TrajectoryResult:
    """Apply ``stepper`` ``config.n_steps`` times from ``state``.

    Failures inside a step (non-finite values, singular solves, loss of
    positive definiteness) end the trajectory early with ``diverged`` set,
    as does an energy error above ``DIVERGENCE_THRESHOLD``.
    """
    # overflow inside a blowing-up trajectory is reported as divergence instead
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _integrate(model, state, config, stepper, geom, mass_inv, record_path)


def _integrate(model, state, config, stepper, geom, mass_inv, record_path):
    kwargs = {"mass_inv": mass_inv} if stepper is leapfrog_step else {}
    geom = _geometry(model, state.theta, geom)
    start_energy = state_energy(stepper, geom, state.aux, mass_inv)
    theta, aux = state.theta, state.aux
    log_jac = 0.0
    iters = 0
    converged = True
    negative = False
    path = [theta] if record_path else None
    fp_counts = []
    diverged = False
    for _ in range(config.n_steps):
        try:
            res = stepper(model, PhasePoint(theta, aux, state.kind), config, geom=geom, **kwargs)
        except (IntegrationError, NotPositiveDefinite, FloatingPointError):
            diverged = True
            break
        theta, aux, geom = res.theta, res.aux, res.geometry
        log_jac += res.log_det
        iters += res.fp_iters
        fp_counts.extend(res.fp_counts)
        converged = converged and res.converged
        negative = negative or res.negative_det
        if record_path:
            path.append(theta)

    end_energy = np.nan
    if not diverged:
        try:
            end_energy = state_energy(stepper, geom, aux, mass_inv)
        except NotPositiveDefinite:
            diverged = True
    if not diverged:
        error = end_energy - start_energy - log_jac
        diverged = not np.isfinite(error) or abs(error) > DIVERGENCE_THRESHOLD
    return TrajectoryResult(
        end=PhasePoint(theta, aux, state.kind),
        log_jacobian=log_jac,
        start_energy=start_energy,
        end_energy=end_energy,
        fixed_point_iters=iters,
        diverged=diverged,
        converged=converged,
        negative_det=negative,
        end_geometry=None if diverged else geom,
        path=np.array(path) if record_path else None,
        fp_counts=fp_counts,
    )
