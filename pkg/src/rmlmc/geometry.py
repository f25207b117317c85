"""Metric-derived quantities: Christoffel symbols, quadratic forms and the
velocity-update matrices used by the Riemannian integrators.

Tensor layout conventions used throughout the package:

* ``dg[i]`` is the derivative of the metric with respect to ``theta[i]``,
  so ``dg[i, r, c] = d g_rc / d theta_i``.
* ``gamma[k, i, j]`` is the Christoffel symbol of the second kind with the
  upper index first.
* ``gamma_tilde[k, i, j]`` is the Christoffel symbol of the first kind,
  ``sum_l g_kl gamma[l, i, j]``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack


class NotPositiveDefinite(ValueError):
    """Raised when a metric fails its Cholesky factorisation."""


@dataclass(frozen=True, eq=False)
class MetricBundle:
    """Metric tensor at a position together with its derived factors."""

    theta: np.ndarray
    g: np.ndarray
    chol: np.ndarray
    g_inv: np.ndarray
    log_det: float
    dg: np.ndarray

    @property
    def dim(self) -> int:
        return self.g.shape[0]


def bundle_from_metric(theta, g, dg) -> MetricBundle:
    """Factorise a metric ``g`` with derivative tensor ``dg``.

    Raises:
        NotPositiveDefinite: if ``g`` is not numerically positive definite.
    """
    g = np.asarray(g, dtype=float)
    # a single sum is the cheapest finiteness test on the hot path
    if not math.isfinite(g.sum()):
        raise NotPositiveDefinite("metric has non-finite entries")
    # raw LAPACK calls: numpy.linalg dispatch dominates the cost for small D
    chol, info = lapack.dpotrf(g, lower=1, clean=1)
    if info != 0:
        raise NotPositiveDefinite(f"Cholesky factorisation failed (info={info})")
    diag = chol.diagonal()
    if not (diag > 0.0).all():
        raise NotPositiveDefinite("Cholesky factor has a non-positive pivot")
    lower_inv, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise NotPositiveDefinite(f"metric inversion failed (info={info})")
    # dpotri fills only the lower triangle
    g_inv = lower_inv + lower_inv.T
    g_inv.flat[::g.shape[0] + 1] *= 0.5
    log_det = 2.0 * float(np.log(diag).sum())
    return MetricBundle(np.asarray(theta, dtype=float), g, chol, g_inv, log_det,
                        np.asarray(dg, dtype=float))


def build_metric_bundle(theta, model) -> MetricBundle:
    """Evaluate ``model.metric`` and ``model.metric_deriv`` at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return bundle_from_metric(theta, model.metric(theta), model.metric_deriv(theta))


def christoffel_first(bundle: MetricBundle) -> np.ndarray:
    """Christoffel symbols of the first kind, ``gt[k, i, j]``.

    ``gt[k, i, j] = (d_i g_kj + d_j g_ik - d_k g_ij) / 2``.
    """
    dg = bundle.dg
    gt = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(2, 1, 0) - dg)
    return 0.5 * (gt + gt.transpose(0, 2, 1))


def christoffel_second(bundle: MetricBundle, gamma_tilde=None) -> np.ndarray:
    """Christoffel symbols of the second kind, ``gamma[k, i, j]``.

    Raising the first index of the first-kind symbols with ``g_inv`` gives
    ``sum_l g^kl (d_i g_lj + d_j g_il - d_l g_ij) / 2``.
    """
    if gamma_tilde is None:
        gamma_tilde = christoffel_first(bundle)
    d = bundle.dim
    gamma = (bundle.g_inv @ gamma_tilde.reshape(d, d * d)).reshape(d, d, d)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def nu_vector(bundle: MetricBundle, p) -> np.ndarray:
    """``nu_i = (G^-1 p)^T (d_i G) (G^-1 p)``."""
    v = bundle.g_inv @ p
    return bundle.dg @ v @ v


def eta_vector(gamma, v) -> np.ndarray:
    """``eta_k = sum_ij gamma[k, i, j] v_i v_j``."""
    return gamma @ v @ v


def omega_matrix(gamma, v) -> np.ndarray:
    """``Omega[i, j] = sum_k v_k gamma[i, k, j]``."""
    return v @ gamma


def omega_tilde_matrix(gamma_tilde, v) -> np.ndarray:
    """``G Omega``, i.e. ``[k, j] = sum_i v_i gamma_tilde[k, i, j]``."""
    return v @ gamma_tilde


def grad_phi(bundle: MetricBundle, grad_log_density) -> np.ndarray:
    """Gradient of ``phi = -log p + log det G / 2``."""
    # dg[i] and g_inv are symmetric, so the trace is a flat dot product
    d = bundle.dim
    return -grad_log_density + 0.5 * (bundle.dg.reshape(d, d * d) @ bundle.g_inv.ravel())


def fd_metric_deriv(model, theta, step=1e-5) -> np.ndarray:
    """Central-difference estimate of ``model.metric_deriv``. Test use only."""
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    out = np.empty((d, d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        out[i] = (model.metric(theta + e) - model.metric(theta - e)) / (2 * step)
    return out


class LocalGeometry:
    """Lazily evaluated model and metric quantities at a single position.

    Everything is computed on first access and cached, so an integrator that
    only needs gradients (plain leapfrog) never touches the metric.
    """

    __slots__ = ("model", "theta", "_logp", "_grad", "_bundle", "_gphi", "_ngphi",
                 "_gt", "_gamma")

    def __init__(self, model, theta):
        self.model = model
        self.theta = np.asarray(theta, dtype=float)
        self._logp = self._grad = self._bundle = self._gphi = None
        self._ngphi = self._gt = self._gamma = None

    @property
    def log_density(self) -> float:
        if self._logp is None:
            self._logp = float(self.model.log_density(self.theta))
        return self._logp

    @property
    def grad_log_density(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.asarray(self.model.grad_log_density(self.theta), dtype=float)
        return self._grad

    @property
    def bundle(self) -> MetricBundle:
        if self._bundle is None:
            self._bundle = build_metric_bundle(self.theta, self.model)
        return self._bundle

    @property
    def grad_phi(self) -> np.ndarray:
        if self._gphi is None:
            self._gphi = grad_phi(self.bundle, self.grad_log_density)
        return self._gphi

    @property
    def natural_grad_phi(self) -> np.ndarray:
        # G^-1 grad phi, the forcing term of the velocity dynamics
        if self._ngphi is None:
            self._ngphi = self.bundle.g_inv @ self.grad_phi
        return self._ngphi

    @property
    def gamma_tilde(self) -> np.ndarray:
        if self._gt is None:
            self._gt = christoffel_first(self.bundle)
        return self._gt

    @property
    def gamma(self) -> np.ndarray:
        if self._gamma is None:
            self._gamma = christoffel_second(self.bundle, self.gamma_tilde)
        return self._gamma

    @property
    def phi(self) -> float:
        return -self.log_density + 0.5 * self.bundle.log_det
