"""Small analytic targets used for validation and demos."""

import numpy as np

from .base import ModelError, TargetModel


class FunctionalModel(TargetModel):
    """Model assembled from plain callables.

    Args:
        dim: Dimension of the position space.
        log_density: ``theta -> float``.
        grad_log_density: ``theta -> (dim,)`` array.
        metric: ``theta -> (dim, dim)`` array; identity when omitted.
        metric_deriv: ``theta -> (dim, dim, dim)`` array; zeros when omitted.
    """

    def __init__(self, dim, log_density, grad_log_density, metric=None, metric_deriv=None):
        if (metric is None) != (metric_deriv is None):
            raise ModelError("metric and metric_deriv must be given together")
        self.dim = int(dim)
        self._log_density = log_density
        self._grad = grad_log_density
        self._metric = metric
        self._metric_deriv = metric_deriv
        self._eye = np.eye(self.dim)
        self._zeros = np.zeros((self.dim,) * 3)

    def log_density(self, theta):
        return self._log_density(theta)

    def grad_log_density(self, theta):
        return self._grad(theta)

    def metric(self, theta):
        if self._metric is None:
            return self._eye
        return self._metric(theta)

    def metric_deriv(self, theta):
        if self._metric_deriv is None:
            return self._zeros
        return self._metric_deriv(theta)


def standard_gaussian(dim=2) -> FunctionalModel:
    """Standard normal target with the identity metric."""
    return FunctionalModel(dim, lambda t: -0.5 * float(t @ t), lambda t: -t)


def gaussian_with_metric(metric, metric_deriv, dim=1) -> FunctionalModel:
    """Standard normal target paired with a position-dependent metric."""
    return FunctionalModel(dim, lambda t: -0.5 * float(t @ t), lambda t: -t,
                           metric, metric_deriv)


def quadratic_metric_1d(offset=1.0) -> FunctionalModel:
    """1-D standard normal target with metric ``G(theta) = offset + theta^2``."""
    return gaussian_with_metric(
        lambda t: np.array([[offset + t[0] * t[0]]]),
        lambda t: np.array([[[2.0 * t[0]]]]),
    )


class RandomMetricModel(TargetModel):
    """Correlated Gaussian target with a random position-dependent metric.

    The metric is ``c I + M(theta) M(theta)^T`` with ``M`` affine in
    ``theta``, so it is positive definite everywhere and its derivative is
    available in closed form.
    """

    def __init__(self, dim=3, seed=0, scale=0.5, jitter=1.0):
        rng = np.random.default_rng(seed)
        self.dim = int(dim)
        a = rng.standard_normal((dim, dim))
        self.precision = a @ a.T / dim + np.eye(dim)
        self.m0 = rng.standard_normal((dim, dim))
        self.m1 = scale * rng.standard_normal((dim, dim, dim))
        self.jitter = float(jitter)

    def _m(self, theta):
        return self.m0 + np.tensordot(theta, self.m1, axes=1)

    def log_density(self, theta):
        return -0.5 * float(theta @ self.precision @ theta)

    def grad_log_density(self, theta):
        return -self.precision @ theta

    def metric(self, theta):
        m = self._m(theta)
        return self.jitter * np.eye(self.dim) + m @ m.T

    def metric_deriv(self, theta):
        m = self._m(theta)
        dm_mt = self.m1 @ m.T
        return dm_mt + dm_mt.transpose(0, 2, 1)
