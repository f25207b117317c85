"""Banana-shaped posterior from a quadratic-mean Gaussian likelihood."""

import numpy as np

from .base import ModelError, TargetModel


class BananaModel(TargetModel):
    """``y_n ~ N(theta_1 + theta_2^2, sigma_y^2)``, ``theta ~ N(0, sigma_theta^2 I)``.

    The metric is the expected Fisher information of the likelihood plus the
    prior precision, ``(N / sigma_y^2) J^T J + I / sigma_theta^2`` with
    ``J = [1, 2 theta_2]``.
    """

    dim = 2

    def __init__(self, y_data, sigma_y=2.0, sigma_theta=1.0):
        y_data = np.asarray(y_data, dtype=float).ravel()
        if y_data.size == 0:
            raise ModelError("banana model needs at least one observation")
        if not (sigma_y > 0 and sigma_theta > 0):
            raise ModelError("standard deviations must be positive")
        self.y_data = y_data
        self.sigma_y = float(sigma_y)
        self.sigma_theta = float(sigma_theta)
        self.n = y_data.size
        self._sum_y = float(y_data.sum())
        self._sum_y2 = float(y_data @ y_data)
        self._fisher_scale = self.n / self.sigma_y ** 2
        self._prior_precision = 1.0 / self.sigma_theta ** 2

    def log_density(self, theta):
        mu = theta[0] + theta[1] ** 2
        # sum_n (y_n - mu)^2 expanded so evaluation is O(1) in N
        sq = self._sum_y2 - 2.0 * mu * self._sum_y + self.n * mu * mu
        return float(-sq / (2 * self.sigma_y ** 2) - (theta @ theta) * self._prior_precision / 2)

    def grad_log_density(self, theta):
        mu = theta[0] + theta[1] ** 2
        r = (self._sum_y - self.n * mu) / self.sigma_y ** 2
        return np.array([r, 2.0 * theta[1] * r]) - theta * self._prior_precision

    def metric(self, theta):
        t2 = theta[1]
        c = self._fisher_scale
        p = self._prior_precision
        return np.array([[c + p, 2.0 * c * t2],
                         [2.0 * c * t2, 4.0 * c * t2 * t2 + p]])

    def metric_deriv(self, theta):
        c = self._fisher_scale
        dg = np.zeros((2, 2, 2))
        dg[1] = [[0.0, 2.0 * c], [2.0 * c, 8.0 * c * theta[1]]]
        return dg
