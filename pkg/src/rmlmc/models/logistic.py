"""Bayesian logistic regression with the Fisher information metric."""

import numpy as np
from scipy.special import expit

from .base import ModelError, TargetModel


class LogisticRegressionModel(TargetModel):
    """Logistic regression with a ``N(0, alpha I)`` prior on the coefficients.

    Args:
        X: Design matrix of shape ``(N, D)``. Any intercept column must
            already be included.
        y: Binary labels of length ``N``.
        alpha: Prior variance.
    """

    def __init__(self, X, y, alpha=100.0):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ModelError(f"incompatible shapes X{X.shape}, y{y.shape}")
        if not np.all(np.isfinite(X)):
            raise ModelError("design matrix has non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            raise ModelError("labels must be 0 or 1")
        if not alpha > 0:
            raise ModelError("prior variance must be positive")
        self.X = X
        self.y = y
        self.alpha = float(alpha)
        self.dim = X.shape[1]
        self._prior_precision = np.eye(self.dim) / self.alpha

    @classmethod
    def from_dataset(cls, dataset, alpha=100.0):
        return cls(dataset.X, dataset.y, alpha)

    def log_density(self, theta):
        eta = self.X @ theta
        # log(1 + e^eta) without overflow
        return float(self.y @ eta - np.sum(np.logaddexp(0.0, eta)) - theta @ theta / (2 * self.alpha))

    def grad_log_density(self, theta):
        s = expit(self.X @ theta)
        return self.X.T @ (self.y - s) - theta / self.alpha

    def metric(self, theta):
        s = expit(self.X @ theta)
        w = s * (1.0 - s)
        return (self.X.T * w) @ self.X + self._prior_precision

    def metric_deriv(self, theta):
        s = expit(self.X @ theta)
        w = s * (1.0 - s) * (1.0 - 2.0 * s)
        # dG/dtheta_d = X^T diag(w * X[:, d]) X
        wx = self.X * w[:, None]
        return np.einsum("nd,ni,nj->dij", wx, self.X, self.X, optimize=True)
