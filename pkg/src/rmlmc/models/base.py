"""Target model contract shared by every sampler."""

from abc import ABC, abstractmethod

import numpy as np


class ModelError(ValueError):
    """Raised for invalid model construction or positions."""


class TargetModel(ABC):
    """Unnormalised log posterior together with a Riemannian metric.

    Subclasses supply analytic metric derivatives; ``metric_deriv(theta)[i]``
    is the derivative of ``metric(theta)`` with respect to ``theta[i]``.
    """

    dim: int

    @abstractmethod
    def log_density(self, theta) -> float:
        ...

    @abstractmethod
    def grad_log_density(self, theta) -> np.ndarray:
        ...

    @abstractmethod
    def metric(self, theta) -> np.ndarray:
        ...

    @abstractmethod
    def metric_deriv(self, theta) -> np.ndarray:
        ...

    def initial_position(self) -> np.ndarray:
        return np.zeros(self.dim)

    def check_position(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ModelError(f"expected position of shape ({self.dim},), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ModelError("position has non-finite entries")
        return theta
