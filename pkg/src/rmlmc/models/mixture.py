"""Finite mixture of univariate Gaussians on an unconstrained parametrisation.

The position vector is laid out as ``[w (K-1), mu (K), log_var (K)]`` where
``w`` are stick-breaking logits for the weights. The metric is the empirical
Fisher information of the per-datum scores in these coordinates.
"""

import numpy as np
from scipy.special import expit, log_expit, logit, logsumexp, softmax

from .base import ModelError, TargetModel

_LOG_2PI = float(np.log(2 * np.pi))


def stick_breaking(w, K):
    """Map logits ``w`` (length ``K-1``) to ``(log_pi, z)``.

    ``z[j] = expit(w[j] - log(K - j - 1))`` is the fraction of the remaining
    stick taken by component ``j``; ``w = 0`` gives uniform weights.
    """
    offsets = np.log(K - 1 - np.arange(K - 1))
    u = np.asarray(w, dtype=float) - offsets
    z = expit(u)
    log_z = log_expit(u)
    log_1mz = log_expit(-u)
    cum = np.concatenate(([0.0], np.cumsum(log_1mz)))
    log_pi = np.append(log_z + cum[:-1], cum[-1])
    return log_pi, z


def inverse_stick_breaking(pi):
    pi = np.asarray(pi, dtype=float)
    K = pi.size
    remaining = 1.0 - np.concatenate(([0.0], np.cumsum(pi)[:-2]))
    z = pi[:-1] / remaining
    return logit(z) + np.log(K - 1 - np.arange(K - 1))


def to_unconstrained(pi, mu, var):
    return np.concatenate([inverse_stick_breaking(pi), np.asarray(mu, float), np.log(var)])


def from_unconstrained(theta, K):
    theta = np.asarray(theta, dtype=float)
    log_pi, _ = stick_breaking(theta[:K - 1], K)
    return np.exp(log_pi), theta[K - 1:2 * K - 1].copy(), np.exp(theta[2 * K - 1:])


class GaussianMixtureModel(TargetModel):
    """Posterior of a ``K``-component univariate Gaussian mixture.

    Prior: symmetric Dirichlet(``lam``) on the weights,
    ``mu_k ~ N(m, var_k / beta)`` and ``var_k ~ InvGamma(b, c)``. Hyper-
    parameters left as ``None`` default to ``m = mean(x)`` and
    ``c = var(x)``. The log density includes the log-Jacobian of the map to
    unconstrained coordinates.

    Args:
        x_data: Observations.
        K: Number of components.
        regularization: Relative ridge added to the empirical Fisher metric,
            scaled by the mean of its diagonal.
    """

    def __init__(self, x_data, K, lam=1.0, m=None, beta=1.0, b=2.0, c=None,
                 regularization=1e-6):
        x = np.asarray(x_data, dtype=float).ravel()
        if x.size < 2:
            raise ModelError("mixture model needs at least two observations")
        if K < 1:
            raise ModelError("need at least one component")
        self.x = x
        self.K = int(K)
        self.lam = float(lam)
        self.m = float(np.mean(x)) if m is None else float(m)
        self.beta = float(beta)
        self.b = float(b)
        self.c = float(np.var(x)) if c is None else float(c)
        if min(self.lam, self.beta, self.b, self.c) <= 0:
            raise ModelError("hyperparameters must be positive")
        self.regularization = float(regularization)
        self.dim = 3 * self.K - 1
        self.n = x.size

    # layout helpers
    def _split(self, theta):
        K = self.K
        return theta[:K - 1], theta[K - 1:2 * K - 1], theta[2 * K - 1:]

    def _weights(self, w):
        """``log_pi``, ``z`` and the Jacobian ``P[k, j] = d log_pi_k / d w_j``."""
        K = self.K
        log_pi, z = stick_breaking(w, K)
        P = np.zeros((K, K - 1))
        for k in range(K):
            P[k, :k] = -z[:k]
            if k < K - 1:
                P[k, k] = 1.0 - z[k]
        return log_pi, z, P

    def _component_terms(self, theta):
        w, mu, tau = self._split(theta)
        log_pi, z, P = self._weights(w)
        prec = np.exp(-tau)
        diff = self.x[:, None] - mu[None, :]
        log_comp = log_pi - 0.5 * _LOG_2PI - 0.5 * tau - 0.5 * diff ** 2 * prec
        return w, mu, tau, log_pi, z, P, prec, diff, log_comp

    def log_likelihood(self, theta):
        *_, log_comp = self._component_terms(np.asarray(theta, dtype=float))
        return float(np.sum(logsumexp(log_comp, axis=1)))

    def _log_prior_and_grad(self, w, mu, tau, log_pi, z, P):
        K = self.K
        log_1mz = log_expit(np.log(K - 1 - np.arange(K - 1)) - w)
        prec = np.exp(-tau)
        dm = mu - self.m
        # Dirichlet, normal mean, inverse-gamma variance, then log-Jacobians
        lp = (self.lam - 1.0) * np.sum(log_pi)
        lp += np.sum(-0.5 * (tau - np.log(self.beta)) - 0.5 * self.beta * dm ** 2 * prec)
        lp += np.sum(-(self.b + 1.0) * tau - self.c * prec)
        lp += np.sum(tau)
        lp += np.sum(log_pi[:K - 1]) + np.sum(log_1mz)
        g_w = (self.lam - 1.0) * P.sum(axis=0) + P[:K - 1].sum(axis=0) - z
        g_mu = -self.beta * dm * prec
        g_tau = -0.5 + 0.5 * self.beta * dm ** 2 * prec - (self.b + 1.0) + self.c * prec + 1.0
        return float(lp), np.concatenate([g_w, g_mu, g_tau])

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        w, mu, tau, log_pi, z, P, prec, diff, log_comp = self._component_terms(theta)
        lp, _ = self._log_prior_and_grad(w, mu, tau, log_pi, z, P)
        return float(np.sum(logsumexp(log_comp, axis=1))) + lp

    def _scores(self, theta, hessians=False):
        """Per-datum scores ``S`` (N x D) and optionally Hessians (N x D x D)."""
        K, D = self.K, self.dim
        w, mu, tau, log_pi, z, P, prec, diff, log_comp = self._component_terms(theta)
        r = softmax(log_comp, axis=1)
        d_mu = diff * prec
        d_tau = -0.5 + 0.5 * diff ** 2 * prec
        # A[n, k] = gradient of the k-th log component term at datum n
        A = np.zeros((self.n, K, D))
        A[:, :, :K - 1] = P
        ks = np.arange(K)
        A[:, ks, K - 1 + ks] = d_mu
        A[:, ks, 2 * K - 1 + ks] = d_tau
        S = np.einsum("nk,nkd->nd", r, A)
        if not hessians:
            return S, None
        H = np.einsum("nk,nkd,nke->nde", r, A, A, optimize=True)
        H -= S[:, :, None] * S[:, None, :]
        # expected second derivatives of the component terms under r
        q = z * (1.0 - z)
        if K > 1:
            # Q[k] = diag(-q_j for j <= k)
            mask = (np.arange(K - 1)[None, :] <= ks[:, None]).astype(float)
            ww = -(r @ (mask * q))
            jw = np.arange(K - 1)
            H[:, jw, jw] += ww
        im, it = K - 1 + ks, 2 * K - 1 + ks
        H[:, im, im] += -r * prec
        cross = -r * diff * prec
        H[:, im, it] += cross
        H[:, it, im] += cross
        H[:, it, it] += -0.5 * r * diff ** 2 * prec
        return S, H

    def score_matrix(self, theta):
        S, _ = self._scores(np.asarray(theta, dtype=float))
        return S

    def grad_log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        w, mu, tau, log_pi, z, P, prec, diff, log_comp = self._component_terms(theta)
        S, _ = self._scores(theta)
        _, g_prior = self._log_prior_and_grad(w, mu, tau, log_pi, z, P)
        return S.sum(axis=0) + g_prior

    def _raw_fisher(self, S):
        s = S.sum(axis=0)
        return S.T @ S - np.outer(s, s) / self.n

    def metric(self, theta):
        S, _ = self._scores(np.asarray(theta, dtype=float))
        g = self._raw_fisher(S)
        ridge = self.regularization * np.mean(np.diag(g))
        return g + ridge * np.eye(self.dim)

    def metric_deriv(self, theta):
        S, H = self._scores(np.asarray(theta, dtype=float), hessians=True)
        s = S.sum(axis=0)
        h = H.sum(axis=0)
        T = np.einsum("nad,nb->dab", H, S, optimize=True)
        U = np.einsum("ad,b->dab", h, s) / self.n
        dg = T + T.transpose(0, 2, 1) - U - U.transpose(0, 2, 1)
        ridge = self.regularization * np.einsum("dii->d", dg) / self.dim
        return dg + ridge[:, None, None] * np.eye(self.dim)

    def initial_position(self):
        """Crude moment-based start: equal weights, means at quantiles."""
        K = self.K
        mu = np.quantile(self.x, (np.arange(K) + 0.5) / K)
        var = np.full(K, np.var(self.x) / K)
        return to_unconstrained(np.full(K, 1.0 / K), mu, var)
