"""Shared oracles and fixtures-as-functions for the test suite."""

import numpy as np

from rmlmc.geometry import LocalGeometry
from rmlmc.integrators import MOMENTUM, VELOCITY, IntegratorConfig, PhasePoint
from rmlmc.models import BananaModel, RandomMetricModel, synthesize_banana
from rmlmc.samplers import refresh_momentum, refresh_velocity


def banana_model(n=100, seed=0):
    return BananaModel(synthesize_banana(n, seed).y)


def random_metric_model(dim=3, seed=0):
    return RandomMetricModel(dim=dim, seed=seed)


def banana_posterior_draws(model, size, rng):
    """Exact draws from the banana posterior.

    ``theta_1 | theta_2`` is Gaussian; the ``theta_2`` marginal is sampled by
    inverse CDF on a fine grid.
    """
    c = model.n / model.sigma_y ** 2
    p = 1.0 / model.sigma_theta ** 2
    ybar = model._sum_y / model.n
    grid = np.linspace(-6.0, 6.0, 200_001) * model.sigma_theta
    # integrate theta_1 out analytically: N(ybar - t^2 | 0, 1/c + 1/p) times the prior on t
    s2 = 1.0 / c + 1.0 / p
    log_m = -0.5 * p * grid ** 2 - 0.5 * (ybar - grid ** 2) ** 2 / s2
    w = np.exp(log_m - log_m.max())
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    t2 = np.interp(rng.random(size), cdf, grid)
    mean1 = c * (ybar - t2 ** 2) / (c + p)
    t1 = mean1 + rng.standard_normal(size) / np.sqrt(c + p)
    return np.column_stack([t1, t2])


def random_position(model, rng):
    if isinstance(model, BananaModel):
        return banana_posterior_draws(model, 1, rng)[0]
    return 0.7 * rng.standard_normal(model.dim)


def random_state(model, rng, kind):
    """Position plus an auxiliary variable drawn from its conditional."""
    theta = random_position(model, rng)
    bundle = LocalGeometry(model, theta).bundle
    aux = refresh_momentum(bundle, rng) if kind == MOMENTUM else refresh_velocity(bundle, rng)
    return PhasePoint(theta, aux, kind)


def flat_map(step, model, config, kind):
    """The one-step map as a function of the stacked vector ``[theta, aux]``."""

    def f(x):
        d = x.size // 2
        res = step(model, PhasePoint(x[:d], x[d:], kind), config)
        return np.concatenate([res.theta, res.aux])

    return f


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of ``f`` at ``x``."""
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def config(eps, n_steps=1, **kw):
    return IntegratorConfig(eps, n_steps, **kw)



# one line per acceptance check, echoed in the terminal summary by conftest.py
ACCEPTANCE_RESULTS = []


def record(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}"
    print(line)
    ACCEPTANCE_RESULTS.append((number, line))
    assert ok, line
