import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from scipy.special import expit

from rmlmc.geometry import fd_metric_deriv
from rmlmc.models import (
    BENCHMARK_DATASETS,
    MIXTURE_DENSITIES,
    BananaModel,
    DimensionMismatch,
    GaussianMixtureModel,
    LogisticRegressionModel,
    ModelError,
    ParseError,
    fetch_instructions,
    from_unconstrained,
    load_dataset,
    synthesize_banana,
    synthesize_gmm,
    synthesize_logreg,
    to_unconstrained,
)
from rmlmc.models.mixture import inverse_stick_breaking, stick_breaking

from support import banana_model, random_metric_model


def fd_grad(f, x, h=1e-6):
    return np.array([(f(x + e) - f(x - e)) / (2 * h) for e in h * np.eye(x.size)])


def small_logreg(n=20, dim=2, seed=0):
    return LogisticRegressionModel.from_dataset(synthesize_logreg(n, dim, seed, theta_scale=1.0))


def small_gmm(K=2, seed=0):
    return GaussianMixtureModel(synthesize_gmm("bimodal", 60, seed).y, K)


MODELS = {
    "banana": banana_model,
    "random": random_metric_model,
    "logistic": small_logreg,
    "gmm": small_gmm,
    "gmm3": lambda: small_gmm(3),
}


def scale_for(model):
    return 0.3 if isinstance(model, GaussianMixtureModel) else 1.0


# generic model contract -----------------------------------------------------

@pytest.mark.parametrize("name", sorted(MODELS))
def test_gradient_matches_finite_differences(name):
    model = MODELS[name]()
    rng = np.random.default_rng(3)
    for _ in range(20):
        theta = model.initial_position() + scale_for(model) * rng.standard_normal(model.dim)
        g = model.grad_log_density(theta)
        fd = fd_grad(model.log_density, theta)
        assert np.abs(g - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())


@pytest.mark.parametrize("name", sorted(MODELS))
def test_metric_deriv_matches_finite_differences(name):
    model = MODELS[name]()
    rng = np.random.default_rng(4)
    for _ in range(5):
        theta = model.initial_position() + scale_for(model) * rng.standard_normal(model.dim)
        fd = fd_metric_deriv(model, theta, 1e-5)
        dg = model.metric_deriv(theta)
        assert np.abs(dg - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())


@pytest.mark.parametrize("name", sorted(MODELS))
def test_metric_is_symmetric_positive_definite(name):
    model = MODELS[name]()
    rng = np.random.default_rng(5)
    for _ in range(10):
        theta = model.initial_position() + 2 * scale_for(model) * rng.standard_normal(model.dim)
        g = model.metric(theta)
        np.testing.assert_allclose(g, g.T, rtol=1e-12, atol=1e-12)
        assert np.linalg.eigvalsh(g).min() > 0


def test_check_position_rejects_bad_input():
    m = banana_model()
    with pytest.raises(ModelError):
        m.check_position(np.zeros(3))
    with pytest.raises(ModelError):
        m.check_position(np.array([np.nan, 0.0]))


# logistic regression --------------------------------------------------------

def test_logistic_density_at_zero():
    m = small_logreg(n=30)
    assert m.log_density(np.zeros(m.dim)) == pytest.approx(-30 * np.log(2))


def test_logistic_single_datum():
    m = LogisticRegressionModel(np.array([[1.0]]), np.array([1.0]), alpha=1.0)
    assert m.log_density(np.zeros(1)) == pytest.approx(-np.log(2))


def test_logistic_metric_at_zero_and_saturation():
    m = small_logreg()
    X = m.X
    np.testing.assert_allclose(m.metric(np.zeros(m.dim)), 0.25 * X.T @ X + np.eye(m.dim) / m.alpha)
    np.testing.assert_allclose(m.metric(np.full(m.dim, 1e3)), np.eye(m.dim) / m.alpha, atol=1e-8)


def test_logistic_metric_deriv_vanishes_at_zero():
    m = small_logreg()
    np.testing.assert_allclose(m.metric_deriv(np.zeros(m.dim)), 0.0, atol=1e-15)


def test_logistic_metric_deriv_one_dimensional_closed_form():
    # one datum x, one coefficient: dG/dtheta = x^3 s (1 - s) (1 - 2 s)
    x, theta = 1.7, 0.4
    m = LogisticRegressionModel(np.array([[x]]), np.array([0.0]))
    s = expit(x * theta)
    assert m.metric_deriv(np.array([theta]))[0, 0, 0] == pytest.approx(
        x ** 3 * s * (1 - s) * (1 - 2 * s))


def test_logistic_metric_is_expected_information():
    rng = np.random.default_rng(6)
    m = LogisticRegressionModel(rng.standard_normal((20, 3)), np.zeros(20))
    theta = rng.standard_normal(3)
    p = expit(m.X @ theta)
    y = (rng.random((100_000, 20)) < p).astype(float)
    scores = (y - p) @ m.X
    fisher = scores.T @ scores / y.shape[0] + np.eye(3) / m.alpha
    np.testing.assert_allclose(m.metric(theta), fisher, rtol=0.03, atol=0.02)


def test_logistic_rejects_bad_labels():
    with pytest.raises(ModelError):
        LogisticRegressionModel(np.ones((2, 1)), np.array([0.0, 2.0]))


# banana ------------------------------------------------------------------

def test_banana_metric_on_axis():
    m = banana_model()
    c = m.n / m.sigma_y ** 2
    np.testing.assert_allclose(m.metric(np.array([0.7, 0.0])), np.diag([c + 1.0, 1.0]))


def test_banana_gradient_at_reference_point():
    m = banana_model()
    theta = np.array([0.3, -0.7])
    np.testing.assert_allclose(m.grad_log_density(theta), fd_grad(m.log_density, theta),
                               rtol=1e-6)


def test_banana_generator_mean():
    d = synthesize_banana(100, seed=0)
    assert d.n == 100 and d.X.shape == (100, 0)
    assert abs(d.y.mean() - 1.0) < 3 * 2 / np.sqrt(100)


def test_banana_density_matches_direct_sum():
    d = synthesize_banana(50, seed=1)
    m = BananaModel(d.y)
    theta = np.array([0.4, 0.9])
    mu = theta[0] + theta[1] ** 2
    direct = -np.sum((d.y - mu) ** 2) / (2 * 4.0) - theta @ theta / 2
    assert m.log_density(theta) == pytest.approx(direct, rel=1e-12)


# mixture -----------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 5), elements=st.floats(-30, 30)))
def test_stick_breaking_lands_on_simplex(w):
    K = w.size + 1
    log_pi, z = stick_breaking(w, K)
    pi = np.exp(log_pi)
    assert np.all(pi >= 0)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all((z >= 0) & (z <= 1))


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 5), elements=st.floats(-5, 5)))
def test_stick_breaking_round_trip(w):
    pi = np.exp(stick_breaking(w, w.size + 1)[0])
    np.testing.assert_allclose(inverse_stick_breaking(pi), w, atol=1e-8)


def test_uniform_weights_at_zero_logits():
    np.testing.assert_allclose(np.exp(stick_breaking(np.zeros(3), 4)[0]), 0.25)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_unconstrained_round_trip(K, seed):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(K))
    mu = rng.standard_normal(K)
    var = rng.gamma(2.0, size=K)
    back = from_unconstrained(to_unconstrained(pi, mu, var), K)
    for a, b in zip(back, (pi, mu, var)):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
    assert np.all(back[2] > 0)


def test_mixture_dimension():
    assert small_gmm(2).dim == 5
    assert small_gmm(3).dim == 8


def test_mixture_density_includes_change_of_variables():
    # log density = log likelihood + log prior(pi, mu, var) + log|d(pi_{1:K-1}, mu, var)/d theta|
    # up to an additive constant
    m = small_gmm(3)
    K = m.K

    def constrained(t):
        p, u, s = from_unconstrained(t, K)
        return np.concatenate([p[:K - 1], u, s])

    def reference(theta):
        pi, mu, var = from_unconstrained(theta, K)
        loglik = np.sum(np.log(np.exp(stats.norm.logpdf(m.x[:, None], mu, np.sqrt(var))) @ pi))
        prior = (stats.dirichlet.logpdf(pi, np.full(K, m.lam))
                 + np.sum(stats.norm.logpdf(mu, m.m, np.sqrt(var / m.beta)))
                 + np.sum(stats.invgamma.logpdf(var, m.b, scale=m.c)))
        jac = np.column_stack([(constrained(theta + e) - constrained(theta - e)) / 2e-6
                               for e in 1e-6 * np.eye(m.dim)])
        return loglik + prior + np.linalg.slogdet(jac)[1]

    rng = np.random.default_rng(7)
    pts = [m.initial_position() + 0.3 * rng.standard_normal(m.dim) for _ in range(4)]
    diffs = [m.log_density(p) - reference(p) for p in pts]
    np.testing.assert_allclose(diffs, diffs[0], atol=1e-7)


def test_single_component_matches_normal_inverse_gamma():
    x = synthesize_gmm("skewed", 40, 3).y
    m = GaussianMixtureModel(x, 1)
    n, xbar = x.size, x.mean()
    # conjugate posterior parameters
    beta_n = m.beta + n
    m_n = (m.beta * m.m + n * xbar) / beta_n
    a_n = m.b + n / 2
    c_n = m.c + 0.5 * np.sum((x - xbar) ** 2) + 0.5 * m.beta * n * (xbar - m.m) ** 2 / beta_n

    def nig_unconstrained(theta):
        mu, tau = theta
        var = np.exp(tau)
        return (stats.norm.logpdf(mu, m_n, np.sqrt(var / beta_n))
                + stats.invgamma.logpdf(var, a_n, scale=c_n) + tau)

    rng = np.random.default_rng(8)
    pts = [m.initial_position() + 0.3 * rng.standard_normal(2) for _ in range(5)]
    diffs = [m.log_density(p) - nig_unconstrained(p) for p in pts]
    np.testing.assert_allclose(diffs, diffs[0], atol=1e-9)


def test_score_columns_sum_to_likelihood_gradient():
    m = small_gmm(3)
    theta = m.initial_position() + 0.1
    S = m.score_matrix(theta)
    np.testing.assert_allclose(S.sum(axis=0), fd_grad(m.log_likelihood, theta), rtol=1e-6,
                               atol=1e-6)


def test_mixture_metric_is_regularised_empirical_fisher():
    m = small_gmm(2)
    theta = m.initial_position()
    S = m.score_matrix(theta)
    s = S.sum(axis=0)
    raw = S.T @ S - np.outer(s, s) / m.n
    expected = raw + 1e-6 * np.mean(np.diag(raw)) * np.eye(m.dim)
    np.testing.assert_allclose(m.metric(theta), expected, rtol=1e-12)


def test_mixture_rejects_bad_arguments():
    with pytest.raises(ModelError):
        GaussianMixtureModel([1.0], 2)
    with pytest.raises(ModelError):
        GaussianMixtureModel([1.0, 2.0], 0)


# data --------------------------------------------------------------------

def test_synthesize_logreg_shape():
    d = synthesize_logreg(200, 10, seed=1)
    assert d.X.shape == (200, 11)
    np.testing.assert_array_equal(d.X[:, 0], 1.0)
    assert set(np.unique(d.y)) <= {0.0, 1.0}


def test_generators_are_deterministic():
    a, b = synthesize_logreg(50, 3, seed=9), synthesize_logreg(50, 3, seed=9)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(synthesize_gmm("claw", 30, 2).y, synthesize_gmm("claw", 30, 2).y)


@pytest.mark.parametrize("name", ["trimodal", "claw", "bimodal"])
def test_mixture_generators_follow_their_density(name):
    comps = MIXTURE_DENSITIES[name]

    def cdf(x):
        return sum(w * stats.norm.cdf(x, mu, sd) for w, mu, sd in comps)

    y = synthesize_gmm(name, 20_000, seed=4).y
    assert stats.kstest(y, cdf).pvalue > 0.001


def test_claw_density_definition():
    comps = MIXTURE_DENSITIES["claw"]
    assert comps[0] == (0.5, 0.0, 1.0)
    assert [c[1] for c in comps[1:]] == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert all(c[0] == 0.1 and c[2] == 0.1 for c in comps[1:])


def test_load_classification_csv(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b,label\n1,10,2\n2,20,4\n3,60,2\n")
    d = load_dataset(f)
    assert d.X.shape == (3, 3)
    np.testing.assert_array_equal(d.y, [0, 1, 0])
    np.testing.assert_allclose(d.X[:, 1:].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(d.X[:, 1:].std(axis=0), 1.0)


def test_load_observations_csv(tmp_path):
    f = tmp_path / "y.csv"
    f.write_text("y\n0.5\n1.5\n")
    d = load_dataset(f, "observations")
    np.testing.assert_array_equal(d.y, [0.5, 1.5])


@pytest.mark.parametrize("content,error", [
    ("", ParseError),
    ("a,b\n", ParseError),
    ("a,b\n1,2,3\n", DimensionMismatch),
    ("a,b\n1,x\n", ParseError),
    ("a,b\n1,1\n2,2\n3,3\n", ParseError),
])
def test_load_rejects_malformed_files(tmp_path, content, error):
    f = tmp_path / "bad.csv"
    f.write_text(content)
    with pytest.raises(error):
        load_dataset(f)


def test_benchmark_registry_has_fetch_instructions():
    assert BENCHMARK_DATASETS["ripley"]["n"] == 250
    assert "data/ripley.csv" in fetch_instructions("ripley")
