import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmlmc.geometry import (
    LocalGeometry,
    NotPositiveDefinite,
    build_metric_bundle,
    bundle_from_metric,
    christoffel_first,
    christoffel_second,
    eta_vector,
    fd_metric_deriv,
    grad_phi,
    nu_vector,
    omega_matrix,
    omega_tilde_matrix,
)
from rmlmc.models import (
    GaussianMixtureModel,
    LogisticRegressionModel,
    gaussian_with_metric,
    standard_gaussian,
    synthesize_gmm,
    synthesize_logreg,
)

from support import banana_model, random_metric_model

finite = st.floats(-3, 3, allow_nan=False)


def square_metric():
    """1-D metric ``G(theta) = theta^2`` (positive away from zero)."""
    return gaussian_with_metric(lambda t: np.array([[t[0] ** 2]]),
                                lambda t: np.array([[[2 * t[0]]]]))


def fd_christoffel_second(model, theta, h=1e-5):
    dg = fd_metric_deriv(model, theta, h)
    g_inv = np.linalg.inv(model.metric(theta))
    lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(2, 1, 0) - dg)
    return np.einsum("kl,lij->kij", g_inv, lower)


# bundle -----------------------------------------------------------------

def test_banana_metric_at_origin():
    m = banana_model()
    b = build_metric_bundle(np.zeros(2), m)
    c = m.n / m.sigma_y ** 2
    np.testing.assert_allclose(b.g, np.diag([c + 1.0, 1.0]))
    np.testing.assert_allclose(b.log_det, np.log(c + 1.0))


def test_banana_fisher_matches_simulated_expected_information():
    m = banana_model()
    theta = np.array([0.2, 0.6])
    rng = np.random.default_rng(0)
    mu = theta[0] + theta[1] ** 2
    # expected outer product of the likelihood score under simulated data
    y = mu + m.sigma_y * rng.standard_normal((20_000, m.n))
    r = (y - mu).sum(axis=1) / m.sigma_y ** 2
    scores = np.column_stack([r, 2 * theta[1] * r])
    fisher = scores.T @ scores / scores.shape[0] + np.eye(2) / m.sigma_theta ** 2
    np.testing.assert_allclose(m.metric(theta), fisher, rtol=0.05)


def test_identity_metric_bundle():
    b = build_metric_bundle(np.array([0.3, -1.0]), standard_gaussian(2))
    np.testing.assert_array_equal(b.g, np.eye(2))
    np.testing.assert_array_equal(b.dg, 0.0)
    assert b.log_det == 0.0


def test_square_metric_bundle():
    b = build_metric_bundle(np.array([2.0]), square_metric())
    np.testing.assert_allclose(b.g, [[4.0]])
    np.testing.assert_allclose(b.g_inv, [[0.25]])
    assert b.log_det == pytest.approx(np.log(4.0))
    np.testing.assert_allclose(b.dg, [[[4.0]]])


@pytest.mark.parametrize("g", [np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[np.nan]]),
                               np.zeros((2, 2))])
def test_non_positive_definite_raises(g):
    with pytest.raises(NotPositiveDefinite):
        bundle_from_metric(np.zeros(g.shape[0]), g, np.zeros((g.shape[0],) * 3))


def test_inverse_and_log_det_match_numpy():
    m = random_metric_model()
    b = build_metric_bundle(np.array([0.4, -0.3, 1.1]), m)
    np.testing.assert_allclose(b.g_inv, np.linalg.inv(b.g), rtol=1e-12, atol=1e-14)
    assert b.log_det == pytest.approx(np.linalg.slogdet(b.g)[1], rel=1e-12)
    np.testing.assert_allclose(b.chol @ b.chol.T, b.g, rtol=1e-12)


# Christoffel symbols ----------------------------------------------------

def test_constant_metric_christoffels_vanish():
    b = build_metric_bundle(np.zeros(3), standard_gaussian(3))
    assert not christoffel_first(b).any()
    assert not christoffel_second(b).any()


def test_square_metric_christoffels():
    b = build_metric_bundle(np.array([2.0]), square_metric())
    assert christoffel_first(b)[0, 0, 0] == pytest.approx(2.0)
    assert christoffel_second(b)[0, 0, 0] == pytest.approx(0.5)


def test_banana_christoffel_second_matches_fd():
    m = banana_model()
    theta = np.array([0.0, 0.5])
    b = build_metric_bundle(theta, m)
    np.testing.assert_allclose(christoffel_second(b), fd_christoffel_second(m, theta),
                               atol=1e-5)


def test_first_kind_is_lowered_second_kind():
    m = random_metric_model()
    b = build_metric_bundle(np.array([0.5, 0.1, -0.8]), m)
    gt = christoffel_first(b)
    gamma = christoffel_second(b, gt)
    np.testing.assert_allclose(gt, np.einsum("kl,lij->kij", b.g, gamma), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 3, elements=finite))
def test_christoffel_lower_index_symmetry(theta):
    b = build_metric_bundle(theta, random_metric_model())
    gt, gamma = christoffel_first(b), christoffel_second(b)
    np.testing.assert_array_equal(gamma, gamma.transpose(0, 2, 1))
    np.testing.assert_array_equal(gt, gt.transpose(0, 2, 1))


# contractions -----------------------------------------------------------

def test_square_metric_contractions():
    geom = LocalGeometry(square_metric(), np.array([2.0]))
    b = geom.bundle
    assert nu_vector(b, np.array([1.0]))[0] == pytest.approx(0.25)
    v = np.array([3.0])
    assert eta_vector(geom.gamma, v)[0] == pytest.approx(4.5)
    assert omega_matrix(geom.gamma, v)[0, 0] == pytest.approx(1.5)
    assert omega_tilde_matrix(geom.gamma_tilde, v)[0, 0] == pytest.approx(6.0)


def test_zero_velocity_contractions_vanish():
    geom = LocalGeometry(random_metric_model(), np.array([0.2, 0.4, -0.1]))
    z = np.zeros(3)
    assert not nu_vector(geom.bundle, z).any()
    assert not eta_vector(geom.gamma, z).any()
    assert not omega_matrix(geom.gamma, z).any()
    assert not omega_tilde_matrix(geom.gamma_tilde, z).any()


def test_identity_metric_contractions_vanish():
    geom = LocalGeometry(standard_gaussian(2), np.array([0.5, 1.5]))
    v = np.array([1.0, -2.0])
    assert not nu_vector(geom.bundle, v).any()
    assert not eta_vector(geom.gamma, v).any()
    assert not omega_matrix(geom.gamma, v).any()
    assert not omega_tilde_matrix(geom.gamma_tilde, v).any()


@settings(max_examples=50, deadline=None)
@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))
def test_omega_contraction_identities(theta, v):
    geom = LocalGeometry(random_metric_model(), theta)
    om = omega_matrix(geom.gamma, v)
    np.testing.assert_allclose(om @ v, eta_vector(geom.gamma, v), atol=1e-12, rtol=1e-12)
    np.testing.assert_allclose(omega_tilde_matrix(geom.gamma_tilde, v), geom.bundle.g @ om,
                               atol=1e-10)


def test_nu_matches_derivative_of_inverse_form():
    # nu_i = -p^T d_i(G^-1) p, with d_i(G^-1) from central differences
    m = random_metric_model()
    theta = np.array([0.3, -0.6, 0.2])
    p = np.array([1.0, -0.5, 2.0])
    h = 1e-6
    expected = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        d_inv = (np.linalg.inv(m.metric(theta + e)) - np.linalg.inv(m.metric(theta - e))) / (2 * h)
        expected.append(-p @ d_inv @ p)
    np.testing.assert_allclose(nu_vector(build_metric_bundle(theta, m), p), expected, rtol=1e-6)


def _models():
    gmm = GaussianMixtureModel(synthesize_gmm("bimodal", 80, 0).y, 2)
    logreg = LogisticRegressionModel.from_dataset(synthesize_logreg(40, 2, 0, theta_scale=1.0))
    return [banana_model(), random_metric_model(), logreg, gmm]


@pytest.mark.parametrize("model", _models(), ids=["banana", "random", "logistic", "gmm"])
def test_triple_form_identity(model):
    rng = np.random.default_rng(1)
    for _ in range(10):
        theta = model.initial_position() + 0.3 * rng.standard_normal(model.dim)
        v = rng.standard_normal(model.dim)
        geom = LocalGeometry(model, theta)
        lhs = (v @ geom.gamma_tilde @ v) @ v
        rhs = 0.5 * np.einsum("kij,i,j,k->", geom.bundle.dg, v, v, v)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("model", _models(), ids=["banana", "random", "logistic", "gmm"])
def test_metric_deriv_matches_finite_differences(model):
    rng = np.random.default_rng(2)
    theta = model.initial_position() + 0.3 * rng.standard_normal(model.dim)
    dg = model.metric_deriv(theta)
    fd = fd_metric_deriv(model, theta, 1e-5)
    assert np.abs(dg - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())


def test_grad_phi_matches_finite_differences():
    m = random_metric_model()
    theta = np.array([0.1, 0.7, -0.4])
    geom = LocalGeometry(m, theta)

    def phi(t):
        return LocalGeometry(m, t).phi

    h = 1e-6
    fd = np.array([(phi(theta + e) - phi(theta - e)) / (2 * h) for e in h * np.eye(3)])
    np.testing.assert_allclose(grad_phi(geom.bundle, geom.grad_log_density), fd, rtol=1e-6)
    np.testing.assert_allclose(geom.natural_grad_phi, np.linalg.solve(geom.bundle.g, fd),
                               rtol=1e-6)


def test_local_geometry_is_lazy():
    calls = []
    m = standard_gaussian(2)
    original = m.metric
    m.metric = lambda t: calls.append(1) or original(t)
    geom = LocalGeometry(m, np.zeros(2))
    geom.grad_log_density
    assert not calls
    geom.gamma
    geom.bundle
    assert len(calls) == 1
