import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from minmmd import latent
from minmmd.generators import GAndK, GaussianLocation, GaussianScale, StochasticVolatility
from minmmd.kernels import KernelSpec, evaluate
from minmmd.mmd import (
    BLOCK,
    SingularMetricError,
    fd_gradient,
    godambe_mc,
    grad_estimate,
    metric_tensor,
    mmd2_uu,
    mmd2_vv,
)

RBF = KernelSpec("gaussian-rbf", 1.0)
DENSITY = KernelSpec("gaussian-density", 1.0)


def brute_uu(spec, X, Y):
    n, m = len(X), len(Y)
    sxx = sum(evaluate(spec, X[i], X[j]) for i in range(n) for j in range(n) if i != j)
    syy = sum(evaluate(spec, Y[i], Y[j]) for i in range(m) for j in range(m) if i != j)
    sxy = sum(evaluate(spec, x, y) for x in X for y in Y)
    return sxx / (n * (n - 1)) - 2 * sxy / (n * m) + syy / (m * (m - 1))


def brute_metric(spec, X, J):
    from minmmd.kernels import grad12

    n = len(X)
    g = sum(J[i].T @ grad12(spec, X[i], X[j]) @ J[j] for i in range(n) for j in range(n) if i != j)
    return g / (n * (n - 1))


def test_uu_identical_pairs_is_zero():
    X = np.array([[0.4], [0.4]])
    assert mmd2_uu(RBF, X, X) == 0.0


def test_uu_four_point_enumeration():
    X, Y = np.array([[0.0], [1.0]]), np.array([[2.0], [3.0]])
    k = lambda a, b: math.exp(-0.5 * (a - b) ** 2)
    expected = k(0, 1) - 2 * (k(0, 2) + k(0, 3) + k(1, 2) + k(1, 3)) / 4 + k(2, 3)
    assert mmd2_uu(RBF, X, Y) == pytest.approx(expected, rel=1e-14)


def test_vv_two_points():
    assert mmd2_vv(RBF, [[0.0]], [[1.0]]) == pytest.approx(2 - 2 * math.exp(-0.5))


def test_vv_same_sample_is_zero(rng):
    X = rng.standard_normal((30, 2))
    assert mmd2_vv(RBF, X, X) == pytest.approx(0.0, abs=1e-15)


def test_sample_size_errors():
    with pytest.raises(ValueError):
        mmd2_uu(RBF, [[0.0]], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        mmd2_vv(RBF, np.empty((0, 1)), [[1.0]])
    with pytest.raises(ValueError):
        mmd2_uu(RBF, np.zeros((3, 2)), np.zeros((3, 1)))


@settings(max_examples=25)
@given(X=arrays(float, (7, 2), elements=st.floats(-3, 3)), Y=arrays(float, (5, 2), elements=st.floats(-3, 3)))
def test_uu_matches_brute_force(X, Y):
    for spec in (RBF, KernelSpec("imq", 0.7), KernelSpec.mixture([0.5, 2.0])):
        assert mmd2_uu(spec, X, Y) == pytest.approx(brute_uu(spec, X, Y), rel=1e-10, abs=1e-12)


@settings(max_examples=25)
@given(X=arrays(float, (6, 2), elements=st.floats(-3, 3)), Y=arrays(float, (4, 2), elements=st.floats(-3, 3)))
def test_vv_non_negative_and_close_to_uu(X, Y):
    vv = mmd2_vv(RBF, X, Y)
    assert vv >= -1e-12
    # both diagonals differ by at most 2 (1/n + 1/m) sup k
    assert abs(mmd2_uu(RBF, X, Y) - vv) <= 2 * (1 / 6 + 1 / 4) * 1.0 + 1e-12


def test_blocking_crosses_block_boundary(rng):
    X = rng.standard_normal((BLOCK + 37, 1))
    Y = rng.standard_normal((BLOCK + 3, 1)) + 0.5
    K = lambda A, B: np.exp(-0.5 * (A - B.T) ** 2)
    n, m = len(X), len(Y)
    expected = ((K(X, X).sum() - n) / (n * (n - 1)) - 2 * K(X, Y).mean() + (K(Y, Y).sum() - m) / (m * (m - 1)))
    assert mmd2_uu(RBF, X, Y) == pytest.approx(expected, rel=1e-12)


def test_unbiased_against_gaussian_closed_form():
    oracle = 2 * (2 * math.pi * 3) ** -0.5 * (1 - math.exp(-1 / 6))
    vals = []
    for r in range(2000):
        g = latent.generator(r, 0)
        vals.append(mmd2_uu(DENSITY, g.standard_normal((50, 1)), 1 + g.standard_normal((50, 1))))
    vals = np.array(vals)
    assert abs(vals.mean() - oracle) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_gradient_zero_when_data_equal_simulations():
    m = GaussianLocation(d=2)
    u = m.sample_latent(40, 0)
    theta = np.array([0.3, -0.2])
    Y = m.push_forward(theta, u)
    np.testing.assert_allclose(grad_estimate(RBF, m, theta, u, Y).value, 0.0, atol=1e-15)


@pytest.mark.parametrize("model,theta", [
    (GaussianLocation(d=2), [0.1, -0.3]),
    (GaussianScale(d=2), [0.2]),
    (GAndK(), [3.0, 1.0, 1.0, -math.log(2)]),
    (StochasticVolatility(T=5), [1.0, 0.0, -1.0]),
])
@pytest.mark.parametrize("spec", [RBF, DENSITY, KernelSpec("imq", 1.5), KernelSpec("matern-3/2", 2.0)])
def test_gradient_matches_fd_of_loss(model, theta, spec):
    u = model.sample_latent(30, 1)
    Y = model.simulate(np.asarray(theta) * 1.1 + 0.05, 25, 2)
    est = grad_estimate(spec, model, theta, u, Y)
    fd = fd_gradient(spec, model, theta, u, Y)
    assert est.n == 30 and est.m == 25
    assert np.linalg.norm(est.value - fd) / np.linalg.norm(fd) < 1e-5


def test_gradient_mean_zero_at_truth():
    m = GaussianLocation()
    reps = np.array([grad_estimate(DENSITY, m, [0.0], m.sample_latent(20, r, 0), m.simulate([0.0], 20, r, 1)).value[0]
                     for r in range(1000)])
    assert abs(reps.mean()) < 4 * reps.std(ddof=1) / math.sqrt(reps.size)


def test_matern_half_rejected_for_gradients():
    m = GaussianLocation()
    with pytest.raises(ValueError):
        grad_estimate(KernelSpec("matern-1/2", 1.0), m, [0.0], m.sample_latent(5, 0), [[0.0], [1.0]])


@settings(max_examples=15)
@given(seed=st.integers(0, 10**6))
def test_metric_matches_brute_force(seed):
    m = GAndK()
    u = m.sample_latent(12, seed)
    theta = [1.0, 1.2, 0.5, 0.1]
    X, J = m.forward_and_jacobian(theta, u)
    g = metric_tensor(RBF, m, theta, u).value
    np.testing.assert_allclose(g, brute_metric(RBF, X, J), rtol=1e-9, atol=1e-14)
    # the off-diagonal average is only PSD in expectation, so check symmetry alone
    assert np.array_equal(g, g.T)


def test_metric_degenerate_generator_is_zero():
    class Flat(GaussianScale):
        def jacobian(self, theta, u):
            return np.zeros((len(u), self.d, 1))

    m = Flat(d=1)
    assert np.array_equal(metric_tensor(RBF, m, [0.0], m.sample_latent(10, 0)).value, np.zeros((1, 1)))


def test_metric_location_closed_form():
    m = GaussianLocation()
    g = metric_tensor(DENSITY, m, [0.0], m.sample_latent(4000, 5)).value[0, 0]
    assert g == pytest.approx((2 * math.pi) ** -0.5 * 3**-1.5, rel=0.05)


def test_godambe_location():
    est = godambe_mc(DENSITY, GaussianLocation(), [0.0], 2000, 2000, seed=0)
    assert abs(est.mbar[0]) < 5e-3
    assert est.c[0, 0] == pytest.approx(27 * 8**-1.5, rel=0.1)
    np.testing.assert_allclose(est.c, est.c.T)


def test_godambe_amplitude_free():
    a = godambe_mc(KernelSpec.mixture([1.0, 2.0], [1.0, 1.0]), GaussianLocation(), [0.0], 300, 300, seed=1)
    b = godambe_mc(KernelSpec.mixture([1.0, 2.0], [10.0, 10.0]), GaussianLocation(), [0.0], 300, 300, seed=1)
    assert abs(b.c[0, 0] / a.c[0, 0] - 1) < 1e-8


def test_godambe_singular_metric():
    class Flat(GaussianScale):
        def jacobian(self, theta, u):
            return np.zeros((len(u), self.d, 1))

    with pytest.raises(SingularMetricError) as info:
        godambe_mc(RBF, Flat(), [0.0], 10, 10, seed=0)
    assert info.value.condition > 1e12 or not np.isfinite(info.value.condition)
