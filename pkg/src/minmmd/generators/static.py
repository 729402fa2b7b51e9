"""Generators without time dynamics: Gaussian location/scale, g-and-k, and
the stochastic volatility model."""

from __future__ import annotations

import numpy as np

from .. import latent
from .base import GeneratorModel, latent_values
from .normal import inv_norm_cdf

__all__ = ["GAndK", "GaussianLocation", "GaussianScale", "StochasticVolatility", "sv_simulate"]


class GaussianLocation(GeneratorModel):
    """``G(theta, u) = theta + sigma u`` with standard normal ``u`` in ``R^d``."""

    family = "gaussian-location"

    def __init__(self, d: int = 1, sigma: float = 1.0):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.d = self.param_dim = self.data_dim = int(d)
        self.sigma = float(sigma)

    def sample_latent(self, n, seed, stream=0):
        return latent.sample_standard_normal(n, self.d, seed, stream)

    def push_forward(self, theta, u):
        theta = self.check_domain(theta)
        return theta + self.sigma * latent_values(u)

    def jacobian(self, theta, u):
        self.check_domain(theta)
        n = latent_values(u).shape[0]
        return np.broadcast_to(np.eye(self.d), (n, self.d, self.d)).copy()

    def to_dict(self):
        return {"family": self.family, "d": self.d, "sigma": self.sigma}


class GaussianScale(GeneratorModel):
    """``G(theta, u) = exp(theta) u``, one log-scale shared by all coordinates."""

    family = "gaussian-scale"
    param_dim = 1

    def __init__(self, d: int = 1):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        self.d = self.data_dim = int(d)

    def sample_latent(self, n, seed, stream=0):
        return latent.sample_standard_normal(n, self.d, seed, stream)

    def push_forward(self, theta, u):
        theta = self.check_domain(theta)
        return np.exp(theta[0]) * latent_values(u)

    def jacobian(self, theta, u):
        return self.push_forward(theta, u)[:, :, None]

    def to_dict(self):
        return {"family": self.family, "d": self.d}


class GAndK(GeneratorModel):
    """g-and-k quantile function with parameters ``(a, b, c, k)``.

    ``G = a + b (1 + 0.8 tanh(c z / 2)) (1 + z^2)^k z`` with ``z`` the normal
    quantile of a uniform draw. The last parameter enters the exponent directly.
    """

    family = "g-and-k"
    param_dim = 4
    data_dim = 1
    skew_constant = 0.8

    def sample_latent(self, n, seed, stream=0):
        return latent.sample_uniform(n, seed, stream)

    def _parts(self, theta, u):
        theta = self.check_domain(theta)
        z = inv_norm_cdf(latent_values(u).reshape(-1))
        a, b, c, k = theta
        th = np.tanh(0.5 * c * z)
        skew = 1.0 + self.skew_constant * th
        logq = np.log1p(z * z)
        tail = np.exp(k * logq) * z
        return theta, z, th, skew, logq, tail

    def push_forward(self, theta, u):
        (a, b, _, _), _, _, skew, _, tail = self._parts(theta, u)
        return (a + b * skew * tail)[:, None]

    def jacobian(self, theta, u):
        (_, b, _, _), z, th, skew, logq, tail = self._parts(theta, u)
        J = np.empty((z.size, 1, 4))
        J[:, 0, 0] = 1.0
        J[:, 0, 1] = skew * tail
        J[:, 0, 2] = b * self.skew_constant * 0.5 * z * (1.0 - th * th) * tail
        J[:, 0, 3] = b * skew * tail * logq
        return J


def sv_simulate(theta, u, T: int | None = None, with_derivative: bool = True):
    """Simulate the stochastic volatility model and its parameter derivatives.

    Parameters
    ----------
    theta : array_like, shape (3,)
        ``(log((1+phi)/(1-phi)), log kappa, log sigma^2)``.
    u : LatentDraws or ndarray, shape (n, 2T)
        Standard normals. Columns ``0..T-1`` drive the observation noise, column
        ``T`` the stationary initial log-volatility and columns ``T+1..2T-1`` the
        log-volatility innovations.
    T : int, optional
        Series length, inferred from ``u`` when omitted.

    Returns
    -------
    y : ndarray, shape (n, T)
    dy : ndarray, shape (n, T, 3)
        Only when ``with_derivative`` is true.
    """
    U = latent_values(u)
    if U.ndim == 1:
        U = U[None, :]
    if T is None:
        T = U.shape[1] // 2
    if T < 1 or U.shape[1] != 2 * T:
        raise ValueError(f"latent rows must have length 2T={2 * T}, got {U.shape[1]}")
    t1, t2, t3 = np.asarray(theta, dtype=float)
    phi = np.tanh(0.5 * t1)
    dphi = 0.5 * (1.0 - phi * phi)
    sigma = np.exp(0.5 * t3)
    eps = U[:, :T]
    eta = sigma * U[:, T + 1:]

    n = U.shape[0]
    h = np.empty((n, T))
    h[:, 0] = sigma * np.cosh(0.5 * t1) * U[:, T]
    for t in range(1, T):
        h[:, t] = phi * h[:, t - 1] + eta[:, t - 1]
    y = eps * np.exp(t2 + 0.5 * h)
    if not with_derivative:
        return y

    dh1 = np.empty_like(h)
    dh3 = np.empty_like(h)
    dh1[:, 0] = 0.5 * phi * h[:, 0]
    dh3[:, 0] = 0.5 * h[:, 0]
    for t in range(1, T):
        dh1[:, t] = dphi * h[:, t - 1] + phi * dh1[:, t - 1]
        dh3[:, t] = phi * dh3[:, t - 1] + 0.5 * eta[:, t - 1]
    dy = np.stack([0.5 * y * dh1, y, 0.5 * y * dh3], axis=-1)
    return y, dy


class StochasticVolatility(GeneratorModel):
    """Log-volatility AR(1) model observed through ``y_t = eps_t kappa e^{h_t/2}``."""

    family = "stoch-vol"
    param_dim = 3

    def __init__(self, T: int = 20):
        if T < 1:
            raise ValueError("series length must be at least 1")
        self.T = self.data_dim = int(T)

    def sample_latent(self, n, seed, stream=0):
        return latent.sample_standard_normal(n, 2 * self.T, seed, stream)

    def push_forward(self, theta, u):
        return sv_simulate(self.check_domain(theta), u, self.T, with_derivative=False)

    def jacobian(self, theta, u):
        return sv_simulate(self.check_domain(theta), u, self.T)[1]

    def forward_and_jacobian(self, theta, u):
        return sv_simulate(self.check_domain(theta), u, self.T)

    def to_dict(self):
        return {"family": self.family, "T": self.T}

