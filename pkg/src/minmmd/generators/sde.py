"""Diffusion models discretised with Euler-Maruyama.

Each simulator carries the pathwise sensitivity of the state with respect to
the parameters alongside the state itself, using the exact derivative of the
discrete Euler-Maruyama map. Both processes are driven by the same Brownian
increments, so the sensitivities match finite differences of the simulated
paths under common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import latent
from .base import DomainError, GeneratorModel, latent_values

__all__ = [
    "CoarseSDE",
    "LotkaVolterra",
    "MultiscaleSDE",
    "PathWithSensitivity",
    "coarse_simulate",
    "lv_simulate",
    "multiscale_simulate",
]

STATE_FLOOR = 1e-8


@dataclass
class PathWithSensitivity:
    """Simulated paths and their parameter sensitivities on a shared grid.

    Attributes
    ----------
    times : ndarray, shape (K,)
    states : ndarray, shape (n, K, dx)
    sensitivities : ndarray, shape (n, K, dx, p)
    dt : float
    events : list of (path, time, component)
        Points where a state was floored to keep square roots real.
    """

    times: np.ndarray
    states: np.ndarray
    sensitivities: np.ndarray
    dt: float
    events: list = field(default_factory=list)

    def at(self, obs_times) -> tuple[np.ndarray, np.ndarray]:
        idx = _grid_indices(self.times, obs_times)
        return self.states[:, idx], self.sensitivities[:, idx]


def _grid_indices(times: np.ndarray, obs_times) -> np.ndarray:
    obs = np.asarray(obs_times, dtype=float)
    idx = np.searchsorted(times, obs - 1e-9 * max(1.0, float(times[-1])))
    idx = np.minimum(idx, times.size - 1)
    if not np.allclose(times[idx], obs, rtol=0, atol=1e-9 * max(1.0, float(times[-1]))):
        raise ValueError("observation times are not on the simulation grid")
    return idx


def _step_count(horizon: float, dt: float, obs_times) -> int:
    steps = int(round(horizon / dt))
    if steps < 1 or not math.isclose(steps * dt, horizon, rel_tol=1e-9):
        raise ValueError(f"dt={dt} does not divide the horizon {horizon}")
    pos = np.asarray(obs_times, dtype=float) / dt
    if np.any(np.abs(pos - np.round(pos)) > 1e-6) or np.any(pos > steps + 1e-6) or np.any(pos <= 0):
        raise ValueError("observation times must be positive multiples of dt within the horizon")
    return steps


def _increments(W, dims: int, steps: int) -> np.ndarray:
    dW = latent_values(W)
    if dW.ndim == 2 and dims == 1:
        dW = dW[:, :, None]
    if dW.ndim != 3 or dW.shape[1] != steps or dW.shape[2] != dims:
        raise ValueError(f"expected Brownian increments shaped (paths, {steps}, "
                         f"{dims}), got {dW.shape}")
    return dW


def _default_obs(horizon: float, count: int = 10) -> tuple[float, ...]:
    return tuple(horizon * (i + 1) / count for i in range(count))


# -- Lotka-Volterra -----------------------------------------------------------


def lv_simulate(theta2, W, rates=(5.0, 0.025, 6.0), dt: float = 1e-3,
                horizon: float = 1.0) -> PathWithSensitivity:
    """Predator-prey chemical Langevin equation from initial populations ``theta2``.

    The drift is ``(c1 x - c2 x y, c2 x y - c3 y)`` and the three reaction
    channels diffuse with amplitudes ``sqrt(c1 x)``, ``sqrt(c2 x y)`` and
    ``sqrt(c3 y)``. Sensitivities are taken with respect to the initial
    condition, so they start at the identity.

    Parameters
    ----------
    theta2 : array_like, shape (2,)
        Positive initial populations.
    W : LatentDraws or ndarray, shape (paths, steps, 3)
        Brownian increments with variance ``dt``.
    rates : tuple of float
        ``(c1, c2, c3)``.
    """
    x0 = np.asarray(theta2, dtype=float).reshape(-1)
    if x0.shape != (2,) or not np.all(x0 > 0) or not np.all(np.isfinite(x0)):
        raise DomainError(f"initial populations must be two positive numbers, got {x0}")
    c1, c2, c3 = (float(c) for c in rates)
    steps = _step_count(horizon, dt, [horizon])
    dW = _increments(W, 3, steps)
    n = dW.shape[0]
    r1, r2, r3 = math.sqrt(c1), math.sqrt(c2), math.sqrt(c3)

    X = np.empty((n, steps + 1, 2))
    J = np.empty((n, steps + 1, 2, 2))
    X[:, 0] = x0
    J[:, 0] = np.eye(2)
    events = []
    M = np.empty((n, 2, 2))
    for k in range(steps):
        x, y = X[:, k, 0], X[:, k, 1]
        w1, w2, w3 = dW[:, k, 0], dW[:, k, 1], dW[:, k, 2]
        sx, sy = np.sqrt(x), np.sqrt(y)
        sxy = sx * sy
        X[:, k + 1, 0] = x + (c1 * x - c2 * x * y) * dt + r1 * sx * w1 - r2 * sxy * w2
        X[:, k + 1, 1] = y + (c2 * x * y - c3 * y) * dt + r2 * sxy * w2 - r3 * sy * w3

        # derivative of the one-step map with respect to the current state
        a = 0.5 * r2 * (sy / sx) * w2
        b = 0.5 * r2 * (sx / sy) * w2
        M[:, 0, 0] = 1.0 + (c1 - c2 * y) * dt + 0.5 * r1 / sx * w1 - a
        M[:, 0, 1] = -c2 * x * dt - b
        M[:, 1, 0] = c2 * y * dt + a
        M[:, 1, 1] = 1.0 + (c2 * x - c3) * dt + b - 0.5 * r3 / sy * w3
        J[:, k + 1] = M @ J[:, k]

        low = X[:, k + 1] < STATE_FLOOR
        if low.any():
            t = (k + 1) * dt
            for path, comp in zip(*np.nonzero(low)):
                events.append((int(path), t, int(comp)))
            X[:, k + 1][low] = STATE_FLOOR
            J[:, k + 1][low] = 0.0
    times = np.arange(steps + 1) * dt
    return PathWithSensitivity(times, X, J, dt, events)


class LotkaVolterra(GeneratorModel):
    """Predator-prey diffusion with unknown initial populations.

    Observations are both populations at ``obs_times``, flattened as
    ``[x(t1), y(t1), x(t2), y(t2), ...]``.
    """

    family = "lotka-volterra"
    param_dim = 2

    def __init__(self, rates=(5.0, 0.025, 6.0), dt: float = 1e-3, horizon: float = 1.0,
                 obs_times=None):
        self.rates = tuple(float(c) for c in rates)
        if len(self.rates) != 3 or min(self.rates) <= 0:
            raise ValueError("rates must be three positive numbers")
        self.dt = float(dt)
        self.horizon = float(horizon)
        self.obs_times = tuple(obs_times) if obs_times is not None else _default_obs(self.horizon)
        self.steps = _step_count(self.horizon, self.dt, self.obs_times)
        self.data_dim = 2 * len(self.obs_times)

    def check_domain(self, theta):
        theta = super().check_domain(theta)
        if np.any(theta <= 0):
            raise DomainError(f"initial populations must be positive, got {theta}")
        return theta

    def sample_latent(self, n, seed, stream=0):
        return latent.brownian_increments(self.steps, n, self.dt, 3, seed, stream)

    def simulate_path(self, theta, u) -> PathWithSensitivity:
        return lv_simulate(self.check_domain(theta), u, self.rates, self.dt, self.horizon)

    def forward_and_jacobian(self, theta, u):
        states, sens = self.simulate_path(theta, u).at(self.obs_times)
        n = states.shape[0]
        return states.reshape(n, -1), sens.reshape(n, -1, 2)

    def push_forward(self, theta, u):
        return self.forward_and_jacobian(theta, u)[0]

    def jacobian(self, theta, u):
        return self.forward_and_jacobian(theta, u)[1]

    def to_dict(self):
        return {"family": self.family, "rates": list(self.rates), "dt": self.dt,
                "horizon": self.horizon, "obs_times": list(self.obs_times)}


# -- multiscale system and its homogenised limit ------------------------------


def multiscale_step(eps: float, horizon: float = 1.0, obs_times=None,
                    target: float = 1e-3) -> float:
    """Largest step no bigger than ``min(target, eps^2 / 10)`` that lands on every
    observation time."""
    obs = _default_obs(horizon) if obs_times is None else obs_times
    bound = min(target, eps * eps / 10.0)
    steps = math.ceil(horizon / bound - 1e-9)
    for extra in range(10_000):
        dt = horizon / (steps + extra)
        try:
            _step_count(horizon, dt, obs)
        except ValueError:
            continue
        return dt
    raise ValueError("could not align the step size with the observation grid")


def multiscale_simulate(theta1, eps: float, W, dt: float, obs_times=None,
                        horizon: float = 1.0, x0: tuple[float, float] = (1.0, 0.0),
                        with_sensitivity: bool = True) -> PathWithSensitivity:
    """Slow-fast system observed at ``obs_times``.

    The slow coordinate follows ``dX = (sqrt(theta12) / eps Y + theta11 X) dt``
    and the fast one is the Ornstein-Uhlenbeck process
    ``dY = -Y / eps^2 dt + sqrt(2) / eps dW``. Only the observation times (and
    time 0) are stored; ``states[..., 1]`` holds the fast coordinate.
    """
    t11, t12 = np.asarray(theta1, dtype=float).reshape(-1)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if t12 < 0:
        raise DomainError("theta12 must be non-negative")
    if dt > eps * eps / 10.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} is too coarse for eps={eps}; need dt <= eps^2/10 = {eps * eps / 10}")
    obs = _default_obs(horizon) if obs_times is None else tuple(obs_times)
    steps = _step_count(horizon, dt, obs)
    dW = _increments(W, 1, steps)[:, :, 0]
    n = dW.shape[0]
    record = {int(round(t / dt)): i + 1 for i, t in enumerate(obs)}
    with_sensitivity = with_sensitivity and t12 > 0

    K = len(obs) + 1
    states = np.zeros((n, K, 2))
    sens = np.zeros((n, K, 2, 2))
    x = np.full(n, float(x0[0]))
    y = np.full(n, float(x0[1]))
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    states[:, 0, 0], states[:, 0, 1] = x, y
    c = math.sqrt(t12) / eps
    c2 = 1.0 / (2.0 * eps * math.sqrt(t12)) if with_sensitivity else 0.0
    a = 1.0 - dt / eps**2
    b = math.sqrt(2.0) / eps
    for k in range(steps):
        if with_sensitivity:
            s1, s2 = s1 + (t11 * s1 + x) * dt, s2 + (t11 * s2 + c2 * y) * dt
        x, y = x + (c * y + t11 * x) * dt, a * y + b * dW[:, k]
        slot = record.get(k + 1)
        if slot is not None:
            states[:, slot, 0], states[:, slot, 1] = x, y
            sens[:, slot, 0, 0], sens[:, slot, 0, 1] = s1, s2
    times = np.concatenate([[0.0], obs])
    return PathWithSensitivity(times, states, sens, dt)


class MultiscaleSDE(GeneratorModel):
    """Slow coordinate of the slow-fast system, observed at ``obs_times``."""

    family = "multiscale-sde"
    param_dim = 2

    def __init__(self, eps: float = 0.1, dt: float | None = None, horizon: float = 1.0,
                 obs_times=None):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)
        self.horizon = float(horizon)
        self.obs_times = tuple(obs_times) if obs_times is not None else _default_obs(self.horizon)
        self.dt = float(dt) if dt is not None else multiscale_step(self.eps, self.horizon, self.obs_times)
        if self.dt > self.eps**2 / 10.0 * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} is too coarse for eps={self.eps}")
        self.steps = _step_count(self.horizon, self.dt, self.obs_times)
        self.data_dim = len(self.obs_times)

    def check_domain(self, theta):
        theta = super().check_domain(theta)
        if theta[1] < 0:
            raise DomainError("theta12 must be non-negative")
        return theta

    def sample_latent(self, n, seed, stream=0):
        return latent.brownian_increments(self.steps, n, self.dt, 1, seed, stream)

    def forward_and_jacobian(self, theta, u):
        theta = self.check_domain(theta)
        if theta[1] == 0:
            raise DomainError("sensitivities need theta12 > 0")
        path = multiscale_simulate(theta, self.eps, u, self.dt, self.obs_times, self.horizon)
        return path.states[:, 1:, 0], path.sensitivities[:, 1:, 0, :]

    def push_forward(self, theta, u):
        theta = self.check_domain(theta)
        path = multiscale_simulate(theta, self.eps, u, self.dt, self.obs_times, self.horizon,
                                   with_sensitivity=False)
        return path.states[:, 1:, 0]

    def jacobian(self, theta, u):
        return self.forward_and_jacobian(theta, u)[1]

    def to_dict(self):
        return {"family": self.family, "eps": self.eps, "dt": self.dt, "horizon": self.horizon,
                "obs_times": list(self.obs_times)}


def coarse_simulate(theta1, W, dt: float = 1e-2, horizon: float = 1.0, x0: float = 1.0,
                    with_sensitivity: bool = True) -> PathWithSensitivity:
    """Homogenised Ornstein-Uhlenbeck model ``dX = theta11 X dt + sqrt(2 theta12) dW``.

    Sensitivities with respect to ``(theta11, theta12)`` start at zero. The
    ``theta12`` column needs ``theta12 > 0``.
    """
    t11, t12 = np.asarray(theta1, dtype=float).reshape(-1)
    if t12 < 0:
        raise DomainError("theta12 must be non-negative")
    steps = _step_count(horizon, dt, [horizon])
    dW = _increments(W, 1, steps)[:, :, 0]
    n = dW.shape[0]
    vol = math.sqrt(2.0 * t12)
    with_sensitivity = with_sensitivity and t12 > 0
    dvol = 1.0 / vol if with_sensitivity else 0.0

    X = np.empty((n, steps + 1, 1))
    S = np.zeros((n, steps + 1, 1, 2))
    X[:, 0, 0] = x0
    grow = 1.0 + t11 * dt
    for k in range(steps):
        x = X[:, k, 0]
        X[:, k + 1, 0] = grow * x + vol * dW[:, k]
        if with_sensitivity:
            S[:, k + 1, 0, 0] = grow * S[:, k, 0, 0] + x * dt
            S[:, k + 1, 0, 1] = grow * S[:, k, 0, 1] + dvol * dW[:, k]
    times = np.arange(steps + 1) * dt
    return PathWithSensitivity(times, X, S, dt)


class CoarseSDE(GeneratorModel):
    """Homogenised model of the slow coordinate, observed at ``obs_times``."""

    family = "coarse-sde"
    param_dim = 2

    def __init__(self, dt: float = 1e-2, horizon: float = 1.0, obs_times=None):
        self.dt = float(dt)
        self.horizon = float(horizon)
        self.obs_times = tuple(obs_times) if obs_times is not None else _default_obs(self.horizon)
        self.steps = _step_count(self.horizon, self.dt, self.obs_times)
        self.data_dim = len(self.obs_times)

    def check_domain(self, theta):
        theta = super().check_domain(theta)
        if theta[1] < 0:
            raise DomainError("theta12 must be non-negative")
        return theta

    def sample_latent(self, n, seed, stream=0):
        return latent.brownian_increments(self.steps, n, self.dt, 1, seed, stream)

    def simulate_path(self, theta, u, with_sensitivity=True) -> PathWithSensitivity:
        return coarse_simulate(self.check_domain(theta), u, self.dt, self.horizon,
                               with_sensitivity=with_sensitivity)

    def forward_and_jacobian(self, theta, u):
        theta = self.check_domain(theta)
        if theta[1] == 0:
            raise DomainError("sensitivities need theta12 > 0")
        states, sens = self.simulate_path(theta, u).at(self.obs_times)
        return states[:, :, 0], sens[:, :, 0, :]

    def push_forward(self, theta, u):
        states, _ = self.simulate_path(theta, u, with_sensitivity=False).at(self.obs_times)
        return states[:, :, 0]

    def jacobian(self, theta, u):
        return self.forward_and_jacobian(theta, u)[1]

    def to_dict(self):
        return {"family": self.family, "dt": self.dt, "horizon": self.horizon,
                "obs_times": list(self.obs_times)}
