"""Stochastic and natural stochastic gradient descent on the MMD loss.

Iteration ``k`` (counting from 1) draws its latent sample from stream ``k``
of the fit seed and its data minibatch from a dedicated substream of the same
index. The schedule of draws is therefore identical for both methods, and a
fit is a pure function of ``(data, theta0, config)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import latent
from .kernels import KernelSpec, _as_samples
from .mmd import SingularMetricError, _gradient_from_samples, _metric_from_samples, _require_smooth, mmd2_uu

__all__ = [
    "FitConfig",
    "FitTrace",
    "fit",
    "natural_direction",
    "natural_sgd_fit",
    "sgd_fit",
    "step_schedule",
]

SCHEDULES = ("constant", "robbins-monro")
METHODS = ("sgd", "natural-sgd")


@dataclass(frozen=True)
class FitConfig:
    """Settings for a stochastic gradient fit.

    Parameters
    ----------
    iterations : int
        Maximum number of parameter updates.
    n_sim : int, optional
        Simulated points per iteration. Defaults to the minibatch size.
    minibatch : int, optional
        Data points per iteration, drawn without replacement. ``None`` uses the
        full data set every iteration.
    schedule : {"constant", "robbins-monro"}
    eta0 : float
        Initial step size.
    exponent : float
        Decay exponent of the Robbins-Monro schedule.
    method : {"sgd", "natural-sgd"}
    ridge : float
        Relative ridge added to the metric before solving, scaled by its mean
        eigenvalue.
    seed : int
    grad_tol : float
        Stop once the gradient norm falls below this.
    fresh_draws : bool
        Draw new latent variables every iteration. When false the same draws
        (stream 0) are reused throughout.
    loss_every : int
        Evaluate the loss on fixed draws every this many iterations (0 = never).
    max_halvings : int
        Step-size halvings allowed per iteration when a proposal leaves the
        parameter domain.
    """

    iterations: int = 500
    n_sim: int | None = None
    minibatch: int | None = None
    schedule: str = "constant"
    eta0: float = 0.1
    exponent: float = 0.75
    method: str = "sgd"
    ridge: float = 1e-8
    seed: int = 0
    grad_tol: float = 1e-8
    fresh_draws: bool = True
    loss_every: int = 0
    max_halvings: int = 30

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.n_sim is not None and self.n_sim < 2:
            raise ValueError("n_sim must be at least 2")
        if self.minibatch is not None and self.minibatch < 2:
            raise ValueError("minibatch must be at least 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @classmethod
    def from_dict(cls, obj: dict) -> "FitConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown fit fields: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitTrace:
    """Iterates of a fit. Row 0 holds the starting point with NaN step data."""

    k: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    reason: str = ""
    rejections: list = field(default_factory=list)
    seed: int = 0

    def record(self, k, theta, eta=math.nan, grad_norm=math.nan, loss=math.nan) -> None:
        self.k.append(int(k))
        self.theta.append(np.array(theta, dtype=float))
        self.eta.append(float(eta))
        self.grad_norm.append(float(grad_norm))
        self.loss.append(float(loss))

    @property
    def theta_hat(self) -> np.ndarray:
        return self.theta[-1].copy()

    @property
    def thetas(self) -> np.ndarray:
        return np.array(self.theta)

    def __len__(self) -> int:
        return len(self.k)

    def header(self) -> list[str]:
        p = self.theta[0].size
        return ["k"] + [f"theta_{i + 1}" for i in range(p)] + ["eta", "grad_norm", "seed"]

    def rows(self):
        for k, th, eta, gn in zip(self.k, self.theta, self.eta, self.grad_norm):
            yield [k] + [repr(float(v)) for v in th] + [repr(eta), repr(gn), self.seed]

    def to_csv(self, path_or_file) -> None:
        if hasattr(path_or_file, "write"):
            _write_rows(path_or_file, self.header(), self.rows())
        else:
            with open(path_or_file, "w", newline="") as fh:
                _write_rows(fh, self.header(), self.rows())


def _write_rows(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)


def step_schedule(kind: str, eta0: float, k: int, exponent: float = 0.75) -> float:
    """Step size at iteration index ``k`` (0-based).

    ``constant`` returns ``eta0``; ``robbins-monro`` returns
    ``eta0 / (1 + k)^exponent``.
    """
    if not eta0 > 0:
        raise ValueError("eta0 must be positive")
    if k < 0:
        raise ValueError("iteration index must be non-negative")
    if kind == "constant":
        return float(eta0)
    if kind == "robbins-monro":
        return float(eta0) / (1.0 + k) ** exponent
    raise ValueError(f"unknown schedule {kind!r}")


def natural_direction(g: np.ndarray, grad: np.ndarray, ridge: float = 1e-8,
                      escalations: int = 3, max_condition: float = 1e12) -> np.ndarray:
    """Solve ``(g + lam I) s = grad`` with ``lam = ridge * trace(g) / p``.

    The ridge is multiplied by 10 up to ``escalations`` times if the system
    is too ill-conditioned to trust.
    """
    p = g.shape[0]
    scale = float(np.trace(g)) / p
    lam = ridge * scale
    cond = math.inf
    for _ in range(escalations + 1):
        A = g + lam * np.eye(p)
        cond = float(np.linalg.cond(A))
        if math.isfinite(cond) and cond <= max_condition:
            s = np.linalg.solve(A, grad)
            if np.all(np.isfinite(s)):
                return s
        lam = lam * 10.0 if lam > 0 else (1e-8 * abs(scale) if scale else 0.0)
    raise SingularMetricError(f"metric solve failed after ridge escalation (final ridge {lam:.3e})", cond)


def _minibatch(data: np.ndarray, size: int | None, seed: int, k: int) -> np.ndarray:
    m = data.shape[0]
    if size is None or size >= m:
        return data
    idx = latent.generator(seed, k, 1).choice(m, size=size, replace=False)
    return data[np.sort(idx)]


def fit(spec: KernelSpec, model, data, theta0, cfg: FitConfig) -> FitTrace:
    """Minimise the squared MMD between the model and ``data`` from ``theta0``."""
    _require_smooth(spec)
    data = _as_samples(data)
    m = data.shape[0]
    if cfg.minibatch is not None and cfg.minibatch > m:
        raise ValueError(f"minibatch {cfg.minibatch} exceeds the data size {m}")
    n_sim = cfg.n_sim or (cfg.minibatch or m)
    if n_sim < 2:
        raise ValueError("need at least two simulated points")
    natural = cfg.method == "natural-sgd"

    theta = model.check_domain(theta0).copy()
    trace = FitTrace(seed=cfg.seed)
    frozen = None if cfg.fresh_draws else model.sample_latent(n_sim, cfg.seed, 0)
    eval_draws = model.sample_latent(n_sim, cfg.seed, 0) if cfg.loss_every else None

    def loss_at(th):
        return mmd2_uu(spec, model.push_forward(th, eval_draws), data)

    trace.record(0, theta, loss=loss_at(theta) if cfg.loss_every else math.nan)
    trace.reason = "iterations"
    for k in range(1, cfg.iterations + 1):
        u = frozen if frozen is not None else model.sample_latent(n_sim, cfg.seed, k)
        batch = _minibatch(data, cfg.minibatch, cfg.seed, k)
        X, J = model.forward_and_jacobian(theta, u)
        X = _as_samples(X)
        grad = _gradient_from_samples(spec, X, J, batch)
        gnorm = float(np.linalg.norm(grad))
        if not math.isfinite(gnorm):
            trace.reason = "non-finite gradient"
            break
        if gnorm < cfg.grad_tol:
            trace.record(k, theta, 0.0, gnorm)
            trace.reason = "gradient tolerance"
            break
        if natural:
            g = _metric_from_samples(spec, X, J)
            if not np.all(np.isfinite(g)):
                trace.reason = "non-finite metric"
                break
            direction = natural_direction(g, grad, cfg.ridge)
        else:
            direction = grad

        eta = step_schedule(cfg.schedule, cfg.eta0, k - 1, cfg.exponent)
        for _ in range(cfg.max_halvings + 1):
            proposal = theta - eta * direction
            if np.all(np.isfinite(proposal)) and model.in_domain(proposal):
                break
            trace.rejections.append((k, eta))
            eta *= 0.5
        else:
            trace.reason = "domain"
            break
        theta = proposal
        loss = loss_at(theta) if cfg.loss_every and k % cfg.loss_every == 0 else math.nan
        trace.record(k, theta, eta, gnorm, loss)
    return trace


def sgd_fit(spec: KernelSpec, model, data, theta0, cfg: FitConfig) -> FitTrace:
    """Plain stochastic gradient descent; ``cfg.method`` must be ``"sgd"``."""
    if cfg.method != "sgd":
        raise ValueError("sgd_fit needs method='sgd'")
    return fit(spec, model, data, theta0, cfg)


def natural_sgd_fit(spec: KernelSpec, model, data, theta0, cfg: FitConfig) -> FitTrace:
    """Gradient descent preconditioned by the inverse information metric,
    estimated from the same latent draws as the gradient."""
    if cfg.method != "natural-sgd":
        raise ValueError("natural_sgd_fit needs method='natural-sgd'")
    return fit(spec, model, data, theta0, cfg)


def with_method(cfg: FitConfig, method: str) -> FitConfig:
    """Copy of ``cfg`` with another update rule."""
    return replace(cfg, method=method)
