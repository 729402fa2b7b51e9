"""MMD statistics, the unbiased gradient estimator and the information metric.

All double sums run over row blocks of ``BLOCK`` points in a fixed order, and
the per-block partial sums are combined with :func:`math.fsum`. Results are
therefore reproducible regardless of BLAS threading.

Pairwise differences ``r_ij = x_i - y_j`` are never materialised. Every
contraction against ``r_ij`` is expanded into a term in ``x_i`` and a term in
``y_j``, which keeps memory at ``O(BLOCK * n * p)`` for any data dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .kernels import KernelSpec, _as_samples, _check_dims

__all__ = [
    "BLOCK",
    "GodambeEstimate",
    "GradEstimate",
    "MetricTensor",
    "SingularMetricError",
    "fd_gradient",
    "godambe_mc",
    "grad_estimate",
    "metric_tensor",
    "mmd2_uu",
    "mmd2_vv",
]

BLOCK = 256


class SingularMetricError(np.linalg.LinAlgError):
    """The information metric could not be inverted reliably."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class GradEstimate:
    value: np.ndarray
    n: int
    m: int


@dataclass(frozen=True)
class MetricTensor:
    value: np.ndarray
    n: int


@dataclass(frozen=True)
class GodambeEstimate:
    """Monte Carlo sandwich covariance ``c = g^-1 sigma g^-1``.

    ``mbar`` is the double average of the kernel gradient contracted with the
    Jacobian, used to centre ``sigma``.
    """

    g: np.ndarray
    sigma: np.ndarray
    c: np.ndarray
    mbar: np.ndarray


def _fsum_blocks(parts: list) -> np.ndarray | float:
    arr = np.asarray(parts, dtype=float)
    if arr.ndim == 1:
        return math.fsum(arr)
    flat = arr.reshape(arr.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(arr.shape[1:])


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return cdist(A, B, "sqeuclidean")


def _kernel_sums(spec: KernelSpec, X: np.ndarray, Y: np.ndarray, same: bool) -> tuple[float, float]:
    """Return (sum over all pairs, sum over the diagonal) of ``k(x_i, y_j)``."""
    d = X.shape[1]
    parts = []
    for s in range(0, X.shape[0], BLOCK):
        parts.append(spec.profile(_sqdist(X[s:s + BLOCK], Y), d, order=0)[0].sum())
    total = _fsum_blocks(parts)
    diag = spec.diag(d) * X.shape[0] if same else 0.0
    return total, diag


def mmd2_uu(spec: KernelSpec, X, Y) -> float:
    """Unbiased estimate of the squared MMD between the laws of ``X`` and ``Y``.

    Both within-sample sums exclude the diagonal, so the result can be
    slightly negative.
    """
    X, Y = _as_samples(X), _as_samples(Y)
    _check_dims(X, Y)
    n, m = X.shape[0], Y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("U-statistic needs at least two points in each sample")
    sxx, dxx = _kernel_sums(spec, X, X, True)
    syy, dyy = _kernel_sums(spec, Y, Y, True)
    sxy, _ = _kernel_sums(spec, X, Y, False)
    return (sxx - dxx) / (n * (n - 1)) - 2.0 * sxy / (n * m) + (syy - dyy) / (m * (m - 1))


def mmd2_vv(spec: KernelSpec, X, Y) -> float:
    """Biased (V-statistic) estimate of the squared MMD; never negative for
    positive-definite kernels up to rounding."""
    X, Y = _as_samples(X), _as_samples(Y)
    _check_dims(X, Y)
    n, m = X.shape[0], Y.shape[0]
    if n < 1 or m < 1:
        raise ValueError("empty sample")
    sxx, _ = _kernel_sums(spec, X, X, True)
    syy, _ = _kernel_sums(spec, Y, Y, True)
    sxy, _ = _kernel_sums(spec, X, Y, False)
    return sxx / n**2 - 2.0 * sxy / (n * m) + syy / m**2


# -- gradient and metric from simulated samples -------------------------------


def _require_smooth(spec: KernelSpec) -> None:
    if not spec.twice_differentiable:
        raise ValueError("matern-1/2 is not differentiable at coincident points; "
                         "pick a smoother kernel for gradient-based fitting")


def _contract_gradient(W: np.ndarray, Xb: np.ndarray, Jb: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """``sum_i sum_j W_ij (x_i - z_j)^T J_i`` for one block of rows."""
    a = Xb * W.sum(axis=1, keepdims=True) - W @ Z  # (b, d)
    return np.einsum("bd,bdp->p", a, Jb)


def _grad_sums(spec: KernelSpec, X: np.ndarray, J: np.ndarray, Y: np.ndarray) -> tuple:
    d = X.shape[1]
    xx, xy = [], []
    for s in range(0, X.shape[0], BLOCK):
        Xb, Jb = X[s:s + BLOCK], J[s:s + BLOCK]
        _, d1 = spec.profile(_sqdist(Xb, X), d, order=1)
        W = 2.0 * d1
        idx = np.arange(Xb.shape[0])
        W[idx, s + idx] = 0.0
        xx.append(_contract_gradient(W, Xb, Jb, X))
        _, d1 = spec.profile(_sqdist(Xb, Y), d, order=1)
        xy.append(_contract_gradient(2.0 * d1, Xb, Jb, Y))
    return _fsum_blocks(xx), _fsum_blocks(xy)


def _gradient_from_samples(spec: KernelSpec, X: np.ndarray, J: np.ndarray, Y: np.ndarray) -> np.ndarray:
    n, m = X.shape[0], Y.shape[0]
    sxx, sxy = _grad_sums(spec, X, J, Y)
    return 2.0 * sxx / (n * (n - 1)) - 2.0 * sxy / (n * m)


def _metric_from_samples(spec: KernelSpec, X: np.ndarray, J: np.ndarray) -> np.ndarray:
    n, d = X.shape
    p = J.shape[2]
    # P[i] = J_i^T x_i, used to expand J_i^T (x_i - x_j)
    P = np.einsum("idp,id->ip", J, X)
    Jflat = J.reshape(n, d * p)
    parts = []
    for s in range(0, n, BLOCK):
        Xb, Jb, Pb = X[s:s + BLOCK], J[s:s + BLOCK], P[s:s + BLOCK]
        b = Xb.shape[0]
        _, d1, d2 = spec.profile(_sqdist(Xb, X), d, order=2)
        idx = np.arange(b)
        d1[idx, s + idx] = 0.0
        d2[idx, s + idx] = 0.0
        # -2 sum_ij psi'_ij J_i^T J_j
        WJ = (d1 @ Jflat).reshape(b, d, p)
        iso = np.einsum("bdp,bdq->pq", Jb, WJ)
        # -4 sum_ij psi''_ij (J_i^T r_ij)(J_j^T r_ij)^T with r_ij = x_i - x_j
        A = Pb[:, None, :] - np.einsum("bdp,jd->bjp", Jb, X)
        B = np.einsum("bd,jdp->bjp", Xb, J) - P[None, :, :]
        aniso = np.einsum("bj,bjp,bjq->pq", d2, A, B)
        parts.append(-2.0 * iso - 4.0 * aniso)
    g = _fsum_blocks(parts) / (n * (n - 1))
    return 0.5 * (g + g.T)


def _simulate(model, theta, u) -> tuple[np.ndarray, np.ndarray]:
    X, J = model.forward_and_jacobian(theta, u)
    X = _as_samples(X)
    J = np.asarray(J, dtype=float)
    if J.ndim != 3 or J.shape[:2] != X.shape:
        raise ValueError(f"Jacobian shape {J.shape} does not match samples {X.shape}")
    return X, J


def grad_estimate(spec: KernelSpec, model, theta, u, Y) -> GradEstimate:
    """Unbiased estimate of the gradient of the squared MMD in ``theta``.

    With frozen latent draws ``u`` this equals the exact gradient of
    ``mmd2_uu(spec, model.push_forward(theta, u), Y)``.
    """
    _require_smooth(spec)
    X, J = _simulate(model, theta, u)
    Y = _as_samples(Y)
    _check_dims(X, Y)
    if X.shape[0] < 2:
        raise ValueError("need at least two simulated points")
    return GradEstimate(_gradient_from_samples(spec, X, J, Y), X.shape[0], Y.shape[0])


def fd_gradient(spec: KernelSpec, model, theta, u, Y, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of ``mmd2_uu`` in ``theta`` with frozen draws ``u``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    out = np.empty(theta.size)
    for a in range(theta.size):
        e = np.zeros(theta.size)
        e[a] = h
        up = mmd2_uu(spec, model.push_forward(theta + e, u), Y)
        down = mmd2_uu(spec, model.push_forward(theta - e, u), Y)
        out[a] = (up - down) / (2.0 * h)
    return out


def metric_tensor(spec: KernelSpec, model, theta, u) -> MetricTensor:
    """U-statistic estimate of the information metric induced by the kernel."""
    _require_smooth(spec)
    X, J = _simulate(model, theta, u)
    if X.shape[0] < 2:
        raise ValueError("need at least two simulated points")
    return MetricTensor(_metric_from_samples(spec, X, J), X.shape[0])


def _checked_inverse_apply(g: np.ndarray, rhs: np.ndarray, max_condition: float = 1e12) -> np.ndarray:
    cond = float(np.linalg.cond(g))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularMetricError("information metric is singular", cond)
    return np.linalg.solve(g, rhs)


def godambe_mc(spec: KernelSpec, model, theta, n_outer: int, n_inner: int, seed: int) -> GodambeEstimate:
    """Monte Carlo estimate of the asymptotic covariance ``g^-1 sigma g^-1``.

    Inner draws (stream 0) give the metric and the inner averages of the
    kernel gradient; outer draws (stream 1) supply the points at which the
    inner average is evaluated. The centring term is the plug-in mean over
    the outer draws.
    """
    _require_smooth(spec)
    if n_outer < 2 or n_inner < 2:
        raise ValueError("need at least two inner and two outer draws")
    X, J = _simulate(model, theta, model.sample_latent(n_inner, seed, 0))
    V = _as_samples(model.push_forward(theta, model.sample_latent(n_outer, seed, 1)))
    n, d = X.shape
    p = J.shape[2]

    P = np.einsum("idp,id->ip", J, X)
    Jflat = J.reshape(n, d * p)
    H = np.empty((V.shape[0], p))
    for s in range(0, V.shape[0], BLOCK):
        Vb = V[s:s + BLOCK]
        _, d1 = spec.profile(_sqdist(Vb, X), d, order=1)
        W = 2.0 * d1 / n
        WJ = (W @ Jflat).reshape(Vb.shape[0], d, p)
        H[s:s + BLOCK] = W @ P - np.einsum("bd,bdp->bp", Vb, WJ)
    mbar = np.array([math.fsum(col) for col in H.T]) / H.shape[0]
    D = H - mbar
    sigma = D.T @ D / H.shape[0]
    sigma = 0.5 * (sigma + sigma.T)
    g = _metric_from_samples(spec, X, J)
    ginv_sigma = _checked_inverse_apply(g, sigma)
    c = np.linalg.solve(g, ginv_sigma.T)
    c = 0.5 * (c + c.T)
    return GodambeEstimate(g, sigma, c, mbar)
