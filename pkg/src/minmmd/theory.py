"""Closed-form efficiency and robustness for Gaussian location and scale models.

The data law is ``N(theta, sigma^2 I)`` (location) or ``N(0, e^{2 theta} I)``
(scale), fitted with the normalised Gaussian kernel ``phi(x; y, l^2 I)`` or a
weighted sum of such kernels. Influence functions are the first-order bias
per unit contamination, ``g^-1 (h(z) - mbar)``, where ``h(z)`` is the kernel
gradient averaged over the model and ``mbar`` its average over the data.

Every power of the form ``(.)^(d/2 + c)`` is evaluated through logarithms so
that the functions stay finite for dimensions in the millions.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "large_l_limit_variance",
    "loc_asym_variance",
    "loc_gross_sensitivity",
    "loc_influence",
    "mix_asym_variance",
    "mix_influence",
    "scale_asym_variance",
    "scale_gross_sensitivity",
    "scale_influence",
    "scale_metric",
    "scale_metric_terms",
    "scale_sigma",
]

_LOG2PI = math.log(2.0 * math.pi)


def _positive(**kw) -> None:
    for name, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


def _exp(x: float) -> float:
    # values past the double range are reported as inf rather than raising
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _dim(d) -> float:
    if not d >= 1:
        raise ValueError(f"dimension must be at least 1, got {d!r}")
    return float(d)


# -- location model -----------------------------------------------------------


def loc_asym_variance(l: float, sigma: float, d: float) -> float:
    """Asymptotic variance (multiple of the identity) of the location estimate.

    Equals ``sigma^2 (1 - sigma^4 / (l^2 + 2 sigma^2)^2)^(-(d/2 + 1))``, which
    tends to the Cramer-Rao bound ``sigma^2`` as ``l`` grows.
    """
    _positive(l=l, sigma=sigma)
    d = _dim(d)
    q = sigma**4 / (l * l + 2 * sigma * sigma) ** 2
    return _exp(2 * math.log(sigma) - (0.5 * d + 1.0) * math.log1p(-q))


def _log_loc_gain(l: float, sigma: float, d: float) -> float:
    return (0.5 * d + 1.0) * math.log((l * l + 2 * sigma * sigma) / (l * l + sigma * sigma))


def loc_influence(l: float, sigma: float, d: float, theta, z) -> np.ndarray:
    """Influence of a point mass at ``z`` on the location estimate.

    ``((l^2 + 2 sigma^2)/(l^2 + sigma^2))^(d/2+1) exp(-|z - theta|^2 / (2 (l^2 + sigma^2))) (z - theta)``
    """
    _positive(l=l, sigma=sigma)
    d = _dim(d)
    diff = np.atleast_1d(np.asarray(z, dtype=float) - np.asarray(theta, dtype=float))
    v = l * l + sigma * sigma
    log_amp = (0.5 * d + 1.0) * math.log((l * l + 2 * sigma * sigma) / v) - float(diff @ diff) / (2 * v)
    if not np.any(diff):
        return diff
    return _exp(log_amp) * diff


def loc_gross_sensitivity(l: float, sigma: float, d: float) -> float:
    """Supremum over ``z`` of the influence norm, attained at ``|z - theta|^2 = l^2 + sigma^2``."""
    _positive(l=l, sigma=sigma)
    d = _dim(d)
    return _exp(-0.5 + 0.5 * math.log(l * l + sigma * sigma) + _log_loc_gain(l, sigma, d))


# -- mixtures of Gaussian kernels ---------------------------------------------


def _mix_args(ls, gammas):
    ls = np.atleast_1d(np.asarray(ls, dtype=float))
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if ls.shape != gammas.shape or ls.ndim != 1 or ls.size == 0:
        raise ValueError("need one weight per lengthscale")
    if np.any(ls <= 0) or np.any(gammas <= 0):
        raise ValueError("lengthscales and weights must be positive")
    return ls, gammas


def mix_asym_variance(ls, gammas, sigma: float, d: float) -> float:
    """Asymptotic variance of the location estimate under the kernel
    ``sum_s gamma_s phi(x; y, l_s^2 I)``."""
    ls, gammas = _mix_args(ls, gammas)
    _positive(sigma=sigma)
    d = _dim(d)
    a = ls**2
    s2 = sigma * sigma
    e = -(0.5 * d + 1.0)
    # work relative to the largest term so the powers never overflow
    denom_logs = e * np.log(a + 2 * s2)
    inner = (a[:, None] + s2) * (a[None, :] + s2) + s2 * (2 * s2 + a[:, None] + a[None, :])
    num_logs = e * np.log(inner)
    shift = denom_logs.max()
    with np.errstate(over="ignore"):
        num = np.sum(np.outer(gammas, gammas) * np.exp(num_logs - 2 * shift))
    den = np.sum(gammas * np.exp(denom_logs - shift)) ** 2
    return s2 * num / den


def mix_influence(ls, gammas, sigma: float, d: float, theta, z) -> np.ndarray:
    """Influence of a point mass at ``z`` under a Gaussian mixture kernel."""
    ls, gammas = _mix_args(ls, gammas)
    _positive(sigma=sigma)
    d = _dim(d)
    diff = np.atleast_1d(np.asarray(z, dtype=float) - np.asarray(theta, dtype=float))
    r2 = float(diff @ diff)
    a = ls**2
    s2 = sigma * sigma
    e = -(0.5 * d + 1.0)
    num_logs = e * np.log(a + s2) - r2 / (2 * (a + s2))
    den_logs = e * np.log(a + 2 * s2)
    shift = den_logs.max()
    with np.errstate(over="ignore"):
        ratio = np.sum(gammas * np.exp(num_logs - shift)) / np.sum(gammas * np.exp(den_logs - shift))
    return ratio * diff


# -- scale model --------------------------------------------------------------


def _scale_args(l: float, theta_star: float, d: float):
    if not (l >= 0 and math.isfinite(l)):
        raise ValueError(f"lengthscale must be non-negative, got {l!r}")
    d = _dim(d)
    return l * l, math.exp(2.0 * theta_star), d


def scale_metric_terms(l: float, theta_star: float, d: float) -> tuple[float, float, float]:
    """The three Gaussian integrals whose sum is the scale-model metric.

    They cancel heavily for large ``d``; :func:`scale_metric` uses the
    simplified sum instead.
    """
    a, s, d = _scale_args(l, theta_star, d)
    base = (2 * math.pi * (a + 2 * s)) ** (-0.5 * d)
    a1 = d * d * base
    a2 = -2 * d * d / (a + s) * base * (a + s * s / (a + 2 * s))
    a3 = base * (d * d * a / (a + 2 * s) + (d * d + 2 * d) * s * s / (a + 2 * s) ** 2)
    return a1, a2, a3


def scale_metric(l: float, theta_star: float, d: float) -> float:
    """Information metric of the log-scale parameter at ``theta_star``.

    ``(2 pi)^(-d/2) (l^2 + 2s)^(-d/2) d (d+2) s^2 / (l^2 + 2s)^2`` with ``s = e^(2 theta_star)``.
    """
    a, s, d = _scale_args(l, theta_star, d)
    log_g = -0.5 * d * (_LOG2PI + math.log(a + 2 * s)) + math.log(d * (d + 2)) + 2 * math.log(s) \
        - 2 * math.log(a + 2 * s)
    return _exp(log_g)


def _scale_c_parts(a: float, s: float, d: float):
    c1 = 1.0 - 2.0 * s / (a + 3 * s) + (1.0 + 2.0 / d) * s * s / (a + 3 * s) ** 2
    c2 = (1.0 - s / (a + 2 * s)) ** 2
    c1_minus_c2 = s * s * ((a + s) / ((a + 3 * s) * (a + 2 * s) ** 2) + (1.0 + 2.0 / d) / (a + 3 * s) ** 2)
    # log of ((l^2+2s)^2 / ((l^2+s)(l^2+3s)))^(d/2)
    log_e = -0.5 * d * math.log1p(-(s / (a + 2 * s)) ** 2)
    return c1, c2, c1_minus_c2, log_e


def _log_bracket(c1, c2, c1_minus_c2, log_e) -> float:
    """``log(c1 e^log_e - c2)`` without overflow or cancellation."""
    if log_e < 30.0:
        return math.log(c1_minus_c2 + c1 * math.expm1(log_e))
    return math.log(c1) + log_e + math.log1p(-(c2 / c1) * math.exp(-log_e))


def scale_sigma(l: float, theta_star: float, d: float) -> float:
    """Variance of the centred kernel-gradient average for the scale model."""
    a, s, d = _scale_args(l, theta_star, d)
    c1, c2, dc, log_e = _scale_c_parts(a, s, d)
    log_sigma = (-d * (_LOG2PI + math.log(a + 2 * s)) + 2 * math.log(d * s / (a + s))
                 + _log_bracket(c1, c2, dc, log_e))
    return _exp(log_sigma)


def scale_asym_variance(l: float, theta_star: float, d: float) -> float:
    """Asymptotic variance of the log-scale estimate.

    For large ``l`` this approaches ``1 / (2d)``, the inverse Fisher
    information of the log-scale.
    """
    a, s, d = _scale_args(l, theta_star, d)
    c1, c2, dc, log_e = _scale_c_parts(a, s, d)
    log_c = (4 * math.log(a + 2 * s) - 2 * math.log(a + s) - 2 * math.log(d + 2) - 2 * math.log(s)
             + _log_bracket(c1, c2, dc, log_e))
    return _exp(log_c)


def _scale_if_coeffs(a: float, s: float, d: float) -> tuple[float, float]:
    """Log of the amplitude ``A`` and the offset ``B`` of the scale influence."""
    log_amp = (0.5 * d + 2.0) * math.log((a + 2 * s) / (a + s)) + math.log(a + s) - math.log(d * (d + 2) * s)
    offset = (a + 2 * s) / ((d + 2) * s)
    return log_amp, offset


def scale_influence(l: float, theta_star: float, d: float, z) -> float:
    """Influence of a point mass at radius ``|z|`` on the log-scale estimate.

    With ``w = |z|^2 / (l^2 + s)`` this is ``A (w - d) e^{-w/2} + B``; the
    constant ``B`` comes from centring by the data-averaged kernel gradient,
    so the influence tends to ``B`` rather than 0 as ``|z|`` grows.
    """
    a, s, d = _scale_args(l, theta_star, d)
    r = np.linalg.norm(np.atleast_1d(np.asarray(z, dtype=float)))
    log_amp, offset = _scale_if_coeffs(a, s, d)
    w = r * r / (a + s)
    if w == d:
        return offset
    return math.copysign(_exp(log_amp + math.log(abs(w - d)) - 0.5 * w), w - d) + offset


def scale_gross_sensitivity(l: float, theta_star: float, d: float) -> float:
    """Supremum over ``z`` of ``|scale_influence|``.

    The profile ``(w - d) e^{-w/2}`` is smallest at ``w = 0`` and largest at
    ``w = d + 2``.
    """
    a, s, d = _scale_args(l, theta_star, d)
    log_amp, offset = _scale_if_coeffs(a, s, d)
    low = offset - _exp(log_amp + math.log(d))
    high = offset + _exp(log_amp + math.log(2.0) - 0.5 * (d + 2))
    return max(abs(low), abs(high))


# -- infinite-lengthscale limit ----------------------------------------------


def _quartic_features(X: np.ndarray, J: np.ndarray):
    """Features of the non-separable part of ``|x - y|^4`` and their Jacobians.

    ``|x - y|^4`` equals ``phi(x)^T Q phi(y)`` up to terms in one argument only,
    with ``phi = (|x|^2, |x|^2 x, x, vec(x x^T))``.
    """
    n, d = X.shape
    q = np.einsum("id,id->i", X, X)
    dq = 2.0 * np.einsum("id,idp->ip", X, J)
    phi = np.concatenate([q[:, None], q[:, None] * X, X, np.einsum("ia,ib->iab", X, X).reshape(n, -1)], axis=1)
    dc = X[:, :, None] * dq[:, None, :] + q[:, None, None] * J
    dM = np.einsum("iap,ib->iabp", J, X)
    dM = (dM + dM.transpose(0, 2, 1, 3)).reshape(n, d * d, -1)
    dphi = np.concatenate([dq[:, None, :], dc, J, dM], axis=1)
    Q = np.zeros((phi.shape[1], phi.shape[1]))
    Q[0, 0] = 2.0
    Q[1:1 + d, 1 + d:1 + 2 * d] = Q[1 + d:1 + 2 * d, 1:1 + d] = -4.0 * np.eye(d)
    Q[1 + 2 * d:, 1 + 2 * d:] = 4.0 * np.eye(d * d)
    return phi, dphi, Q


def large_l_limit_variance(model, theta, n_mc: int, seed: int, rcond: float = 1e-10) -> np.ndarray:
    """Asymptotic variance of the estimate as the kernel lengthscale grows without bound.

    For large lengthscales the squared MMD is dominated by the lowest-order
    moments that move with ``theta``. When the mean Jacobian ``D`` has full
    column rank the limit is the sandwich ``D^+ V D^+T`` with ``V`` the
    output covariance. When the mean does not move at all (every singular
    value of ``D`` within four Monte Carlo standard errors of 0) the leading
    term is quartic and the limit is the sandwich of the matching
    minimum-distance fit on second- and third-order moments. A mean Jacobian
    of intermediate rank raises ``ValueError``.

    Parameters
    ----------
    model : GeneratorModel
    theta : array_like
    n_mc : int
        Monte Carlo draws used for every moment.
    seed : int
    rcond : float
        Cut-off for the pseudo-inverse in the full-rank case.
    """
    if n_mc < 2:
        raise ValueError("need at least two Monte Carlo draws")
    u = model.sample_latent(n_mc, seed, 0)
    X, J = model.forward_and_jacobian(theta, u)
    X = np.asarray(X, dtype=float).reshape(n_mc, -1)
    J = np.asarray(J, dtype=float).reshape(n_mc, X.shape[1], -1)
    p = J.shape[2]
    D = J.mean(axis=0)
    se = float(np.linalg.norm(J.std(axis=0, ddof=1), 2)) / math.sqrt(n_mc)
    sv = np.linalg.svd(D, compute_uv=False)
    rank = int(np.sum(sv > 4.0 * se))
    if rank == p:
        V = np.atleast_2d(np.cov(X, rowvar=False))
        Dp = np.linalg.pinv(D, rcond=rcond)
        out = Dp @ V @ Dp.T
    elif rank == 0:
        phi, dphi, Q = _quartic_features(X, J)
        Dq = dphi.mean(axis=0)
        V = np.atleast_2d(np.cov(phi, rowvar=False))
        QD = Q @ Dq
        G = Dq.T @ QD
        if np.linalg.cond(G) > 1e12:
            raise ValueError("second-order moments do not identify the parameter either")
        Gi = np.linalg.inv(G)
        out = Gi @ QD.T @ V @ QD @ Gi.T
    else:
        raise ValueError(f"mean Jacobian has rank {rank} of {p}; the large-lengthscale limit "
                         "mixes first- and second-order terms and is not implemented")
    return 0.5 * (out + out.T)
