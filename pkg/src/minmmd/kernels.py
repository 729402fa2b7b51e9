"""Translation-invariant reproducing kernels with analytic derivatives.

Every kernel here is radial, ``k(x, y) = psi(t)`` with ``t = ||x - y||^2``, so
all derivatives follow from the profile ``psi`` and its first two derivatives
in ``t``:

    grad1   = 2 psi'(t) r
    grad12  = -2 psi'(t) I - 4 psi''(t) r r^T        with r = x - y.

The batched routines in :mod:`minmmd.mmd` work directly with the profile, the
point-wise functions :func:`evaluate`, :func:`grad1` and :func:`grad12` are the
user-facing versions for single pairs.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "FAMILIES",
    "KernelSingularityWarning",
    "KernelSpec",
    "evaluate",
    "grad1",
    "grad12",
    "median_heuristic",
]

FAMILIES = ("gaussian-density", "gaussian-rbf", "matern-1/2", "matern-3/2", "imq", "mixture")
_BASE_FAMILIES = FAMILIES[:-1]
_SQRT3 = math.sqrt(3.0)


class KernelSingularityWarning(RuntimeWarning):
    """A derivative was requested where the kernel is not differentiable."""


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a kernel.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    lengthscale : float or sequence of float
        A single lengthscale, or one per component for a mixture.
    weights : sequence of float, optional
        Positive mixture weights (mixtures only).
    beta : float
        Exponent of the inverse multiquadric, ``(1 + t / l^2)^(-beta)``.
    base : str
        Component family of a mixture.
    """

    family: str
    lengthscale: tuple[float, ...]
    weights: tuple[float, ...] | None = None
    beta: float = 0.5
    base: str = "gaussian-rbf"
    _components: tuple["KernelSpec", ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ls = self.lengthscale
        if np.isscalar(ls):
            ls = (float(ls),)
        ls = tuple(float(v) for v in ls)
        object.__setattr__(self, "lengthscale", ls)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not ls or any(not (v > 0 and math.isfinite(v)) for v in ls):
            raise ValueError(f"lengthscales must be positive and finite, got {ls}")
        if not self.beta > 0:
            raise ValueError("imq exponent beta must be positive")
        if self.family == "mixture":
            if self.base not in _BASE_FAMILIES:
                raise ValueError(f"mixture components must be a non-mixture family, got {self.base!r}")
            w = self.weights if self.weights is not None else (1.0,) * len(ls)
            w = tuple(float(v) for v in w)
            if len(w) != len(ls):
                raise ValueError("mixture needs one weight per lengthscale")
            if len(ls) < 2:
                raise ValueError("a mixture needs at least two components")
            if any(not (v > 0 and math.isfinite(v)) for v in w):
                raise ValueError("mixture weights must be positive")
            object.__setattr__(self, "weights", w)
            comps = tuple(KernelSpec(self.base, (l,), beta=self.beta) for l in ls)
            object.__setattr__(self, "_components", comps)
        else:
            if len(ls) != 1:
                raise ValueError(f"{self.family} takes a single lengthscale")
            if self.weights is not None:
                raise ValueError("weights are only valid for mixtures")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def mixture(cls, lengthscales: Sequence[float], weights: Sequence[float] | None = None,
                base: str = "gaussian-rbf", beta: float = 0.5) -> "KernelSpec":
        return cls("mixture", tuple(lengthscales), None if weights is None else tuple(weights),
                   beta=beta, base=base)

    @property
    def l(self) -> float:
        return self.lengthscale[0]

    @property
    def components(self) -> tuple["KernelSpec", ...]:
        return self._components

    @property
    def twice_differentiable(self) -> bool:
        fam = self.base if self.family == "mixture" else self.family
        return fam != "matern-1/2"

    def to_dict(self) -> dict:
        out = {"family": self.family, "lengthscale": list(self.lengthscale)}
        if self.family == "mixture":
            out["weights"] = list(self.weights)
            out["base"] = self.base
        if self.family == "imq" or (self.family == "mixture" and self.base == "imq"):
            out["beta"] = self.beta
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "KernelSpec":
        unknown = set(obj) - {"family", "lengthscale", "weights", "beta", "base"}
        if unknown:
            raise ValueError(f"unknown kernel fields: {sorted(unknown)}")
        if "family" not in obj or "lengthscale" not in obj:
            raise ValueError("kernel config needs 'family' and 'lengthscale'")
        ls = obj["lengthscale"]
        ls = tuple(ls) if isinstance(ls, (list, tuple)) else (ls,)
        w = obj.get("weights")
        return cls(obj["family"], ls, None if w is None else tuple(w),
                   beta=obj.get("beta", 0.5), base=obj.get("base", "gaussian-rbf"))

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        return cls.from_dict(json.loads(text))

    # -- radial profile -------------------------------------------------------

    def profile(self, t: np.ndarray, d: int, order: int = 2):
        """Return ``psi(t)`` and, up to ``order``, ``psi'(t)`` and ``psi''(t)``.

        ``t`` holds squared distances, ``d`` is the ambient dimension (only the
        normalised Gaussian depends on it). Where a derivative is infinite at
        ``t = 0`` the returned entry is 0; callers decide whether that is
        acceptable (it is whenever the derivative multiplies ``r``).
        """
        if self.family == "mixture":
            out = [np.zeros_like(t, dtype=float) for _ in range(order + 1)]
            for w, comp in zip(self.weights, self._components):
                for acc, part in zip(out, comp.profile(t, d, order)):
                    acc += w * part
            return tuple(out)

        l = self.l
        fam = self.family
        if fam in ("gaussian-rbf", "gaussian-density"):
            k = np.exp(-0.5 * t / l**2)
            if fam == "gaussian-density":
                k = k * (2.0 * math.pi * l**2) ** (-0.5 * d)
            res = [k, -0.5 * k / l**2, 0.25 * k / l**4]
        elif fam == "imq":
            base = 1.0 + t / l**2
            b = self.beta
            res = [base**-b, -b / l**2 * base ** (-b - 1.0), b * (b + 1.0) / l**4 * base ** (-b - 2.0)]
        else:
            rho = np.sqrt(t) / l
            zero = rho == 0
            safe = np.where(zero, 1.0, rho)
            # derivatives blow up as rho -> 0; an infinite value there is the honest answer
            with np.errstate(divide="ignore", over="ignore"):
                if fam == "matern-3/2":
                    e = np.exp(-_SQRT3 * rho)
                    d2 = np.where(zero, 0.0, 3.0 * _SQRT3 * e / (4.0 * l**4 * safe))
                    res = [(1.0 + _SQRT3 * rho) * e, -1.5 * e / l**2, d2]
                else:  # matern-1/2
                    e = np.exp(-rho)
                    d1 = np.where(zero, 0.0, -e / (2.0 * l**2 * safe))
                    d2 = np.where(zero, 0.0, e * (1.0 + safe) / (4.0 * l**4 * safe**3))
                    res = [e, d1, d2]
        return tuple(res[: order + 1])

    def diag(self, d: int) -> float:
        """Value of ``k(x, x)``, the same for every ``x``."""
        return float(self.profile(np.zeros(1), d, order=0)[0][0])

    # -- batched evaluation ---------------------------------------------------

    def gram(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X, Y = _as_samples(X), _as_samples(Y)
        _check_dims(X, Y)
        R = X[:, None, :] - Y[None, :, :]
        return self.profile(np.einsum("ijd,ijd->ij", R, R), X.shape[1], order=0)[0]


def _as_samples(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected an (n, d) sample array, got shape {X.shape}")
    return X


def _check_dims(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")


def _pair(x, y) -> tuple[np.ndarray, float]:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("kernel inputs must be finite")
    r = x - y
    return r, float(r @ r)


def evaluate(spec: KernelSpec, x, y) -> float:
    """``k(x, y)`` for a single pair of points."""
    r, t = _pair(x, y)
    return float(spec.profile(np.array(t), r.size, order=0)[0])


def grad1(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of ``k`` in its first argument.

    For ``matern-1/2`` at ``x == y`` the gradient does not exist; zero is
    returned and a :class:`KernelSingularityWarning` is issued.
    """
    r, t = _pair(x, y)
    if t == 0.0 and not spec.twice_differentiable:
        warnings.warn("matern-1/2 is not differentiable at x == y; returning 0",
                      KernelSingularityWarning, stacklevel=2)
        return np.zeros_like(r)
    _, d1 = spec.profile(np.array(t), r.size, order=1)
    return 2.0 * float(d1) * r


def grad12(spec: KernelSpec, x, y) -> np.ndarray:
    """Mixed second derivatives ``d^2 k / dx_i dy_j`` as a (d, d) matrix."""
    r, t = _pair(x, y)
    if t == 0.0 and not spec.twice_differentiable:
        raise ValueError("matern-1/2 has no mixed second derivative at x == y")
    _, d1, d2 = spec.profile(np.array(t), r.size, order=2)
    return -2.0 * float(d1) * np.eye(r.size) - 4.0 * float(d2) * np.outer(r, r)


def median_heuristic(data, seed: int = 0, max_points: int = 2000) -> float:
    """Lengthscale ``sqrt(median ||y_i - y_j||^2 / 2)`` over distinct pairs.

    Above ``max_points`` rows a seeded subsample of that size is used.
    """
    Y = _as_samples(data)
    if Y.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    if Y.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        Y = Y[rng.choice(Y.shape[0], size=max_points, replace=False)]
    med = float(np.median(pdist(Y, "sqeuclidean")))
    if med <= 0.0:
        raise ValueError("median pairwise distance is zero; lengthscale would be 0")
    return math.sqrt(med / 2.0)
