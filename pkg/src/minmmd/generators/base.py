"""Shared plumbing for generative models."""

from __future__ import annotations

import numpy as np

from ..latent import LatentDraws


class DomainError(ValueError):
    """Parameter vector outside the model's admissible set."""


def latent_values(u) -> np.ndarray:
    return u.values if isinstance(u, LatentDraws) else np.asarray(u, dtype=float)


class GeneratorModel:
    """Base class for a parametric push-forward ``x = G(theta, u)``.

    Subclasses set ``family``, ``param_dim`` and ``data_dim`` and implement
    :meth:`sample_latent`, :meth:`push_forward` and :meth:`jacobian`.
    Jacobians are returned as ``(n, data_dim, param_dim)`` arrays.
    """

    family = ""
    param_dim: int
    data_dim: int

    def sample_latent(self, n: int, seed: int, stream: int = 0) -> LatentDraws:
        raise NotImplementedError

    def push_forward(self, theta, u) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, theta, u) -> np.ndarray:
        raise NotImplementedError

    def forward_and_jacobian(self, theta, u) -> tuple[np.ndarray, np.ndarray]:
        return self.push_forward(theta, u), self.jacobian(theta, u)

    def simulate(self, theta, n: int, seed: int, stream: int = 0) -> np.ndarray:
        """Draw ``n`` observations at ``theta`` from a fresh latent stream."""
        return self.push_forward(theta, self.sample_latent(n, seed, stream))

    def check_domain(self, theta) -> np.ndarray:
        """Validate ``theta`` and return it as a float vector."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.param_dim,):
            raise DomainError(f"{self.family} expects {self.param_dim} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise DomainError(f"non-finite parameter {theta}")
        return theta

    def in_domain(self, theta) -> bool:
        try:
            self.check_domain(theta)
        except DomainError:
            return False
        return True

    def to_dict(self) -> dict:
        return {"family": self.family}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "family")
        return f"{type(self).__name__}({args})"
