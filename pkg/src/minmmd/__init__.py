"""Minimum-MMD estimation for generative models."""

# generators must load before latent: latent reuses the normal quantile
from . import generators, kernels, latent  # noqa: I001
from .generators import make_model
from .kernels import KernelSpec
from .latent import LatentDraws

__version__ = "0.1.0"

__all__ = ["KernelSpec", "LatentDraws", "generators", "kernels", "latent", "make_model"]
