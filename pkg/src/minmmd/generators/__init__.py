"""Parametric generators ``x = G(theta, u)`` with analytic Jacobians."""

from .base import DomainError, GeneratorModel
from .normal import inv_norm_cdf
from .sde import (
    CoarseSDE,
    LotkaVolterra,
    MultiscaleSDE,
    PathWithSensitivity,
    coarse_simulate,
    lv_simulate,
    multiscale_simulate,
)
from .static import GAndK, GaussianLocation, GaussianScale, StochasticVolatility, sv_simulate

MODEL_FAMILIES = {
    cls.family: cls
    for cls in (GaussianLocation, GaussianScale, GAndK, StochasticVolatility,
                LotkaVolterra, MultiscaleSDE, CoarseSDE)
}


def make_model(config: dict) -> GeneratorModel:
    """Build a model from ``{"family": ..., **hyperparameters}``."""
    config = dict(config)
    family = config.pop("family", None)
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(MODEL_FAMILIES)}")
    try:
        return MODEL_FAMILIES[family](**config)
    except TypeError as exc:
        raise ValueError(f"bad hyperparameters for {family}: {exc}") from None


__all__ = [
    "CoarseSDE",
    "DomainError",
    "GAndK",
    "GaussianLocation",
    "GaussianScale",
    "GeneratorModel",
    "LotkaVolterra",
    "MODEL_FAMILIES",
    "MultiscaleSDE",
    "PathWithSensitivity",
    "StochasticVolatility",
    "coarse_simulate",
    "inv_norm_cdf",
    "lv_simulate",
    "make_model",
    "multiscale_simulate",
    "sv_simulate",
]
