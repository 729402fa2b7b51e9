"""Contaminated data sets and robustness sweeps.

A sweep fits the model to clean data from ``theta_star`` in which a fraction
``eps`` of the points has been replaced, either by a fixed outlier ``z`` or by
draws from the model at another parameter. Every (sweep value, seed) row
reuses the same clean data and the same fit seed, so rows differ only through
the contamination.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import latent
from .kernels import KernelSpec, _as_samples
from .optim import FitConfig, fit

__all__ = [
    "ContaminationSpec",
    "SweepResult",
    "SweepRow",
    "contaminate",
    "contaminate_with_model",
    "sweep_dirac",
    "sweep_epsilon",
]

MODES = ("deterministic-count", "bernoulli")
DATA_STREAM = 1 << 40


@dataclass(frozen=True)
class ContaminationSpec:
    """Replace a fraction ``eps`` of the data by the point ``z``.

    ``deterministic-count`` replaces exactly ``floor(eps * m)`` points chosen
    without replacement; ``bernoulli`` replaces each point independently with
    probability ``eps``.
    """

    eps: float
    z: tuple | float = 0.0
    mode: str = "deterministic-count"

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def _replaced(m: int, eps: float, mode: str, seed: int) -> np.ndarray:
    rng = latent.generator(seed, 0, 2)
    if mode == "bernoulli":
        return np.flatnonzero(rng.random(m) < eps)
    count = math.floor(eps * m + 1e-12)
    return np.sort(rng.choice(m, size=count, replace=False))


def contaminate(data, spec: ContaminationSpec, seed: int) -> np.ndarray:
    """Copy of ``data`` with the rows selected by ``spec`` set to ``spec.z``."""
    Y = _as_samples(data).copy()
    z = np.broadcast_to(np.asarray(spec.z, dtype=float), (Y.shape[1],))
    Y[_replaced(Y.shape[0], spec.eps, spec.mode, seed)] = z
    return Y


def contaminate_with_model(data, eps: float, model, theta_corrupt, seed: int,
                           mode: str = "deterministic-count") -> np.ndarray:
    """Copy of ``data`` with a fraction ``eps`` replaced by model draws at
    ``theta_corrupt``."""
    ContaminationSpec(eps, 0.0, mode)
    Y = _as_samples(data).copy()
    idx = _replaced(Y.shape[0], eps, mode, seed)
    if idx.size:
        Y[idx] = _as_samples(model.simulate(theta_corrupt, idx.size, seed, DATA_STREAM + 1))
    return Y


@dataclass
class SweepRow:
    value: float
    seed: int
    theta_hat: np.ndarray
    l1_error: float
    error: str | None = None


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def values(self) -> list:
        return sorted({r.value for r in self.rows})

    def median_error(self) -> dict:
        """Median l1 error across seeds for each sweep value (failed rows skipped)."""
        out = {}
        for v in self.values():
            errs = [r.l1_error for r in self.rows if r.value == v and r.error is None]
            out[v] = float(np.median(errs)) if errs else math.nan
        return out

    def to_csv(self, path_or_file) -> None:
        p = max((r.theta_hat.size for r in self.rows), default=0)
        header = ["sweep_value", "seed"] + [f"theta_hat_{i + 1}" for i in range(p)] + ["l1_error"]

        def write(fh):
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for r in self.rows:
                w.writerow([repr(float(r.value)), r.seed] + [repr(float(t)) for t in r.theta_hat]
                           + [repr(float(r.l1_error))])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                write(fh)


def _row(task) -> SweepRow:
    value, eps, z, seed, kernel, model, theta_star, theta0, cfg, m, mode = task
    try:
        clean = model.simulate(theta_star, m, seed, DATA_STREAM)
        data = contaminate(clean, ContaminationSpec(eps, z, mode), seed)
        th = fit(kernel, model, data, theta0, replace(cfg, seed=seed)).theta_hat
        return SweepRow(value, seed, th, float(np.abs(th - theta_star).sum()))
    except Exception as exc:  # noqa: BLE001 - record and carry on
        nan = np.full(theta_star.size, math.nan)
        return SweepRow(value, seed, nan, math.nan, f"{type(exc).__name__}: {exc}")


def _sweep(pairs, kernel: KernelSpec, model, theta_star, cfg: FitConfig, seeds, m: int,
           theta0, mode: str, label: str, workers: int) -> SweepResult:
    theta_star = np.asarray(theta_star, dtype=float).reshape(-1)
    theta0 = theta_star if theta0 is None else np.asarray(theta0, dtype=float)
    result = SweepResult(metadata={"sweep": label, "kernel": kernel.to_dict(), "model": model.to_dict(),
                                   "fit": cfg.to_dict(), "m": m, "mode": mode,
                                   "theta_star": theta_star.tolist(), "seeds": list(seeds)})
    tasks = [(value, eps, z, int(seed), kernel, model, theta_star, theta0, cfg, m, mode)
             for seed in seeds for value, eps, z in pairs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            result.rows = list(pool.map(_row, tasks))
    else:
        result.rows = [_row(t) for t in tasks]
    return result


def sweep_dirac(z_grid, eps: float, kernel: KernelSpec, model, theta_star, cfg: FitConfig, seeds,
                m: int, theta0=None, mode: str = "deterministic-count", workers: int = 1) -> SweepResult:
    """Fit at each outlier location in ``z_grid`` with fixed fraction ``eps``.

    Rows are independent; ``workers > 1`` runs them in a process pool with
    identical results.
    """
    if len(z_grid) == 0:
        raise ValueError("empty z grid")
    pairs = [(float(np.ravel(z)[0]) if np.ndim(z) else float(z), eps, z) for z in z_grid]
    return _sweep(pairs, kernel, model, theta_star, cfg, seeds, m, theta0, mode, "dirac", workers)


def sweep_epsilon(eps_grid, z, kernel: KernelSpec, model, theta_star, cfg: FitConfig, seeds,
                  m: int, theta0=None, mode: str = "deterministic-count", workers: int = 1) -> SweepResult:
    """Fit at each contamination fraction in ``eps_grid`` with the outlier fixed at ``z``."""
    if len(eps_grid) == 0:
        raise ValueError("empty eps grid")
    pairs = [(float(e), float(e), z) for e in eps_grid]
    return _sweep(pairs, kernel, model, theta_star, cfg, seeds, m, theta0, mode, "epsilon", workers)
