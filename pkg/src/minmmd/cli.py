"""Command-line front end.

Every command reads a JSON config, validates all of it before computing
anything, writes its CSV atomically and drops a JSON manifest next to it. The
manifest holds the fully resolved config, so ``minmmd <command> --config
out/<command>.manifest.json`` reproduces the CSV byte for byte.

Exit status is 0 on success, 2 for configuration errors and 1 for failures
during the run.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, theory
from .generators import MODEL_FAMILIES, DomainError, make_model
from .kernels import KernelSpec
from .mmd import fd_gradient, godambe_mc, grad_estimate, mmd2_uu
from .optim import FitConfig, fit
from .robustness import DATA_STREAM, sweep_dirac, sweep_epsilon

COMMANDS = ("fit", "landscape", "variance", "influence", "robustness", "gradcheck", "godambe")
THREADS_ENV = "MINMMD_THREADS"

# starting points used by gradcheck when the config does not name one
DEFAULT_THETA = {
    "gaussian-location": [0.3],
    "gaussian-scale": [0.2],
    "g-and-k": [3.0, 1.0, 1.0, -math.log(2.0)],
    "stoch-vol": [1.0, 0.0, -1.0],
    "lotka-volterra": [100.0, 100.0],
    "multiscale-sde": [-0.5, 0.5],
    "coarse-sde": [-0.5, 0.5],
}
# minibatched natural gradient with a 1/k schedule; full-batch sweeps are slow
ROBUSTNESS_FIT = {"iterations": 300, "minibatch": 200, "schedule": "robbins-monro", "eta0": 1.0,
                  "exponent": 1.0, "method": "natural-sgd"}
SDE_FAMILIES = ("lotka-volterra", "multiscale-sde", "coarse-sde")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


# -- config handling ----------------------------------------------------------


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{path} line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError("--config", "top level must be a JSON object")
    obj.pop("artifact", None)
    return obj


def _get(cfg: dict, key: str, default=None, kind=None):
    value = cfg.get(key, default)
    if value is None:
        return None
    if kind is not None:
        try:
            value = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected {kind.__name__}, got {value!r}") from None
    return value


def _float_list(cfg: dict, key: str, default=None) -> list[float]:
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(key, "required")
    if not isinstance(value, list):
        value = [value]
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(key, "expected a list of numbers") from None
    if not out:
        raise ConfigError(key, "grid must not be empty")
    return out


def _model(cfg: dict, default: dict | None = None):
    spec = cfg.get("model", default)
    if not isinstance(spec, dict):
        raise ConfigError("model", "expected an object with a 'family' entry")
    try:
        return make_model(spec)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None


def _kernel(obj, field: str = "kernel") -> KernelSpec:
    if not isinstance(obj, dict):
        raise ConfigError(field, "expected a kernel object")
    try:
        return KernelSpec.from_dict(obj)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(field, str(exc)) from None


def _fit_config(cfg: dict, seed: int, default: dict | None = None) -> FitConfig:
    obj = dict(cfg.get("fit", default or {}))
    obj["seed"] = seed
    try:
        return FitConfig.from_dict(obj)
    except (ValueError, TypeError) as exc:
        raise ConfigError("fit", str(exc)) from None


def _theta(cfg: dict, key: str, model, default=None) -> np.ndarray:
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(key, "required")
    try:
        return model.check_domain(value)
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigError(key, str(exc)) from None


def _data(cfg: dict, model, seed: int, default: dict | None = None) -> tuple[np.ndarray, dict]:
    obj = cfg.get("data", default)
    if not isinstance(obj, dict):
        raise ConfigError("data", "expected {'theta': [...], 'm': N} or {'csv': path}")
    if "csv" in obj:
        path = Path(obj["csv"])
        if not path.is_file():
            raise ConfigError("data.csv", f"file {path} does not exist")
        try:
            Y = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise ConfigError("data.csv", str(exc)) from None
        if Y.shape[1] != model.data_dim:
            raise ConfigError("data.csv", f"expected {model.data_dim} columns, got {Y.shape[1]}")
        return Y, obj
    theta = _theta(obj, "theta", model)
    m = _get(obj, "m", 1000, int)
    if m < 2:
        raise ConfigError("data.m", "need at least two data points")
    stream = _get(obj, "stream", DATA_STREAM, int)
    resolved = {"theta": theta.tolist(), "m": m, "stream": stream}
    return lambda: np.asarray(model.simulate(theta, m, seed, stream)).reshape(m, -1), resolved


# -- output -------------------------------------------------------------------


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def write_outputs(out: Path, command: str, csv_text: str, resolved: dict) -> Path:
    csv_path = out / f"{command}.csv"
    manifest = copy.deepcopy(resolved)
    manifest["artifact"] = {"version": __version__, "csv": csv_path.name}
    atomic_write(csv_path, csv_text)
    atomic_write(out / f"{command}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path


# -- commands -----------------------------------------------------------------
# Each prepare_* validates the config and returns (resolved config, job); the
# job runs only after every check has passed and returns the CSV text.


def prepare_fit(cfg: dict, seed: int):
    model = _model(cfg)
    kernel = _kernel(cfg.get("kernel", {"family": "gaussian-rbf", "lengthscale": 1.0}))
    fcfg = _fit_config(cfg, seed)
    data, data_resolved = _data(cfg, model, seed)
    theta0 = _theta(cfg, "theta0", model)
    resolved = {"command": "fit", "seed": seed, "model": model.to_dict(), "kernel": kernel.to_dict(),
                "fit": {k: v for k, v in fcfg.to_dict().items() if k != "seed"},
                "data": data_resolved, "theta0": theta0.tolist()}

    def job():
        Y = data() if callable(data) else data
        trace = fit(kernel, model, Y, theta0, fcfg)
        buf = io.StringIO()
        trace.to_csv(buf)
        return buf.getvalue()

    return resolved, job


def prepare_landscape(cfg: dict, seed: int):
    model = _model(cfg, {"family": "gaussian-location"})
    data, data_resolved = _data(cfg, model, seed, {"theta": [0.0] * model.param_dim, "m": 1000})
    kernels = cfg.get("kernels", [{"family": "gaussian-rbf", "lengthscale": l} for l in (0.1, 1.0, 10.0)])
    if not isinstance(kernels, list) or not kernels:
        raise ConfigError("kernels", "expected a non-empty list of kernel objects")
    specs = [_kernel(k, f"kernels[{i}]") for i, k in enumerate(kernels)]
    grid = cfg.get("grid", {})
    lo, hi = _get(grid, "min", -3.0, float), _get(grid, "max", 3.0, float)
    points = _get(grid, "points", 61, int)
    index = _get(grid, "index", 0, int)
    if points < 2 or not hi > lo:
        raise ConfigError("grid", "need max > min and at least two points")
    if not 0 <= index < model.param_dim:
        raise ConfigError("grid.index", f"must lie in [0, {model.param_dim})")
    base = _theta(cfg, "theta", model, data_resolved.get("theta"))
    n = _get(cfg, "n", 1000, int)
    if n < 2:
        raise ConfigError("n", "need at least two simulated points")
    values = np.linspace(lo, hi, points)
    resolved = {"command": "landscape", "seed": seed, "model": model.to_dict(), "data": data_resolved,
                "kernels": [k.to_dict() for k in specs], "n": n, "theta": base.tolist(),
                "grid": {"min": lo, "max": hi, "points": points, "index": index}}

    def job():
        Y = data() if callable(data) else data
        u = model.sample_latent(n, seed, 0)
        rows = []
        for i, spec in enumerate(specs):
            for v in values:
                theta = base.copy()
                theta[index] = v
                try:
                    loss = mmd2_uu(spec, model.push_forward(theta, u), Y)
                except DomainError:
                    loss = math.nan
                rows.append([i, spec.family, _num(spec.l)] + [_num(t) for t in theta] + [_num(loss), seed])
        header = ["kernel_index", "kernel_family", "lengthscale"] + \
            [f"theta_{j + 1}" for j in range(model.param_dim)] + ["mmd2_uu", "seed"]
        return _csv_text(header, rows)

    return resolved, job


def _theory_grid(cfg: dict):
    kind = cfg.get("model", "location")
    if kind not in ("location", "scale"):
        raise ConfigError("model", "expected 'location' or 'scale'")
    ls = _float_list(cfg, "l", [0.1, 1.0, 10.0])
    ds = _float_list(cfg, "d", [1.0])
    if any(l <= 0 for l in ls):
        raise ConfigError("l", "lengthscales must be positive")
    if any(d < 1 for d in ds):
        raise ConfigError("d", "dimensions must be at least 1")
    param = _get(cfg, "sigma", 1.0, float) if kind == "location" else _get(cfg, "theta_star", 0.0, float)
    if kind == "location" and not param > 0:
        raise ConfigError("sigma", "must be positive")
    return kind, ls, ds, param


def prepare_variance(cfg: dict, seed: int):
    kind, ls, ds, param = _theory_grid(cfg)
    pname = "sigma" if kind == "location" else "theta_star"
    resolved = {"command": "variance", "seed": seed, "model": kind, pname: param, "l": ls, "d": ds}

    def job():
        rows = []
        for d in ds:
            for l in ls:
                if kind == "location":
                    var, gross = theory.loc_asym_variance(l, param, d), theory.loc_gross_sensitivity(l, param, d)
                else:
                    var, gross = theory.scale_asym_variance(l, param, d), theory.scale_gross_sensitivity(l, param, d)
                rows.append([_num(l), _num(d), _num(var), _num(gross), seed])
        return _csv_text(["l", "d", "asym_variance", "gross_sensitivity", "seed"], rows)

    return resolved, job


def prepare_influence(cfg: dict, seed: int):
    kind, ls, ds, param = _theory_grid(cfg)
    zs = _float_list(cfg, "z", [0.0, 1.0, 2.0, 3.0, 5.0, 10.0])
    pname = "sigma" if kind == "location" else "theta_star"
    resolved = {"command": "influence", "seed": seed, "model": kind, pname: param, "l": ls, "d": ds, "z": zs}

    def job():
        rows = []
        for d in ds:
            for l in ls:
                for z in zs:
                    # the outlier sits at distance z from the centre along the first axis
                    if kind == "location":
                        point = np.zeros(int(d))
                        point[0] = z
                        value = theory.loc_influence(l, param, d, np.zeros(int(d)), point)[0]
                    else:
                        value = theory.scale_influence(l, param, d, z)
                    rows.append([_num(l), _num(d), _num(z), _num(value), seed])
        return _csv_text(["l", "d", "z", "influence", "seed"], rows)

    return resolved, job


def prepare_robustness(cfg: dict, seed: int):
    model = _model(cfg, {"family": "gaussian-location"})
    kernel = _kernel(cfg.get("kernel", {"family": "gaussian-density", "lengthscale": 1.0}))
    fcfg = _fit_config(cfg, seed, ROBUSTNESS_FIT)
    sweep = cfg.get("sweep", "dirac")
    if sweep not in ("dirac", "epsilon"):
        raise ConfigError("sweep", "expected 'dirac' or 'epsilon'")
    theta_star = _theta(cfg, "theta_star", model, [0.0] * model.param_dim)
    theta0 = _theta(cfg, "theta0", model, theta_star.tolist())
    m = _get(cfg, "m", 2000, int)
    seeds = cfg.get("seeds", [seed])
    if not isinstance(seeds, list) or not seeds or any(not isinstance(s, int) or s < 0 for s in seeds):
        raise ConfigError("seeds", "expected a non-empty list of non-negative integers")
    mode = cfg.get("mode", "deterministic-count")
    if mode not in ("deterministic-count", "bernoulli"):
        raise ConfigError("mode", "expected 'deterministic-count' or 'bernoulli'")
    workers = _get(cfg, "workers", 1, int)
    if workers < 1:
        raise ConfigError("workers", "must be at least 1")
    if sweep == "dirac":
        grid = _float_list(cfg, "z", [float(z) for z in range(11)] + [100.0, 1000.0])
        fixed = _get(cfg, "eps", 0.2, float)
        if not 0 <= fixed <= 1:
            raise ConfigError("eps", "must lie in [0, 1]")
    else:
        grid = _float_list(cfg, "eps", [0.0, 0.05, 0.1, 0.15, 0.2])
        if any(not 0 <= e <= 1 for e in grid):
            raise ConfigError("eps", "every fraction must lie in [0, 1]")
        fixed = _get(cfg, "z", 10.0, float)
    resolved = {"command": "robustness", "seed": seed, "model": model.to_dict(), "kernel": kernel.to_dict(),
                "fit": {k: v for k, v in fcfg.to_dict().items() if k != "seed"}, "sweep": sweep,
                "theta_star": theta_star.tolist(), "theta0": theta0.tolist(), "m": m, "seeds": seeds,
                "mode": mode, "workers": workers, ("z" if sweep == "dirac" else "eps"): grid,
                ("eps" if sweep == "dirac" else "z"): fixed}

    def job():
        if sweep == "dirac":
            result = sweep_dirac(grid, fixed, kernel, model, theta_star, fcfg, seeds, m, theta0, mode, workers)
        else:
            result = sweep_epsilon(grid, fixed, kernel, model, theta_star, fcfg, seeds, m, theta0, mode, workers)
        buf = io.StringIO()
        result.to_csv(buf)
        return buf.getvalue()

    return resolved, job


def prepare_gradcheck(cfg: dict, seed: int):
    families = cfg.get("families", list(MODEL_FAMILIES))
    if not isinstance(families, list) or not families:
        raise ConfigError("families", "expected a non-empty list")
    unknown = [f for f in families if f not in MODEL_FAMILIES]
    if unknown:
        raise ConfigError("families", f"unknown families {unknown}")
    kernels = cfg.get("kernels", [{"family": f, "lengthscale": 1.0}
                                  for f in ("gaussian-rbf", "gaussian-density", "imq")])
    if not isinstance(kernels, list) or not kernels:
        raise ConfigError("kernels", "expected a non-empty list of kernel objects")
    specs = [_kernel(k, f"kernels[{i}]") for i, k in enumerate(kernels)]
    n = _get(cfg, "n", 20, int)
    m = _get(cfg, "m", 20, int)
    h = _get(cfg, "h", 1e-6, float)
    if n < 2 or m < 2:
        raise ConfigError("n", "need at least two simulated and two data points")
    resolved = {"command": "gradcheck", "seed": seed, "families": families,
                "kernels": [k.to_dict() for k in specs], "n": n, "m": m, "h": h}

    def job():
        rows = []
        for family in families:
            model = make_model({"family": family})
            theta = np.asarray(DEFAULT_THETA[family])
            Y = model.simulate(theta * 1.1 + 0.05, m, seed, 1)
            u = model.sample_latent(n, seed, 0)
            tol = 1e-3 if family in SDE_FAMILIES else 1e-5
            worst = 0.0
            for spec in specs:
                g = grad_estimate(spec, model, theta, u, Y).value
                f = fd_gradient(spec, model, theta, u, Y, h)
                worst = max(worst, float(np.linalg.norm(g - f) / max(np.linalg.norm(f), 1e-300)))
            rows.append([family, _num(worst), _num(tol), str(worst <= tol).lower(), seed])
        return _csv_text(["family", "max_rel_error", "tolerance", "pass", "seed"], rows)

    return resolved, job


def prepare_godambe(cfg: dict, seed: int):
    model = _model(cfg, {"family": "gaussian-location"})
    kernel = _kernel(cfg.get("kernel", {"family": "gaussian-density", "lengthscale": 1.0}))
    theta = _theta(cfg, "theta", model, [0.0] * model.param_dim)
    n_outer = _get(cfg, "n_outer", 2000, int)
    n_inner = _get(cfg, "n_inner", 2000, int)
    if n_outer < 2 or n_inner < 2:
        raise ConfigError("n_inner", "need at least two inner and two outer draws")
    resolved = {"command": "godambe", "seed": seed, "model": model.to_dict(), "kernel": kernel.to_dict(),
                "theta": theta.tolist(), "n_outer": n_outer, "n_inner": n_inner}

    def job():
        est = godambe_mc(kernel, model, theta, n_outer, n_inner, seed)
        p = theta.size
        rows = [[i + 1, j + 1, _num(est.g[i, j]), _num(est.sigma[i, j]), _num(est.c[i, j]), seed]
                for i in range(p) for j in range(p)]
        return _csv_text(["i", "j", "g", "sigma", "c", "seed"], rows)

    return resolved, job


PREPARE = {
    "fit": prepare_fit,
    "landscape": prepare_landscape,
    "variance": prepare_variance,
    "influence": prepare_influence,
    "robustness": prepare_robustness,
    "gradcheck": prepare_gradcheck,
    "godambe": prepare_godambe,
}


# -- entry point --------------------------------------------------------------


def _thread_cap(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env is None or env == "":
        return None
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(THREADS_ENV, "must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minmmd", description="Minimum-MMD estimation experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file (a manifest from an earlier run works too)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
        p.add_argument("--threads", type=int, help=f"cap BLAS threads (default: ${THREADS_ENV} or no cap)")
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if cfg.get("command", args.command) != args.command:
            raise ConfigError("command", f"config is for {cfg['command']!r}, not {args.command!r}")
        seed = args.seed if args.seed is not None else _get(cfg, "seed", 0, int)
        if seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        threads = _thread_cap(args.threads)
        resolved, job = PREPARE[args.command](cfg, seed)
    except ConfigError as exc:
        print(f"minmmd: config error: {exc}", file=sys.stderr)
        return 2

    try:
        with threadpool_limits(limits=threads):
            text = job()
        path = write_outputs(Path(args.out), args.command, text, resolved)
    except Exception as exc:  # noqa: BLE001 - report and exit non-zero
        print(f"minmmd: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def main() -> None:
    sys.exit(run())
