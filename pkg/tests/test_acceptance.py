"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (printed in the terminal summary)
and then asserts, so a failing criterion is visible both ways. Settings that
the criteria leave open are pinned here and never tuned per run.
"""

import math
import time

import numpy as np
import pytest

from minmmd import latent
from minmmd.generators import (
    CoarseSDE,
    GAndK,
    GaussianLocation,
    GaussianScale,
    LotkaVolterra,
    MultiscaleSDE,
    StochasticVolatility,
    coarse_simulate,
    lv_simulate,
)
from minmmd.kernels import KernelSpec, median_heuristic
from minmmd.mmd import fd_gradient, godambe_mc, grad_estimate, metric_tensor, mmd2_uu
from minmmd.optim import FitConfig, fit
from minmmd.robustness import sweep_dirac, sweep_epsilon
from minmmd.theory import large_l_limit_variance, loc_asym_variance, loc_influence, scale_asym_variance

RESULTS = {}

DENSITY = KernelSpec("gaussian-density", 1.0)
# natural gradient with a 1/k schedule on minibatches; shared by the fitting criteria
LOCATION_FIT = dict(schedule="robbins-monro", eta0=1.0, exponent=1.0, method="natural-sgd")


def record(number, ok, detail):
    RESULTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[number]


# -- 1 ---------------------------------------------------------------------------

# family -> (model, lower corner, upper corner) of the parameter box sampled
GRADIENT_FAMILIES = {
    "gaussian-location": (GaussianLocation(d=2), [-2, -2], [2, 2]),
    "gaussian-scale": (GaussianScale(d=2), [-1], [1]),
    "g-and-k": (GAndK(), [1, 0.5, 0, 0], [4, 2, 2, 0.5]),
    "stoch-vol": (StochasticVolatility(T=10), [-1, -0.8, -2], [2, 0.8, 0]),
    "lotka-volterra": (LotkaVolterra(dt=1e-3, horizon=0.5, obs_times=(0.25, 0.5)), [80, 80], [120, 120]),
    "multiscale-sde": (MultiscaleSDE(eps=0.5), [-1, 0.3], [-0.2, 1]),
    "coarse-sde": (CoarseSDE(), [-1, 0.3], [-0.2, 1]),
}
SDE = {"lotka-volterra", "multiscale-sde", "coarse-sde"}


def test_01_gradient_correctness():
    # the lengthscale follows the data; a unit lengthscale on populations near
    # 100 makes every kernel value underflow and the loss flat to roundoff
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for family, (model, lo, hi) in GRADIENT_FAMILIES.items():
        lo, hi = np.array(lo, float), np.array(hi, float)
        for _ in range(10):
            theta = lo + rng.random(lo.size) * (hi - lo)
            seed = int(rng.integers(0, 2**31))
            u = model.sample_latent(20, seed, 0)
            Y = model.simulate(lo + rng.random(lo.size) * (hi - lo), 20, seed, 1)
            l = median_heuristic(np.asarray(Y).reshape(20, -1))
            for family_name in ("gaussian-rbf", "gaussian-density", "imq"):
                spec = KernelSpec(family_name, l)
                g = grad_estimate(spec, model, theta, u, Y).value
                f = fd_gradient(spec, model, theta, u, Y, h=1e-6)
                err = float(np.linalg.norm(g - f) / max(np.linalg.norm(f), 1e-300))
                worst[family] = max(worst.get(family, 0.0), err)
    elapsed = time.perf_counter() - start
    ok = all(e <= (1e-3 if f in SDE else 1e-5) for f, e in worst.items()) and elapsed < 120
    detail = ", ".join(f"{f} {e:.1e}" for f, e in worst.items())
    record(1, ok, f"max rel. error per family: {detail}; {elapsed:.0f} s")


# -- 2 ---------------------------------------------------------------------------


def test_02_unbiasedness():
    oracle = 2 * (2 * math.pi * 3) ** -0.5 * (1 - math.exp(-1 / 6))
    vals = np.empty(10_000)
    for r in range(vals.size):
        g = latent.generator(r, 0)
        vals[r] = mmd2_uu(DENSITY, g.standard_normal((50, 1)), 1 + g.standard_normal((50, 1)))
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    z = abs(vals.mean() - oracle) / se
    record(2, z <= 3, f"mean {vals.mean():.6f} vs {oracle:.6f} ({z:.2f} standard errors)")


# -- 3 ---------------------------------------------------------------------------


def test_03_clt_variance():
    model = GaussianLocation()
    target = 27 * 8**-1.5
    est = []
    for r in range(200):
        Y = model.simulate([0.0], 2000, 1000 + r)
        cfg = FitConfig(iterations=400, minibatch=100, seed=r, **LOCATION_FIT)
        est.append(fit(DENSITY, model, Y, [0.3], cfg).theta_hat[0])
    var = 2000 * np.var(est, ddof=1)
    record(3, abs(var / target - 1) <= 0.25, f"var of sqrt(m)(theta_hat - theta*) {var:.4f} vs {target:.4f}")


# -- 4 ---------------------------------------------------------------------------


def test_04_metric_closed_form():
    model = GaussianLocation()
    g = metric_tensor(DENSITY, model, [0.0], model.sample_latent(10_000, 0)).value[0, 0]
    target = (2 * math.pi) ** -0.5 * 3**-1.5
    record(4, abs(g / target - 1) <= 0.02, f"metric {g:.6f} vs {target:.6f} (ratio {g / target:.4f})")


# -- 5 ---------------------------------------------------------------------------


def test_05_godambe():
    loc = godambe_mc(DENSITY, GaussianLocation(), [0.0], 5000, 5000, seed=0).c[0, 0]
    scale = godambe_mc(DENSITY, GaussianScale(), [0.0], 5000, 5000, seed=0).c[0, 0]
    loc_ref, scale_ref = loc_asym_variance(1.0, 1.0, 1), scale_asym_variance(1.0, 0.0, 1)
    a = godambe_mc(KernelSpec.mixture([1.0, 2.0], [1.0, 1.0]), GaussianLocation(), [0.0], 500, 500, seed=1).c[0, 0]
    b = godambe_mc(KernelSpec.mixture([1.0, 2.0], [7.0, 7.0]), GaussianLocation(), [0.0], 500, 500, seed=1).c[0, 0]
    drift = abs(b / a - 1)
    ok = abs(loc / loc_ref - 1) <= 0.1 and abs(scale / scale_ref - 1) <= 0.1 and drift <= 1e-8
    record(5, ok, f"location C {loc:.4f} vs {loc_ref:.4f}, scale C {scale:.4f} vs {scale_ref:.4f}, "
                  f"amplitude drift {drift:.1e}")


# -- 6 ---------------------------------------------------------------------------


def test_06_critical_scaling():
    dims = [1, 10, 100, 1000, 10_000, 1_000_000]
    curves = {
        "location": lambda l, d: loc_asym_variance(l, 1.0, d),
        "scale": lambda l, d: scale_asym_variance(l, 0.0, d),
    }
    parts, ok = [], True
    for name, f in curves.items():
        quarter = [f(d**0.25, d) for d in dims]
        fifth = f(1e6**0.2, 1e6)
        bounded = max(quarter) <= 10 * quarter[0]
        blown = fifth > 1e3
        ok &= bounded and blown
        parts.append(f"{name}: max at d^1/4 {max(quarter):.3g}, at d^0.2 and d=1e6 {fifth:.3g}")
    record(6, ok, "; ".join(parts))


# -- 7 ---------------------------------------------------------------------------


def test_07_influence_linearisation():
    eps, z = 0.02, 3.0
    cfg = FitConfig(iterations=400, minibatch=100, **LOCATION_FIT)
    res = sweep_epsilon([0.0, eps], z, DENSITY, GaussianLocation(), [0.0], cfg, range(20), 20_000)
    th = {(r.value, r.seed): r.theta_hat[0] for r in res.rows}
    # paired with the clean fit on the same data, which removes the sampling error
    bias = float(np.mean([th[(eps, s)] - th[(0.0, s)] for s in range(20)]))
    target = eps * float(loc_influence(1.0, 1.0, 1, [0.0], [z])[0])
    record(7, abs(bias / target - 1) <= 0.3, f"bias {bias:.5f} vs eps * influence {target:.5f}")


# -- 8 ---------------------------------------------------------------------------


def test_08_redescending():
    grid = [float(z) for z in range(11)] + [100.0, 1000.0]
    cfg = FitConfig(iterations=300, minibatch=200, **LOCATION_FIT)
    med = sweep_dirac(grid, 0.2, DENSITY, GaussianLocation(), [0.0], cfg, range(5), 2000).median_error()
    interior = max(med[z] for z in grid[1:-1])
    record(8, med[1000.0] < interior, f"median error at z=1000 {med[1000.0]:.4f}, interior max {interior:.4f}")


# -- 9 ---------------------------------------------------------------------------


def test_09_large_lengthscale_limit():
    loc = large_l_limit_variance(GaussianLocation(), [0.0], 100_000, seed=0)[0, 0]
    scale = large_l_limit_variance(GaussianScale(), [0.0], 100_000, seed=0)[0, 0]
    loc_ref, scale_ref = loc_asym_variance(1e3, 1.0, 1), scale_asym_variance(1e3, 0.0, 1)
    ok = abs(loc / loc_ref - 1) <= 0.01 and abs(scale / scale_ref - 1) <= 0.05
    record(9, ok, f"location {loc:.5f} vs {loc_ref:.5f}, scale {scale:.5f} vs {scale_ref:.5f}")


# -- 10 --------------------------------------------------------------------------


def test_10_natural_gradient_advantage():
    # step sizes picked per method by final loss on a coarse grid, not by error
    model, spec = GAndK(), KernelSpec("gaussian-rbf", 2.0)
    truth = np.array([3.0, 1.0, 1.0, -math.log(2.0)])
    theta0 = truth + np.array([0.0, 0.0, 1.0, 0.5])
    settings = {"sgd": dict(eta0=0.5), "natural-sgd": dict(eta0=0.05, ridge=1e-2)}
    med = {}
    for method, extra in settings.items():
        errs = []
        for seed in range(5):
            Y = model.simulate(truth, 30_000, seed, 1 << 40)
            cfg = FitConfig(iterations=500, minibatch=200, n_sim=200, method=method, seed=seed, **extra)
            th = fit(spec, model, Y, theta0, cfg).theta_hat
            errs.append(float(np.abs(th[2:] - truth[2:]).sum()))
        med[method] = float(np.median(errs))
    record(10, med["natural-sgd"] < med["sgd"],
           f"median (theta_3, theta_4) error natural {med['natural-sgd']:.3f} vs sgd {med['sgd']:.3f}")


# -- 11 --------------------------------------------------------------------------


def test_11_sde_sensitivities():
    dt, T = 1e-4, 0.1
    W = latent.brownian_increments(round(T / dt), 10, dt, 3, seed=0)
    theta = np.array([100.0, 100.0])
    delta = np.array([6e-5, 8e-5])
    p, q = lv_simulate(theta, W, dt=dt, horizon=T), lv_simulate(theta + delta, W, dt=dt, horizon=T)
    pred = p.sensitivities[:, -1] @ delta
    lv_err = float(np.max(np.linalg.norm(pred - (q.states[:, -1] - p.states[:, -1]), axis=1)
                          / np.linalg.norm(pred, axis=1)))
    lv_start = np.array_equal(p.sensitivities[:, 0], np.broadcast_to(np.eye(2), (10, 2, 2)))

    Wc = latent.brownian_increments(round(T / dt), 10, dt, 1, seed=1)
    th = np.array([-0.5, 0.5])
    dc = np.array([6e-5, 8e-5])
    a, b = coarse_simulate(th, Wc, dt=dt, horizon=T), coarse_simulate(th + dc, Wc, dt=dt, horizon=T)
    cpred = a.sensitivities[:, -1] @ dc
    c_err = float(np.max(np.linalg.norm(cpred - (b.states[:, -1] - a.states[:, -1]), axis=1)
                         / np.linalg.norm(cpred, axis=1)))
    c_start = bool(np.all(a.sensitivities[:, 0] == 0.0))
    ok = lv_err <= 0.05 and c_err <= 0.05 and lv_start and c_start
    record(11, ok, f"Lotka-Volterra rel. error {lv_err:.1e}, coarse rel. error {c_err:.1e}, "
                   f"initial sensitivities exact: {lv_start and c_start}")


# -- 12 --------------------------------------------------------------------------


def test_12_coarse_graining_trend():
    theta = np.array([-0.5, math.sqrt(0.5)])
    spec = KernelSpec("gaussian-rbf", 1.0)
    coarse = CoarseSDE()
    means = []
    for eps in (1.0, 0.5, 0.1):
        fine = MultiscaleSDE(eps=eps)
        means.append(float(np.mean([mmd2_uu(spec, fine.simulate(theta, 100, r, 0), coarse.simulate(theta, 100, r, 1))
                                     for r in range(20)])))
    ok = means[0] > means[1] > means[2]
    record(12, ok, "mean mmd2_uu at eps 1, 0.5, 0.1: " + ", ".join(f"{v:.3g}" for v in means))


# -- 13 --------------------------------------------------------------------------


def test_13_median_heuristic_scaling():
    l25 = median_heuristic(latent.generator(0, 0).standard_normal((2000, 25)))
    l100 = median_heuristic(latent.generator(0, 1).standard_normal((2000, 100)))
    ratio = l100 / l25
    record(13, abs(ratio / 2 - 1) <= 0.1, f"l(100) / l(25) = {ratio:.4f}")


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    request.config._acceptance_lines = [RESULTS[k] for k in sorted(RESULTS)]
