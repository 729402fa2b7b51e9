import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minmmd.generators import GaussianLocation, LotkaVolterra
from minmmd.kernels import KernelSpec
from minmmd.optim import FitConfig, fit
from minmmd.robustness import (
    DATA_STREAM,
    ContaminationSpec,
    contaminate,
    contaminate_with_model,
    sweep_dirac,
    sweep_epsilon,
)
from minmmd.theory import loc_gross_sensitivity, loc_influence

DENSITY = KernelSpec("gaussian-density", 1.0)
FIT = FitConfig(iterations=300, minibatch=200, schedule="robbins-monro", eta0=1.0, exponent=1.0,
                method="natural-sgd")


def test_zero_fraction_is_bit_exact(rng):
    Y = rng.standard_normal((50, 2))
    assert np.array_equal(contaminate(Y, ContaminationSpec(0.0, [5.0, 5.0]), 1), Y)


def test_full_fraction_replaces_everything(rng):
    Y = rng.standard_normal((20, 2))
    assert np.all(contaminate(Y, ContaminationSpec(1.0, [3.0, -1.0]), 1) == [3.0, -1.0])


def test_count_mode_floor():
    Y = np.zeros((10, 1))
    out = contaminate(Y, ContaminationSpec(0.25, 7.0), 4)
    assert int(np.sum(out == 7.0)) == 2


@given(m=st.integers(1, 500), eps=st.floats(0, 1), seed=st.integers(0, 10**6))
def test_count_mode_exact_and_reproducible(m, eps, seed):
    Y = np.arange(m, dtype=float)[:, None]
    a = contaminate(Y, ContaminationSpec(eps, -1.0), seed)
    b = contaminate(Y, ContaminationSpec(eps, -1.0), seed)
    assert np.array_equal(a, b) and a.shape == Y.shape
    assert int(np.sum(a == -1.0)) == math.floor(eps * m + 1e-12)


def test_bernoulli_rate():
    Y = np.zeros((20_000, 1))
    frac = np.mean(contaminate(Y, ContaminationSpec(0.3, 1.0, "bernoulli"), 2) == 1.0)
    assert frac == pytest.approx(0.3, abs=0.015)


def test_input_not_modified(rng):
    Y = rng.standard_normal((10, 1))
    before = Y.copy()
    contaminate(Y, ContaminationSpec(0.5, 9.0), 0)
    assert np.array_equal(Y, before)


@pytest.mark.parametrize("kwargs", [dict(eps=-0.1), dict(eps=1.5), dict(eps=0.1, mode="poisson")])
def test_invalid_contamination(kwargs):
    with pytest.raises(ValueError):
        ContaminationSpec(**kwargs)


def test_contaminate_with_model():
    lv = LotkaVolterra(dt=1e-2, horizon=0.5, obs_times=(0.25, 0.5))
    Y = lv.simulate([100.0, 100.0], 40, 0, 1)
    out = contaminate_with_model(Y, 0.25, lv, [50.0, 50.0], seed=3)
    changed = np.any(out != Y, axis=1)
    assert changed.sum() == 10 and out.shape == Y.shape


def test_sweep_shape_csv_and_reproducibility():
    m = GaussianLocation()
    cfg = FitConfig(iterations=20, minibatch=50, eta0=0.5, method="natural-sgd")
    a = sweep_dirac([0.0, 5.0], 0.1, DENSITY, m, [0.0], cfg, [0, 1], 200)
    b = sweep_dirac([0.0, 5.0], 0.1, DENSITY, m, [0.0], cfg, [0, 1], 200)
    assert len(a.rows) == 4 and {(r.value, r.seed) for r in a.rows} == {(0.0, 0), (5.0, 0), (0.0, 1), (5.0, 1)}
    fa, fb = io.StringIO(), io.StringIO()
    a.to_csv(fa)
    b.to_csv(fb)
    assert fa.getvalue() == fb.getvalue()
    assert fa.getvalue().splitlines()[0] == "sweep_value,seed,theta_hat_1,l1_error"
    assert a.metadata["sweep"] == "dirac" and a.metadata["fit"]["iterations"] == 20


def test_sweep_workers_give_identical_rows():
    m = GaussianLocation()
    cfg = FitConfig(iterations=10, minibatch=50, eta0=0.5)
    serial = sweep_epsilon([0.0, 0.1], 4.0, DENSITY, m, [0.0], cfg, [0, 1], 100)
    pooled = sweep_epsilon([0.0, 0.1], 4.0, DENSITY, m, [0.0], cfg, [0, 1], 100, workers=2)
    assert [(r.value, r.seed, r.theta_hat.tolist()) for r in serial.rows] == \
           [(r.value, r.seed, r.theta_hat.tolist()) for r in pooled.rows]


def test_sweep_records_failures():
    m = GaussianLocation()
    res = sweep_dirac([0.0], 0.1, KernelSpec("matern-1/2", 1.0), m, [0.0], FitConfig(iterations=2), [0], 20)
    assert res.rows[0].error.startswith("ValueError") and math.isnan(res.rows[0].l1_error)
    assert math.isnan(res.median_error()[0.0])


def test_zero_fraction_row_is_the_clean_fit():
    m = GaussianLocation()
    res = sweep_epsilon([0.0], 10.0, DENSITY, m, [0.0], FIT, [3], 500)
    clean = m.simulate([0.0], 500, 3, DATA_STREAM)
    direct = fit(DENSITY, m, clean, [0.0], replace(FIT, seed=3)).theta_hat
    assert np.array_equal(res.rows[0].theta_hat, direct)


def test_outlier_at_truth_is_harmless():
    res = sweep_epsilon([0.0, 0.2], 0.0, DENSITY, GaussianLocation(), [0.0], FIT, range(5), 2000)
    th = {(r.value, r.seed): r.theta_hat[0] for r in res.rows}
    diffs = np.array([th[(0.2, s)] - th[(0.0, s)] for s in range(5)])
    assert abs(diffs.mean()) < 0.03


def test_small_fraction_slope_matches_influence():
    res = sweep_epsilon([0.0, 0.02], 3.0, DENSITY, GaussianLocation(), [0.0], FIT, range(5), 20_000)
    med = res.median_error()
    slope = (med[0.02] - med[0.0]) / 0.02
    target = float(np.linalg.norm(loc_influence(1.0, 1.0, 1, [0.0], [3.0])))
    assert abs(slope - target) <= 0.3 * target


def test_small_fraction_error_within_first_order_bound():
    eps = 0.05
    res = sweep_dirac([0.0, 1.0, 2.0, 3.0, 5.0, 10.0, 1000.0], eps, DENSITY, GaussianLocation(), [0.0], FIT,
                      range(3), 20_000)
    bound = 1.5 * eps * loc_gross_sensitivity(1.0, 1.0, 1) / (1 - eps)
    assert max(res.median_error().values()) <= bound
