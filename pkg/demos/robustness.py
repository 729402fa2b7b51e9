"""
Outliers and the influence function
===================================

Contaminate a standard normal sample with a point mass at z and record how
far the fitted location moves. The error rises while z is near the bulk
and falls back toward zero once the outlier is far away, following the
shape of the influence function.
"""

import numpy as np

from minmmd.generators import GaussianLocation
from minmmd.kernels import KernelSpec
from minmmd.optim import FitConfig
from minmmd.robustness import sweep_dirac
from minmmd.theory import loc_gross_sensitivity, loc_influence

model = GaussianLocation()
kernel = KernelSpec("gaussian-density", 1.0)
cfg = FitConfig(schedule="robbins-monro", iterations=300, minibatch=200, eta0=1.0, exponent=1.0, method="natural-sgd")

z_grid = [0.0, 1.0, 2.0, 3.0, 5.0, 10.0, 100.0]
eps = 0.1
result = sweep_dirac(z_grid, eps, kernel, model, [0.0], cfg, seeds=range(3), m=2000, workers=3)

print(" z      median error   eps * |IF(z)|")
for z, err in result.median_error().items():
    first_order = eps * abs(loc_influence(1.0, 1.0, 1, [0.0], [z])[0])
    print(f"{z:6.1f}   {err:10.4f}   {first_order:10.4f}")

print(f"gross-error sensitivity: {loc_gross_sensitivity(1.0, 1.0, 1):.4f}")
