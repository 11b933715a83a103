"""Disk-supported kernels: positivity, the radius defect and Monte Carlo error.

Run: python3 demos/kernels.py
"""

import numpy as np

from rafid.kernel_lab import (
    AtomicMeasure,
    counterexample_check,
    hoeffding_experiment,
    kernel_atomic,
    radius_defect,
)
from rafid.sampling import PoleRegion

rng = np.random.default_rng(0)

# a random atomic measure with support radius 0.8
poles = 0.8 * np.sqrt(rng.random(12)) * np.exp(2j * np.pi * rng.random(12))
mu = AtomicMeasure(poles, rng.random(12))
K = kernel_atomic(mu, 15)
_, dmin = radius_defect(K, mu.rho)
print(f"support radius {mu.rho:.3f}")
print(f"  min eig K / trace          {K.min_eig() / K.trace:+.2e}")
print(f"  min eig defect at rho      {dmin / K.trace:+.2e}")
_, below = radius_defect(K, 0.9 * mu.rho)
print(f"  min eig defect at 0.9 rho  {below / K.trace:+.2e}  (negative: radius too small)")

# a shift-contractive kernel without a disk measure
rep = counterexample_check()
print("\nnilpotent counterexample")
print(f"  diagonal {rep.diagonal.real.tolist()}")
print(f"  unit-radius defect min eig {rep.defect_min_eig:.1e}, moment LP status {rep.lp_status}"
      f" ({'infeasible' if rep.lp_infeasible else 'feasible'})")

# empirical kernel error shrinks like M^{-1/2}
region = PoleRegion.disk(0.9, include_real_axis=False, radial_law="uniform-in-area")
print("\nMonte Carlo max-entry error at T = 20")
for M in (100, 1000, 10_000):
    err = hoeffding_experiment(region, M, 20, 50, seed=M).mean_deviation
    print(f"  M = {M:6d}: mean error {err:.4f}, sqrt(M) * error {np.sqrt(M) * err:.3f}")
