"""Expectiles, the asymmetric squared loss and its weights.

Run:  python demos/01_expectiles.py
"""

import numpy as np

from gecer import build_weights, expectile_loss, scalar_expectile

rng = np.random.default_rng(0)

# The tau-expectile minimizes sum_i L_tau(v_i - b).  tau = 0.5 gives the mean.
v = rng.standard_normal(1000)
print("mean          ", round(v.mean(), 4))
print("0.5-expectile ", round(scalar_expectile(v, 0.5), 4))

# Expectiles move smoothly with tau, unlike quantiles which jump between data points.
for tau in (0.1, 0.25, 0.5, 0.75, 0.9):
    print(f"tau={tau:<5} expectile={scalar_expectile(v, tau): .4f}  quantile={np.quantile(v, tau): .4f}")

# A two-point example worked by hand: 0.9 (1 - b) = 0.1 (1 + b)  =>  b = 0.8
print("expectile of {-1, 1} at 0.9:", scalar_expectile([-1.0, 1.0], 0.9))

# The loss weights positive residuals by tau and negative ones by 1 - tau.
res = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
print("weights at tau=0.8:", build_weights(res, 0.8))
print("losses  at tau=0.8:", expectile_loss(res, 0.8))

# Weighted squares reproduce the loss exactly, which is what the solver relies on.
w = build_weights(res, 0.8)
assert np.allclose(w * res ** 2, expectile_loss(res, 0.8))

# Skewed data: the spread of expectiles is asymmetric around the mean.
skewed = rng.exponential(size=1000)
lo, hi = scalar_expectile(skewed, 0.1), scalar_expectile(skewed, 0.9)
print(f"exponential sample: mean {skewed.mean():.3f}, 0.1-exp {lo:.3f}, 0.9-exp {hi:.3f}")
