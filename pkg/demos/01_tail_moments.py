"""Gaussian tail moments and the concentration thresholds built on them.

The thresholded square sum recenters each surviving coordinate by alpha(t),
the second moment of a standard Gaussian conditioned on clearing t.  This
script shows alpha's behavior across thresholds, checks the large-t
asymptotics, and verifies the two deviation bounds by simulation.
"""

import math

import numpy as np

from corrdetect import alpha, laurent_massart_upper, thresholded_sum_tail_bound

print("alpha(t) = E[g^2 | |g| >= t]")
print(f"{'t':>6} {'alpha(t)':>14} {'t^2 + 2 - 2/t^2':>18}")
for t in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]:
    series = t * t + 2 - (2 / (t * t) if t else math.inf)
    print(f"{t:6.1f} {alpha(t):14.6f} {series if t else float('nan'):18.6f}")

print("\nLaurent-Massart threshold for a chi-square upper tail:")
p, x = 50, 3.0
thr = laurent_massart_upper(np.ones(p), x)
rng = np.random.default_rng(0)
draws = rng.chisquare(p, size=400_000)
rate = np.mean(draws >= thr)
print(f"  p={p}, x={x}: threshold {thr:.2f}; "
      f"empirical exceedance {rate:.5f} <= e^-x = {math.exp(-x):.5f}")

print("\nNull deviation bound for the thresholded square sum:")
p, t, x = 200, 2.0, 4.0
bound = thresholded_sum_tail_bound(p, t, x)
z = rng.standard_normal((100_000, p))
stats = ((z * z - alpha(t)) * (np.abs(z) >= t)).sum(axis=1)
rate = np.mean(stats > bound)
print(f"  p={p}, t={t}, x={x}: bound {bound:.1f}; "
      f"empirical exceedance {rate:.5f} <= e^-x = {math.exp(-x):.5f}")
