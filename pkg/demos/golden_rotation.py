"""Bilinear square averages along the golden rotation.

With f = g = indicator of [0, 1/2) the averages converge to (1/2)**2 at every point,
and the variation over the second half of the window schedule shrinks as L grows.
"""
import numpy as np

from bivar import StepFunction
from bivar.ergodic import convergence_diagnostic, rotation

half = StepFunction.indicator(0.0, 0.5)
xs = np.random.default_rng(31).random(8)
for L in (100, 1000, 10_000):
    rows = convergence_diagnostic(rotation("golden"), half, half, xs, 3.0, [L])
    dev = max(abs(r.QL - 0.25) for r in rows)
    tail = max(r.var_tail for r in rows)
    print(f"L = {L:6d}: max |Q_L - 1/4| = {dev:.2e}, max tail variation = {tail:.2e}")
