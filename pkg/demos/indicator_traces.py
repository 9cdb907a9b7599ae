"""Exact variation of bilinear averages of an indicator with itself.

Q_t(chi, chi)(x) is the square of the fraction of [x - t/2, x + t/2] covered by [0, 1).
Inside the interval it starts at 1 and decays to 0, so V_rho is 1 for every rho.
Outside it rises from 0 to a peak and decays back, giving 2**(1/rho) times the peak.
"""
import math

from bivar import StepFunction
from bivar.averages import trace_family, variation_of_averages
from bivar.martingale import martingale_variation

chi = StepFunction.indicator(0.0, 1.0)

for x in (0.5, 2.0, 5.0):
    fam = trace_family(chi, chi, x).extrema
    peak = max(fam.values)
    print(f"x = {x}: {len(fam.values)} extrema, peak {peak:.6f}")
    for rho in (1.0, 2.0, 3.0):
        v = variation_of_averages(chi, chi, x, rho).value
        ref = 1.0 if 0 <= x < 1 else 2 ** (1 / rho) * peak
        print(f"  rho = {rho}: V = {v:.12f}  expected {ref:.12f}")

# the peak at x = 2 sits at t = 4, where a quarter of the window is covered
print("sqrt(2)/16 =", math.sqrt(2) / 16)

# the dyadic martingale version at the centre is the same monotone collapse
print("dyadic V at 0.5:", martingale_variation(chi, chi, 0.5, 3.0).value)
