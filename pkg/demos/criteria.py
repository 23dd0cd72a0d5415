"""
Which series converge?
======================

Everything about L_p convergence of the intrinsic martingale and of the
series ``sum_n e^{an} (W - W_n)`` is decided by the mean measure
``m(r) = E sum_i L_i^r``.  This script tabulates ``m`` for the shipped laws,
locates its spectral minimiser and walks a few values of ``a`` across the
convergence threshold.
"""

import math

import numpy as np

from brwrate import analyze, check_main1, check_main2, find_q, find_theta
from brwrate.catalog import catalog

laws = catalog()

# m(r) on a grid; m(1) = 1 because every law is normalised
print("r      " + "  ".join(f"{name:>10s}" for name in laws))
for r in np.linspace(1.0, 2.5, 7):
    print(f"{r:4.2f}   " + "  ".join(f"{law.mean_measure(r):10.5f}" for law in laws.values()))

# theta is the minimiser of log m(r) / r, capped at 2
print()
for name, law in laws.items():
    prof = find_theta(law)
    where = "interior" if prof.interior_min else "capped"
    print(f"{name:10s} theta = {prof.theta:.6f} ({where}), gamma = {prof.gamma:.6f}")

# the lognormal law has theta = 1.5, so p = 1.8 has a conjugate exponent below it
lognormal = laws["lognormal"]
q = find_q(find_theta(lognormal), 1.8)
print(f"\nlognormal: conjugate of p = 1.8 is q = {q:.6f}")
print(f"  m(q)^(1/q) = {lognormal.mean_measure(q) ** (1 / q):.8f}")
print(f"  m(p)^(1/p) = {lognormal.mean_measure(1.8) ** (1 / 1.8):.8f}")

# For the uniform law with p = 2 the threshold is a* = log(3/2) / 2.
uniform = laws["uniform"]
a_star = 0.5 * math.log(1.5)
print(f"\nuniform, p = 2: threshold a* = {a_star:.6f}")
for a in (0.05, 0.15, 0.2, 0.25, 0.3):
    rep = check_main2(uniform, 2.0, a)
    print(f"  a = {a:4.2f}  converges = {rep.main2!s:5s}  margin = {rep.main2_margin:+.5f}")

# For 1 < p < 2 the sufficient condition is stated through an optimal r*.
print("\nuniform, p = 1.5:")
for a in (0.1, 0.15, 0.25):
    rep = check_main1(uniform, 1.5, a)
    print(f"  a = {a:4.2f}  sufficient = {rep.main1_sufficient!s:5s}  "
          f"necessary = {rep.main1_necessary!s:5s}  r* = {rep.r_star:.4f}")

# the full report is a flat dict, convenient for logging
print()
for key, value in analyze(lognormal, 1.8, 0.01).to_dict().items():
    print(f"  {key}: {value}")
