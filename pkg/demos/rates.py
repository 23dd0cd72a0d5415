"""
Measured decay rates
====================

Simulate the weighted branching process and compare measured decay rates
with their predictions.  Two quantities are used.

* ``e^{2an} E (W_{n+1} - W_n)^2`` for the uniform law, whose exact value is
  ``mu_2 (e^{2a} m(2))^n``.
* ``s_n(r) = E (sum_{|v|=n} L_v^r)^{p/r}`` for a two-point table law, whose
  rate is given by ``predicted_rate``.

Runs in well under a minute on one core.
"""

import math

from brwrate import exact_s_n, fit_rate, increment_curve, predicted_rate, s_n_curve
from brwrate.catalog import catalog, two_point
from brwrate.series import increment_l2_exact

uniform = catalog()["uniform"]
a = 0.1

# one ensemble of depth 12 gives every increment up to n = 11
curve = increment_curve(uniform, 2.0, a, 12, 10_000, seed=1)
print(" n   scaled increment        exact")
for c in curve:
    exact = math.exp(2 * a * c.n) * increment_l2_exact(uniform, c.n)
    est = c.scaled_increment
    print(f"{c.n:2d}   {est.value:.5f} +- {est.stderr:.5f}   {exact:.5f}")

fit = fit_rate([(c.n, c.scaled_increment.value, c.scaled_increment.stderr, c.nonzero)
                for c in curve], predicted=2 * a + math.log(uniform.mean_measure(2.0)))
print(f"fitted slope {fit.slope:.4f} +- {fit.slope_stderr:.4f}, predicted {fit.predicted:.4f}")

# s_n for the two-point law: exact for small n by enumerating the tree
law = two_point()
r, p = 2.0, 1.5
print(f"\ns_n(r) with r = {r}, p = {p}")
mc = s_n_curve(law, 6, r, p, 100_000, seed=2)
for n, est, _ in mc:
    exact = f"{exact_s_n(law, n, r, p):.6f}" if n <= 4 else "      -"
    print(f"{n:2d}   {est.value:.6f} +- {est.stderr:.6f}   exact {exact}")
fit = fit_rate([(n, e.value, e.stderr, k) for n, e, k in mc if n >= 1],
               predicted=math.log(predicted_rate(law, p, r)))
print(f"fitted slope {fit.slope:.4f}, predicted {fit.predicted:.4f}")
