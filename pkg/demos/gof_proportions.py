"""Goodness-of-fit and two-sample proportion tests on noisy one-row tables."""

import numpy as np

from dpht import CountTable, NoiseSpec, TestRequest, perturb_table, run_test

rng = np.random.default_rng(3)
spec = NoiseSpec.laplace(0.5)
theta = np.array([0.25, 0.25, 0.5])

fair = CountTable([rng.multinomial(2000, theta)])
skewed = CountTable([rng.multinomial(2000, [0.3, 0.2, 0.5])])
for name, table in (("fair", fair), ("skewed", skewed)):
    noisy = perturb_table(table, spec, seed=4)
    for method in ("exact", "gaussian"):
        res = run_test(TestRequest("gof", noisy, "chi2", theta0=theta, m=10_000, seed=5, gof_method=method))
        print(f"gof {name:<6} {method:<8} p={res.p_value:.4f}")

a = perturb_table(CountTable([rng.multinomial(1500, theta)]), spec, seed=6)
b = perturb_table(CountTable([rng.multinomial(2500, theta)]), spec, seed=7)
c = perturb_table(skewed, spec, seed=8)
print("proportions same  p =", run_test(TestRequest("proportions", (a, b), m=10_000, seed=9)).p_value)
print("proportions diff  p =", run_test(TestRequest("proportions", (a, c), m=10_000, seed=9)).p_value)
