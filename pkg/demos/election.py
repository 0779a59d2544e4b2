"""Release a noisy 2x2 election table and test it for independence.

Compares the Monte Carlo p-value on the noisy release with the classical
p-value on the exact counts and with the naive plug-in p-value that ignores
the noise.
"""

from dpht import NoiseSpec, TestRequest, builtin_fixture, perturb_table, run_test
from dpht.pvalue import naive_js_pvalue
from dpht.stats import chi2_independence, classical_pvalue_chi2, lr_independence

table = builtin_fixture("election")
print("exact counts:\n", table.counts)
print(f"chi2 = {chi2_independence(table).value:.3f}, lr = {lr_independence(table).value:.3f}")
print(f"classical p (lr, df=1) = {classical_pvalue_chi2(lr_independence(table).value, 1):.4f}")

for epsilon in (2.0, 0.2, 0.05):
    noisy = perturb_table(table, NoiseSpec.laplace(epsilon), seed=1)
    res = run_test(TestRequest("independence", noisy, "lr", m=10_000, seed=2))
    naive = naive_js_pvalue(noisy, "independence", "lr")
    print(f"eps={epsilon:<5} t*={res.t_star:8.3f}  p={res.p_value:.4f}  naive p={naive:.4f}  flags={res.flags}")
