"""Uniformity of p-values under the null, with and without noise-aware references.

Prints a thinned Q-Q series and the KS distance to uniform for both methods.
"""

from dpht import ReliabilityConfig, reliability_experiment

for method in ("ours", "naive_js"):
    cfg = ReliabilityConfig(epsilon=0.2, n0=1000, trials=2000, m=1000, seed=5, method=method)
    qq = reliability_experiment(cfg)
    print(f"{method}: KS={qq.ks:.4f}  P(p<=0.05)={qq.rejection_rate(0.05):.4f}")
    thin = qq.thin(200)
    for u, p in zip(thin.uniform_quantiles, thin.p_values):
        print(f"  uniform {u:.3f}  observed {p:.3f}")
