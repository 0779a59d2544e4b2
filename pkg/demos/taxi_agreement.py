"""Private vs non-private p-values on the large taxi table across privacy levels."""

import math

from dpht import agreement_experiment, builtin_fixture

res = agreement_experiment(
    builtin_fixture("nyc_taxi"), "independence", ("chi2", "lr"), (1e-3, 1e-4, 1e-5, math.inf), repeats=20, m=10_000, seed=9
)
print(res.to_csv(), end="")
