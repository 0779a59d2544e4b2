"""Closed-form sensitivities of the fixed-margin statistics, checked by enumeration."""

from dpht.testbed import Margins, sensitivity

for rows, cols in [((500, 500), (503, 497)), ((6, 6), (5, 7)), ((4, 4, 4), (3, 4, 5)), ((1, 1, 7), (3, 3, 3))]:
    mg = Margins(rows, cols)
    for stat in ("chi2", "lr", "ll", "diff"):
        rep = sensitivity(stat, mg, brute_force=mg.n <= 20)
        bf = "" if rep.brute_force is None else f"  brute force {rep.brute_force:.4f}"
        print(f"{rows}/{cols} {stat:<4} s_h={rep.s_h:.4f} [{rep.branch}]{bf}")
