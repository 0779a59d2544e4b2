"""Command-line interface: ``dpht <command> ...``.

Table inputs are file paths (CSV or JSON), ``-`` for stdin, or
``fixture:NAME`` for a bundled table.  Exact and noisy tables use different
JSON schemas (``counts`` vs ``values``); tests only accept noisy releases
unless ``--epsilon inf`` explicitly asks for a non-private analysis.

Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric/degenerate, 5 infeasible
enumeration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .errors import (
    DegenerateError,
    DphtError,
    NonPositiveEpsilon,
    NonPositiveSensitivity,
    TableError,
    TooLarge,
    UnsupportedShape,
)
from .evalharness import (
    METHODS,
    ReliabilityConfig,
    agreement_experiment,
    builtin_fixture,
    fixture_names,
    reliability_experiment,
)
from .noise import NoiseSpec, perturb_table, release_exact
from .pvalue import DEFAULT_M, TestRequest, run_test
from .streams import resolve_seed
from .tables import CountTable, NoisyTable, load_table_text, serialize_table
from .testbed import Margins, sensitivity, testbed_pvalue

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_TOO_LARGE = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


# -- argument helpers --------------------------------------------------------------


def _epsilon(text: str) -> float:
    try:
        eps = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not eps > 0:
        raise argparse.ArgumentTypeError(f"epsilon must be > 0, got {text}")
    return eps


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _epsilons(text: str) -> tuple[float, ...]:
    return tuple(_epsilon(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _positive_int(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {k}")
    return k


def _margins(text: str) -> Margins:
    """``"500,500/503,497"`` -> rows (500, 500), cols (503, 497)."""
    try:
        rows, cols = text.split("/")
        return Margins(tuple(int(x) for x in rows.split(",")), tuple(int(x) for x in cols.split(",")))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"margins must look like 'r1,r2/c1,c2': {exc}") from None


def load_input(spec: str, header: bool = False) -> CountTable | NoisyTable:
    if spec.startswith("fixture:"):
        return builtin_fixture(spec.split(":", 1)[1])
    text = sys.stdin.read() if spec == "-" else Path(spec).read_text()
    return load_table_text(text, header=header)


def _as_release(t, epsilon: float | None) -> NoisyTable:
    if isinstance(t, NoisyTable):
        if epsilon is not None:
            raise UsageError("--epsilon applies to exact input only; this table is already a noisy release")
        return t
    if epsilon is None or not math.isinf(epsilon):
        raise UsageError(
            "exact counts given; run 'dpht privatize' first, or pass --epsilon inf for a non-private test"
        )
    return release_exact(t)


def _exact(t) -> CountTable:
    if not isinstance(t, CountTable):
        raise TableError("this command needs exact counts, not a noisy release")
    return t


# -- commands ----------------------------------------------------------------------


def cmd_privatize(args) -> str:
    t = _exact(load_input(args.input, args.header))
    if args.noise == "gaussian":
        spec = NoiseSpec.gaussian(args.epsilon, args.sensitivity)
    else:
        spec = NoiseSpec.laplace(args.epsilon, args.sensitivity)
    nt = perturb_table(t, spec, args.seed)
    if args.format == "csv":
        return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in nt.values)
    return nt.to_json() + "\n"


def cmd_test(args) -> str:
    want = 2 if args.kind == "proportions" else 1
    if len(args.inputs) != want:
        raise UsageError(f"{args.kind} takes {want} input table(s), got {len(args.inputs)}")
    if args.kind == "gof" and args.theta is None:
        raise UsageError("gof needs --theta")
    tables = tuple(_as_release(load_input(p, args.header), args.epsilon) for p in args.inputs)
    req = TestRequest(
        args.kind,
        tables,
        args.stat,
        args.theta if args.kind == "gof" else None,
        args.m,
        args.seed,
        args.smoothing,
        args.gof_method,
        args.threads,
    )
    res = run_test(req)
    if args.format == "csv":
        return f"test,statistic,t_star,m,exceed,p\n{res.test},{res.statistic},{res.t_star!r},{res.m},{res.exceed_count},{res.p_value!r}\n"
    return res.to_json() + "\n"


def cmd_reliability(args) -> str:
    cfg = ReliabilityConfig(
        test=args.kind,
        n0=args.n0,
        epsilon=args.epsilon,
        p_row=args.p_row,
        p_col=args.p_col,
        theta=args.theta,
        n2=args.n2,
        statistic=args.stat,
        trials=args.trials,
        m=args.m,
        seed=args.seed,
        method=args.method,
        sensitivity=args.sensitivity,
    )
    qq = reliability_experiment(cfg, args.threads)
    if args.thin:
        qq = qq.thin(args.thin)
    print(json.dumps(qq.summary()), file=sys.stderr)
    if args.format == "json":
        return json.dumps(qq.summary() | {"p_values": qq.p_values.tolist()}) + "\n"
    return qq.to_csv()


def cmd_agreement(args) -> str:
    tables = [_exact(load_input(p, args.header)) for p in args.inputs]
    res = agreement_experiment(
        tables,
        args.kind,
        args.stat,
        args.epsilons,
        args.repeats,
        args.m,
        args.seed,
        args.theta,
        args.sensitivity,
        args.threads,
    )
    return res.to_json() + "\n" if args.format == "json" else res.to_csv()


def cmd_testbed(args) -> str:
    t = _exact(load_input(args.input, args.header))
    res = testbed_pvalue(t, args.stat, args.mode, args.epsilon, args.m, args.seed, args.threads)
    if args.format == "csv":
        return f"statistic,mode,t_star,m,exceed,p\n{res.statistic},{args.mode},{res.t_star!r},{res.m},{res.exceed_count},{res.p_value!r}\n"
    return res.to_json() + "\n"


def cmd_sensitivity(args) -> str:
    if (args.margins is None) == (args.input is None):
        raise UsageError("give either --margins or an input table")
    mg = args.margins if args.margins is not None else Margins.of(_exact(load_input(args.input, args.header)))
    rep = sensitivity(args.stat, mg, brute_force=args.brute_force, cap=args.cap)
    if "brute_force_fallback" in rep.flags:
        r, c = mg.shape
        print(f"notice: no closed form for {r}x{c}; computed by enumeration", file=sys.stderr)
    if args.format == "csv":
        bf = "" if rep.brute_force is None else repr(rep.brute_force)
        return f"statistic,s_h,branch,brute_force\n{rep.statistic},{rep.s_h!r},{rep.branch},{bf}\n"
    return rep.to_json() + "\n"


def cmd_fixture(args) -> str:
    t = builtin_fixture(args.name)
    if args.format == "json":
        return json.dumps(t.to_dict()) + "\n"
    return serialize_table(t)


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def add_globals(parser, default):
        parser.add_argument("--seed", type=int, default=default, help="root seed (default: $DPHT_SEED, else fresh entropy)")
        parser.add_argument("--format", choices=("json", "csv"), default=default, help="output format")
        parser.add_argument("--out", default=default, help="write output here instead of stdout")
        parser.add_argument(
            "--threads", type=_positive_int, default=default, help="worker threads; results do not depend on it"
        )

    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    add_globals(common, argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="dpht", description="Differentially private tests on contingency tables.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    add_globals(p, None)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    def with_input(sp, nargs=None):
        if nargs:
            sp.add_argument("inputs", nargs=nargs, metavar="INPUT", help="CSV/JSON path, '-' or fixture:NAME")
        else:
            sp.add_argument("input", metavar="INPUT", help="CSV/JSON path, '-' or fixture:NAME")
        sp.add_argument("--header", action="store_true", help="CSV has a label row and column")

    sp = command("privatize", help="release a table with Laplace (or Gaussian) noise")
    with_input(sp)
    sp.add_argument("--epsilon", type=_epsilon, required=True)
    sp.add_argument("--sensitivity", type=float, default=2.0)
    sp.add_argument("--noise", choices=("laplace", "gaussian"), default="laplace")
    sp.set_defaults(func=cmd_privatize, default_format="json")

    sp = command("test", help="Monte Carlo test on noisy release(s)")
    sp.add_argument("kind", choices=("independence", "gof", "proportions"))
    with_input(sp, "+")
    sp.add_argument("--stat", choices=("chi2", "lr"), default="chi2")
    sp.add_argument("--m", type=_positive_int, default=DEFAULT_M)
    sp.add_argument("--theta", type=_floats, help="null cell probabilities for gof")
    sp.add_argument("--epsilon", type=_epsilon, help="only 'inf': test exact counts without privacy")
    sp.add_argument("--smoothing", action="store_true", help="report (exceed+1)/(m+1)")
    sp.add_argument("--gof-method", choices=("exact", "gaussian"), default="exact")
    sp.set_defaults(func=cmd_test, default_format="json")

    sp = command("reliability", help="p-value calibration under the null (Q-Q CSV)")
    sp.add_argument("--test", dest="kind", choices=("independence", "gof", "proportions"), default="independence")
    sp.add_argument("--n0", type=_positive_int, default=1000)
    sp.add_argument("--n2", type=_positive_int)
    sp.add_argument("--epsilon", type=_epsilon, default=0.2)
    sp.add_argument("--p-row", type=_floats, default=(0.5, 0.5))
    sp.add_argument("--p-col", type=_floats, default=(0.5, 0.5))
    sp.add_argument("--theta", type=_floats)
    sp.add_argument("--stat", choices=("chi2", "lr"), default="chi2")
    sp.add_argument("--trials", type=_positive_int, default=2000)
    sp.add_argument("--m", type=_positive_int, default=1000)
    sp.add_argument("--method", choices=METHODS, default="ours")
    sp.add_argument("--sensitivity", type=float, default=2.0)
    sp.add_argument("--thin", type=_positive_int, help="keep every k-th point")
    sp.set_defaults(func=cmd_reliability, default_format="csv")

    sp = command("agreement", help="mean private p-value vs epsilon next to the non-private one")
    with_input(sp, "+")
    sp.add_argument("--test", dest="kind", choices=("independence", "gof", "proportions"), default="independence")
    sp.add_argument("--stat", type=_names, default=("chi2", "lr"))
    sp.add_argument("--epsilons", type=_epsilons, required=True)
    sp.add_argument("--repeats", type=_positive_int, default=100)
    sp.add_argument("--m", type=_positive_int, default=DEFAULT_M)
    sp.add_argument("--theta", type=_floats)
    sp.add_argument("--sensitivity", type=float, default=2.0)
    sp.set_defaults(func=cmd_agreement, default_format="csv")

    sp = command("testbed", help="fixed-margin permutation test with input or output perturbation")
    with_input(sp)
    sp.add_argument("--stat", choices=("chi2", "lr", "ll", "diff"), default="chi2")
    sp.add_argument("--mode", choices=("input", "output"), default="input")
    sp.add_argument("--epsilon", type=_epsilon, required=True)
    sp.add_argument("--m", type=_positive_int, default=DEFAULT_M)
    sp.set_defaults(func=cmd_testbed, default_format="json")

    sp = command("sensitivity", help="fixed-margin sensitivity of a testbed statistic")
    sp.add_argument("input", nargs="?", metavar="INPUT")
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--stat", choices=("chi2", "lr", "ll", "diff"), default="chi2")
    sp.add_argument("--margins", type=_margins, help="'r1,r2,.../c1,c2,...'")
    sp.add_argument("--brute-force", action="store_true", help="also enumerate all tables as a cross-check")
    sp.add_argument("--cap", type=_positive_int, default=10**6, help="enumeration limit")
    sp.set_defaults(func=cmd_sensitivity, default_format="json")

    sp = command("fixture", help="print a bundled table")
    sp.add_argument("name", choices=fixture_names())
    sp.set_defaults(func=cmd_fixture, default_format="csv")
    return p


def _echo_config(args) -> dict:
    skip = {"func", "default_format"}
    out = {}
    for k, v in vars(args).items():
        if k in skip:
            continue
        if isinstance(v, Margins):
            v = v.to_dict()
        elif isinstance(v, float) and math.isinf(v):
            v = "inf"
        elif isinstance(v, tuple):
            v = ["inf" if isinstance(x, float) and math.isinf(x) else x for x in v]
        out[k] = v
    return out


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, NonPositiveEpsilon, NonPositiveSensitivity)):
        return EXIT_USAGE
    if isinstance(exc, TooLarge) or isinstance(exc.__cause__, TooLarge):
        return EXIT_TOO_LARGE
    if isinstance(exc, DegenerateError):
        return EXIT_NUMERIC
    if isinstance(exc, (TableError, UnsupportedShape, DphtError, OSError)):
        return EXIT_DATA
    return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed = resolve_seed(args.seed)
    args.threads = args.threads or 1
    args.format = args.format or args.default_format
    print("config: " + json.dumps(_echo_config(args), sort_keys=True), file=sys.stderr)
    try:
        text = args.func(args)
    except (DphtError, UsageError, OSError, ValueError) as exc:
        print(f"dpht: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
