"""Command-line interface.

Exit codes: 0 success, 1 a deterministic guarantee or invariant failed,
2 input/output or parse failure, 3 a parameter constraint was violated.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments as ex
from .discrepancy import kolmogorov_distance
from .distributions import DomainError, parse_distribution, sample_iid, uniform01
from .io import SCHEMA_VERSION, atomic_write, format_sample, read_sample, to_json, write_sample
from .regularizer import RegularizerConfig, regularize_general
from .streams import make_rng

OK, VIOLATION, IO_ERROR, CONSTRAINT = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = IO_ERROR):
        super().__init__(message)
        self.code = code


def parse_numbers(text: str, kind=int) -> list:
    """``"64,128,256"`` or a doubling range ``"64..2048"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = (kind(p) for p in part.split(".."))
            if lo <= 0 or hi < lo:
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            while lo <= hi:
                out.append(lo)
                lo *= 2
        elif part:
            out.append(kind(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _int_list(text):
    return parse_numbers(text, int)


def _float_list(text):
    return parse_numbers(text, float)


def _model(args):
    try:
        return parse_distribution(args.dist) if args.dist else uniform01()
    except (OSError, ValueError) as exc:
        raise CliError(f"distribution: {exc}") from exc


def _load_sample(args, model):
    if args.input and args.n is not None:
        raise CliError("give either --input or --dist with --n, not both", CONSTRAINT)
    if args.input:
        try:
            return read_sample(args.input)
        except (OSError, ValueError) as exc:
            raise CliError(str(exc)) from exc
    if args.n is None or not args.dist:
        raise CliError("need --input FILE, or --dist SPEC with --n N", CONSTRAINT)
    if args.n < 1:
        raise CliError("--n must be positive", CONSTRAINT)
    if args.seed is None:
        raise CliError("--seed is required to draw a sample", CONSTRAINT)
    return sample_iid(model, args.n, make_rng(args.seed, 0x73616D70)).values


def _emit(args, text: str) -> None:
    if getattr(args, "output", None):
        try:
            atomic_write(args.output, text)
        except OSError as exc:
            raise CliError(str(exc)) from exc
    else:
        sys.stdout.write(text)


def cmd_regularize(args) -> int:
    model = _model(args)
    x = _load_sample(args, model)
    # a file sample without --seed runs with the fixed seed 0
    seed = 0 if args.seed is None else args.seed
    n = x.size
    if not 0 < args.m <= n:
        raise CliError(f"--m {args.m} must lie in (0, n={n}]", CONSTRAINT)
    before = kolmogorov_distance(x, model)
    try:
        out, report = regularize_general(x, model, RegularizerConfig(m=args.m, seed=seed))
    except DomainError as exc:
        raise CliError(str(exc)) from exc
    after = kolmogorov_distance(out, model)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "regularize",
        "n": n,
        "m": args.m,
        "seed": seed,
        "model": model.describe(),
        "m1": report.m1,
        "dn_before": before.value,
        "dn_after": after.value,
        "witness_after": after.witness,
        "guarantee": report.guarantee,
        "within_guarantee": after.value <= report.guarantee,
        "held_out": report.held_out,
        "leaf_count": len(report.leaf_set),
        "depth": report.depth,
        "moves": [
            {"observation_id": mv.observation_id, "old_value": mv.old_value, "new_value": mv.new_value,
             "level": mv.node.level, "index": mv.node.index}
            for mv in report.moves
        ],
    }
    try:
        if args.output:
            write_sample(args.output, out.values)
            atomic_write(args.report or f"{args.output}.json", to_json(doc))
        elif args.report:
            atomic_write(args.report, to_json(doc))
            sys.stdout.write(format_sample(out.values))
        else:
            sys.stdout.write(to_json(doc))
    except OSError as exc:
        raise CliError(str(exc)) from exc
    return OK if doc["within_guarantee"] else VIOLATION


def cmd_ks(args) -> int:
    model = _model(args)
    x = _load_sample(args, model)
    res = kolmogorov_distance(x, model)
    if args.json:
        sys.stdout.write(to_json({"schema_version": SCHEMA_VERSION, "command": "ks", "n": int(x.size),
                                  "model": model.describe(), "dn": res.value, "witness": res.witness,
                                  "side": res.side}))
    else:
        print(f"D_n = {res.value!r}  at x = {res.witness!r} ({res.side})")
    return OK


def _require_seed(args):
    if args.seed is None:
        raise CliError("--seed is required for randomized commands", CONSTRAINT)


def _write_result(args, result: ex.SweepResult) -> None:
    _emit(args, result.to_csv() if args.format == "csv" else to_json(result.as_dict()))


def cmd_experiments(args) -> int:
    _require_seed(args)
    cmd = args.command
    if cmd == "sweep":
        plan = ex.TrialPlan(tuple(args.n), tuple(args.m), args.trials, args.seed, _model(args))
        if any(not 0 < m <= n for n, m in plan.cells()):
            raise CliError("every m must lie in (0, n]", CONSTRAINT)
        _write_result(args, ex.sweep_moves(plan))
    elif cmd == "dkw":
        cfg = ex.TailExperimentConfig(t_values=tuple(args.t))
        _write_result(args, ex.dkw_tail(args.n, args.trials, cfg, args.seed))
    elif cmd == "deltatail":
        m = args.m if args.m is not None else float(args.n)
        results = []
        for k in args.k:
            cfg = ex.TailExperimentConfig.for_budget(args.n, m, k=k, lambda_values=tuple(args.lambdas))
            results.append(ex.delta_tail(args.n, k, args.trials, cfg, args.seed))
        merged = ex.SweepResult("deltatail", [c for r in results for c in r.cells],
                                {str(r.plan["k"]): r.extras for r in results},
                                {"n": args.n, "m": m, "k": args.k, "trials": args.trials, "seed": args.seed})
        _write_result(args, merged)
    elif cmd == "lowerbound":
        try:
            res = ex.lowerbound_experiment(args.n, args.m, args.trials, args.seed)
        except ValueError as exc:
            raise CliError(str(exc), CONSTRAINT) from exc
        _write_result(args, res)
        cell = res.cell(stat="lb_moves_estimate")
        print(f"mean lb_moves {cell.mean:.4f} (floor m/200 = {res.extras['move_floor']:.4f})", file=sys.stderr)
    elif cmd == "bench":
        res = ex.bench_complexity(args.n, args.m, args.trials, args.seed)
        _write_result(args, res)
        print(f"fitted exponent {res.extras['exponent']:.3f}", file=sys.stderr)
    elif cmd == "verify":
        if not 0 < args.m <= args.n:
            raise CliError("--m must lie in (0, n]", CONSTRAINT)
        summary = ex.verify_runs(args.n, args.m, args.trials, args.seed)
        _emit(args, to_json(summary))
        print(f"m1 <= m2 in {summary['coupling_ok']}/{summary['trials']}", file=sys.stderr)
        return OK if summary["all_ok"] else VIOLATION
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edfreg", description="Regularize a sample by moving a few points.")
    sub = p.add_subparsers(dest="command", required=True)

    def sample_opts(sp):
        sp.add_argument("--input", help="sample file, one value per line")
        sp.add_argument("--dist", nargs="+", metavar="SPEC",
                        help="uniform01 | exp RATE | gauss MEAN STD | bern P | discrete FILE | cdf FILE")
        sp.add_argument("--n", type=int, help="sample size when drawing from --dist")
        sp.add_argument("--seed", type=int, help="required with --dist/--n; regularize defaults to 0 for files")

    r = sub.add_parser("regularize", help="move O(m) points so that D_n <= 2/m")
    sample_opts(r)
    r.add_argument("--m", type=float, required=True)
    r.add_argument("--output", help="write the modified sample here")
    r.add_argument("--report", help="JSON report path (default OUTPUT.json, or stdout)")
    r.set_defaults(func=cmd_regularize)

    k = sub.add_parser("ks", help="Kolmogorov distance of a sample to a distribution")
    sample_opts(k)
    k.add_argument("--json", action="store_true")
    k.set_defaults(func=cmd_ks)

    def exp_opts(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int, default=100)
        sp.add_argument("--output")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.set_defaults(func=cmd_experiments)

    s = sub.add_parser("sweep", help="mean moved points over an (n, m) grid")
    s.add_argument("--n", type=_int_list, required=True)
    s.add_argument("--m", type=_float_list, required=True)
    s.add_argument("--dist", nargs="+", metavar="SPEC")
    exp_opts(s)

    d = sub.add_parser("dkw", help="DKW tail frequencies")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--t", type=_float_list, default=[0.5, 1.0, 1.5, 2.0])
    exp_opts(d)

    dt = sub.add_parser("deltatail", help="tail of the local discrepancy of a processed node")
    dt.add_argument("--n", type=int, required=True)
    dt.add_argument("--k", type=_int_list, default=[4, 16, 64, 256])
    dt.add_argument("--m", type=float, help="budget (default n)")
    dt.add_argument("--lambdas", type=_float_list, default=[0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0])
    exp_opts(dt)

    lb = sub.add_parser("lowerbound", help="dense-cell lower-bound experiment")
    lb.add_argument("--n", type=int, required=True)
    lb.add_argument("--m", type=float, required=True)
    exp_opts(lb)

    b = sub.add_parser("bench", help="runtime scaling of the regularizer in n")
    b.add_argument("--n", type=_int_list, required=True)
    b.add_argument("--m", type=float, required=True)
    exp_opts(b)
    b.set_defaults(trials=5)

    v = sub.add_parser("verify", help="check all deterministic invariants over many seeds")
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--m", type=float, required=True)
    exp_opts(v)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return IO_ERROR if exc.code else OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"edfreg: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
