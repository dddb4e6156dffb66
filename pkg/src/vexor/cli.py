"""Command line: ``vexor opt | difftest | verify | cost``.

Exit status 0 on success, 1 on usage or input errors, 2 when the
differential tester finds a disagreement.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cache import CacheError, RewriteCache
from .cost import TARGETS, CostTableError, load_cost_table, uop_breakdown
from .driver import OptConfig, optimize_function
from .intrinsics import MUTATIONS
from .rewrite import RewriteError, parse_rewrite, print_rewrite
from .slicer import DEFAULT_DEPTH
from .synth import SynthConfig
from .text import ParseError, ValidationError, parse_functions, print_function
from .types import TypeError_
from .verify import VerifyConfig, Verifier, check_input

EXIT_OK, EXIT_INPUT, EXIT_DISAGREE = 0, 1, 2
INPUT_ERRORS = (OSError, ParseError, ValidationError, RewriteError, TypeError_, CostTableError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _verify_args(p):
    p.add_argument("--exhaustive-bits", type=int, default=20,
                   help="enumerate every input when the free input bits fit (default 20)")
    p.add_argument("--samples", type=int, default=100_000, help="random inputs beyond the budget")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vexor", description="Synthesizing superoptimizer for a small SIMD SSA IR.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("opt", help="optimize every function in a file")
    p.add_argument("file")
    p.add_argument("--target", choices=TARGETS, default="cascade")
    p.add_argument("--cost-table", help="cost table file (default: the shipped table)")
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--max-insts", type=int, default=3)
    p.add_argument("--no-reinterpret", action="store_true", help="do not try other lane shapes of inputs")
    p.add_argument("--cache", help="rewrite cache directory (default: $VEXOR_CACHE, else none)")
    p.add_argument("--timeout-per-value", type=float, default=60.0)
    p.add_argument("--report", choices=("text", "json"), default="text")
    p.add_argument("-o", "--output", help="write optimized IR here instead of stdout")
    p.add_argument("--report-file", help="write the report here (default: stdout with -o, else stderr)")
    p.add_argument("--figures", help="directory for uOp figures")
    _verify_args(p)

    p = sub.add_parser("difftest", help="check intrinsic kernels against the reference oracle")
    p.add_argument("--iters", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutate", choices=sorted(MUTATIONS), help="inject a known semantic bug first")

    p = sub.add_parser("verify", help="check that a rewrite refines a function's result")
    p.add_argument("spec_file")
    p.add_argument("rewrite_file")
    _verify_args(p)

    p = sub.add_parser("cost", help="uOp cost of every function in a file")
    p.add_argument("file")
    p.add_argument("--target", choices=TARGETS, default="cascade")
    p.add_argument("--cost-table")
    return ap


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _verify_config(args) -> VerifyConfig:
    return VerifyConfig(exhaustive_bits=args.exhaustive_bits, samples=args.samples, seed=args.seed)


def cmd_opt(args) -> int:
    from .report import plot_reports, render

    if not 1 <= args.max_insts <= 5:
        raise ValueError("--max-insts must be between 1 and 5")
    table = load_cost_table(args.cost_table, args.target)
    cfg = OptConfig(target=args.target, depth=args.depth,
                    synth=SynthConfig(max_insts=args.max_insts, reinterpret=not args.no_reinterpret,
                                      timeout=args.timeout_per_value, target=args.target,
                                      verify=_verify_config(args)))
    cache = RewriteCache.from_env(args.cache)
    functions = parse_functions(_read(args.file))
    outs, reports = [], []
    for f in functions:
        g, rep = optimize_function(f, cfg, cache, table)
        outs.append(print_function(g))
        reports.append(rep)
    ir_text = "\n".join(outs)
    report = render(reports, args.report)
    if args.output:
        Path(args.output).write_text(ir_text, encoding="utf-8")
    else:
        sys.stdout.write(ir_text)
    if args.report_file:
        Path(args.report_file).write_text(report, encoding="utf-8")
    elif args.output:
        sys.stdout.write(report)
    else:
        sys.stderr.write(report)
    if args.figures:
        for p in plot_reports(reports, args.figures):
            print(f"figure: {p}", file=sys.stderr)
    return EXIT_OK


def cmd_difftest(args) -> int:
    from .difftest import difftest

    if args.iters < 1:
        raise ValueError("--iters must be at least 1")
    rep = difftest(args.iters, args.seed, args.mutate)
    print(f"descriptors={rep.descriptors} systematic={rep.systematic_rows} random={rep.random_rows} "
          f"disagreements={sum(rep.per_descriptor.values())}")
    for d in rep.disagreements:
        print(f"disagreement: {d}")
    return EXIT_OK if rep.ok else EXIT_DISAGREE


def cmd_verify(args) -> int:
    fs = parse_functions(_read(args.spec_file))
    if len(fs) != 1:
        raise ValueError("the spec file must hold exactly one function")
    spec = fs[0]
    cand = parse_rewrite(_read(args.rewrite_file))
    verdict = Verifier(spec, _verify_config(args)).refine(cand)
    print(f"verdict: {verdict.status.value}")
    print(f"inputs checked: {verdict.inputs_checked}")
    print(f"free input bits: {verdict.free_bits}  support bits: {verdict.support_bits}")
    if verdict.counterexample is not None:
        env = verdict.counterexample
        print("counterexample: " + ", ".join(f"%{k} = {v}" for k, v in env.values.items()))
        print(f"replays to refinement failure: {not check_input(spec, cand, env)}")
    print(f"rewrite: {print_rewrite(cand)}")
    return EXIT_OK


def cmd_cost(args) -> int:
    table = load_cost_table(args.cost_table, args.target)
    for f in parse_functions(_read(args.file)):
        total, items = uop_breakdown(f, table)
        print(f"@{f.name}\t{args.target}\t{total}")
        for desc, uops, hit in items:
            print(f"  {desc}\t{uops}" + ("" if hit else "\t(default)"))
    return EXIT_OK


COMMANDS = {"opt": cmd_opt, "difftest": cmd_difftest, "verify": cmd_verify, "cost": cmd_cost}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CacheError as e:
        print(f"vexor: cache error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as e:
        print(f"vexor: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
