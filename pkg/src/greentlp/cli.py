"""Command-line entry point: ``greentlp {generate,solve,ld,bench,export}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .bench import format_csv, run_bench
from .formulation import Approach, RobustMode, StructuralInfeasibility, build
from .instance import (RANGE_PRESETS, Dimensions, GeneratorRanges, InstanceFormatError, generate_family,
                       load_instance, save_instance)
from .lagrangian import DecompositionError, LDConfig, run_ld
from .milp import MilpParams, Status, solve_milp, write_lp

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4


class UsageError(Exception):
    pass


def _dims(text: str) -> Dimensions:
    try:
        dims = Dimensions.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if min(dims.as_tuple()) < 1:
        raise argparse.ArgumentTypeError(f"dims must be positive, got {text}")
    return dims


def _prepare(inst, args):
    if getattr(args, "gamma", None) is not None:
        inst = inst.with_budget(args.gamma)
    z = getattr(args, "z", None)
    if z:
        inst = inst.with_z(z[0] if isinstance(z, list) else z)
    return inst


def _mode(args) -> RobustMode:
    return RobustMode.ROBUST if args.robust else RobustMode.DETERMINISTIC


def cmd_generate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if args.step <= 0:
        raise UsageError("--step must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    family = generate_family(args.seed, args.dims, args.n, args.step, GeneratorRanges.preset(args.ranges))
    files = []
    for inst in family:
        path = out / f"{inst.name}.json"
        save_instance(inst, path)
        files.append(path.name)
    manifest = {
        "seed": args.seed,
        "dims": list(args.dims.as_tuple()),
        "n": args.n,
        "step": args.step,
        "ranges": args.ranges,
        "instances": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(files)} instances and manifest.json to {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _prepare(load_instance(args.instance), args)
    try:
        bundle = build(inst, args.approach, _mode(args), args.disaggregated)
    except StructuralInfeasibility as exc:
        print(f"status: infeasible\ndiagnosis: {exc}")
        return EXIT_INFEASIBLE
    if args.export_lp:
        Path(args.export_lp).write_text(write_lp(bundle.model), encoding="utf-8")
    t0 = time.perf_counter()
    res = solve_milp(bundle.model, MilpParams(time_limit=args.time_limit))
    elapsed = time.perf_counter() - t0
    print(f"status: {res.status.value}")
    if res.primal_values.size:
        print(f"objective: {res.objective_value:.6f}")
    print(f"nodes: {res.node_count}")
    print(f"time_s: {elapsed:.3f}")
    if res.status is Status.OPTIMAL:
        return EXIT_OK
    if res.status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


def _ld_config(args) -> LDConfig:
    return LDConfig(epsilon=args.epsilon, max_iter=args.max_iter, disaggregated=args.disaggregated)


def cmd_ld(args) -> int:
    inst = _prepare(load_instance(args.instance), args)
    trace = open(args.trace, "w", encoding="utf-8", newline="") if args.trace else None
    try:
        report = run_ld(inst, args.approach, _mode(args), _ld_config(args), trace=trace)
    except StructuralInfeasibility as exc:
        print(f"status: infeasible\ndiagnosis: {exc}")
        return EXIT_INFEASIBLE
    finally:
        if trace:
            trace.close()
    print(f"bound: {report.bound:.6f}")
    print(f"z_up: {report.z_up:.6f}")
    print(f"iterations: {report.iterations}")
    print(f"converged: {str(report.converged).lower()}")
    print(f"time_s: {report.total_time:.3f}")
    return EXIT_OK if report.converged else EXIT_LIMIT


def cmd_bench(args) -> int:
    manifest = Path(args.manifest)
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    instances = [load_instance(manifest.parent / name) for name in doc["instances"]]
    if args.gamma is not None:
        instances = [inst.with_budget(args.gamma) for inst in instances]
    zs = args.z or [None]
    blocks, labels = [], []
    for z in zs:
        batch = instances if z is None else [inst.with_z(z) for inst in instances]
        suffix = "" if z is None or len(zs) == 1 else f"@z={z:g}"
        ids = [inst.name + suffix for inst in batch]
        blocks.append(run_bench(batch, args.approach, _mode(args), _ld_config(args),
                                MilpParams(time_limit=args.time_limit), args.workers, ids))
        labels.append("average" + suffix)
    text = format_csv(blocks, labels)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    rows = [r for b in blocks for r in b]
    if any(r.status == "infeasible" for r in rows):
        return EXIT_INFEASIBLE
    if any(not r.ok or not r.ld_converged for r in rows):
        return EXIT_LIMIT
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _prepare(load_instance(args.instance), args)
    bundle = build(inst, args.approach, _mode(args), args.disaggregated)
    text = write_lp(bundle.model)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_model_flags(p: argparse.ArgumentParser, repeat_z: bool = False) -> None:
    p.add_argument("--approach", type=int, choices=(1, 2), default=1)
    p.add_argument("--robust", action="store_true", help="budgeted robust demand counterpart")
    p.add_argument("--disaggregated", action="store_true", help="one robust penalty per cell")
    p.add_argument("--gamma", type=float, help="uniform uncertainty budget for every cell")
    if repeat_z:
        p.add_argument("--z", type=float, action="append", help="emission quantile; repeatable")
    else:
        p.add_argument("--z", type=float, help="override the emission quantile")


def _add_ld_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, help="absolute stopping gap (default 1e-6*(1+|Z_lb|))")
    p.add_argument("--max-iter", type=int, default=200)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greentlp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded instance family and manifest")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--dims", type=_dims, default=Dimensions(3, 5, 2, 2))
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--step", type=float, default=0.05)
    g.add_argument("--ranges", choices=RANGE_PRESETS, default="default", help="parameter range preset")
    g.add_argument("--out", default="instances")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance exactly")
    s.add_argument("instance")
    _add_model_flags(s)
    s.add_argument("--time-limit", type=float, default=float("inf"))
    s.add_argument("--export-lp", help="also write the model in LP format")
    s.set_defaults(func=cmd_solve)

    d = sub.add_parser("ld", help="Lagrangian lower bound for one instance")
    d.add_argument("instance")
    _add_model_flags(d)
    _add_ld_flags(d)
    d.add_argument("--trace", help="per-iteration CSV trace file")
    d.set_defaults(func=cmd_ld)

    b = sub.add_parser("bench", help="exact vs decomposition table for a manifest")
    b.add_argument("manifest")
    _add_model_flags(b, repeat_z=True)
    _add_ld_flags(b)
    b.add_argument("--time-limit", type=float, default=float("inf"))
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export", help="write the MILP of an instance in LP format")
    e.add_argument("instance")
    _add_model_flags(e)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DecompositionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
