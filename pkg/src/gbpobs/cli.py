"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 ambiguous convergence, 3 restoration
candidates exhausted.
"""

from __future__ import annotations

import argparse
import sys
from typing import Any, Sequence

from .bench import RunConfig, dump_json, run_benchmark, summarize, synthetic_spec, write_csv
from .factor_graph import AmbiguousConvergence
from .islands import detect_islands
from .network import InputError, boundary_pseudo_candidates, build_jacobian, parse_measurement_set, parse_network
from .oracle import oracle_islands
from .restoration import CandidatesExhausted, restore
from .variance import SweepConfig

EXIT_OK, EXIT_INPUT, EXIT_AMBIGUOUS, EXIT_EXHAUSTED = 0, 1, 2, 3


def _read(path: str, what: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"{what} {path}: {exc.strerror}") from None


def _load(args):
    try:
        net = parse_network(_read(args.case, "case file"))
    except InputError as exc:
        raise InputError(f"{args.case}: {exc}") from None
    try:
        ms = parse_measurement_set(_read(args.meas, "measurement file"), net)
    except InputError as exc:
        raise InputError(f"{args.meas}: {exc}") from None
    return net, ms


def _sweep_args(p: argparse.ArgumentParser) -> None:
    d = SweepConfig()
    g = p.add_argument_group("message passing")
    g.add_argument("--tol", type=float, default=d.tol, help="relative change counted as settled")
    g.add_argument("--tau-max", type=int, default=d.tau_max, help="sweep limit per pass")
    g.add_argument("--v-low", type=float, default=d.v_low)
    g.add_argument("--v-high", type=float, default=d.v_high)
    g.add_argument("--v-init", type=float, default=d.v_init)
    g.add_argument("--v-zero", type=float, default=d.v_zero)
    g.add_argument("--v-inf", type=float, default=d.v_inf)
    g.add_argument("--degree-obs", type=float, default=d.degree_obs)
    g.add_argument("--degree-unobs", type=float, default=d.degree_unobs)


def _probe_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--probe", choices=("lowest", "random"), default="lowest")
    p.add_argument("--seed", type=int, default=0, help="seed for --probe random")


def _run_config(args, **kw) -> RunConfig:
    try:
        sweep = SweepConfig(
            v_init=args.v_init, v_zero=args.v_zero, v_low=args.v_low, v_high=args.v_high, v_inf=args.v_inf,
            tol=args.tol, tau_max=args.tau_max, degree_obs=args.degree_obs, degree_unobs=args.degree_unobs)
        return RunConfig(sweep=sweep, probe=getattr(args, "probe", "lowest"),
                         probe_seed=getattr(args, "seed", 0), out=getattr(args, "out", None), **kw)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _islands_doc(net, det) -> dict[str, Any]:
    part = det.partition
    return {
        "islands": part.as_bus_ids(net.bus_ids),
        "rejected": list(det.rejected),
        "dropped": list(det.dropped),
        "passes": part.passes,
        "sweeps": list(part.sweeps),
    }


def cmd_islands(args) -> int:
    cfg = _run_config(args)
    net, ms = _load(args)
    det = detect_islands(net, ms, cfg.detection())
    doc = _islands_doc(net, det)
    doc["run_config"] = cfg.to_json()
    _emit(doc, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _run_config(args)
    net, ms = _load(args)
    part = oracle_islands(net, build_jacobian(net, ms))
    _emit({"islands": part.as_bus_ids(net.bus_ids), "run_config": cfg.to_json()}, args.out)
    return EXIT_OK


def cmd_restore(args) -> int:
    cfg = _run_config(args)
    net, ms = _load(args)
    det = detect_islands(net, ms, cfg.detection())
    if args.auto_boundary:
        pseudo = boundary_pseudo_candidates(net, det.partition, ms)
    else:
        try:
            pseudo = parse_measurement_set(_read(args.pseudo, "pseudo file"), net)
        except InputError as exc:
            raise InputError(f"{args.pseudo}: {exc}") from None
    doc = _islands_doc(net, det)
    doc["run_config"] = cfg.to_json()
    try:
        r = restore(net, ms, det, pseudo, cfg.sweep)
    except CandidatesExhausted as exc:
        doc.update(accepted=exc.result.accepted, rejected_dependent=exc.result.rejected_dependent,
                   w=exc.result.final_w + len(exc.result.accepted), remaining_w=exc.result.final_w,
                   certificate=exc.result.certificate, error=str(exc))
        _emit(doc, args.out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    doc.update(
        candidates=list(r.graph.candidate_ids), q=r.problem.q, w=r.problem.w, k=r.problem.k,
        accepted=r.result.accepted, rejected_dependent=r.result.rejected_dependent,
        certificate=r.result.certificate)
    _emit(doc, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        lo, hi = (float(x) for x in args.redundancy.split(":"))
    except ValueError:
        raise InputError(f"--redundancy expects LO:HI, got {args.redundancy!r}") from None
    methods = tuple(m for m in args.methods.split(",") if m)
    cfg = _run_config(args, workers=args.workers, csv=args.csv, summary=args.summary, restore=not args.no_restore)
    try:
        spec = synthetic_spec(args.synthetic_buses, args.avg_degree, args.configs, (lo, hi), args.seed, methods)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    records, failures = run_benchmark(spec, cfg)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            write_csv(records, fh)
    else:
        write_csv(records, sys.stdout)
    summary = summarize(records, cfg, failures)
    if args.summary:
        dump_json(summary, args.summary)
    return EXIT_OK


def _emit(doc: dict[str, Any], path: str | None) -> None:
    text = dump_json(doc, path)
    if not path:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gbpobs", description="Observability analysis by variance-only belief propagation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("islands", help="identify observable islands")
    p.add_argument("--case", required=True)
    p.add_argument("--meas", required=True)
    _probe_args(p)
    _sweep_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_islands)

    p = sub.add_parser("restore", help="restore observability with pseudo-measurements")
    p.add_argument("--case", required=True)
    p.add_argument("--meas", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pseudo")
    src.add_argument("--auto-boundary", action="store_true", help="one pseudo-injection per boundary bus")
    _probe_args(p)
    _sweep_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("oracle", help="exact islands from the null space")
    p.add_argument("--case", required=True)
    p.add_argument("--meas", required=True)
    _sweep_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="benchmark over random measurement configurations")
    p.add_argument("--synthetic-buses", type=int, required=True)
    p.add_argument("--avg-degree", type=float, default=2.6)
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--redundancy", default="0.8:1.6", help="LO:HI")
    p.add_argument("--methods", default="gbp,topological,oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-restore", action="store_true", help="skip restoration on GBP records")
    p.add_argument("--csv")
    p.add_argument("--summary")
    _sweep_args(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AmbiguousConvergence as exc:
        where = f" in pass {exc.pass_index}" if exc.pass_index is not None else ""
        print(f"ambiguous convergence{where}: {exc}", file=sys.stderr)
        return EXIT_AMBIGUOUS


if __name__ == "__main__":
    sys.exit(main())
