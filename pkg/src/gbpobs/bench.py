"""Benchmark harness: random measurement configurations, per-method timing, oracle agreement.

Each configuration is generated from its own seed, analysed by every
requested method on the same Jacobian, and summarised by island-count bin.
Only the algorithm call is timed (monotonic clock, nanoseconds).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .factor_graph import AmbiguousConvergence
from .islands import DetectionConfig, ProbePolicy, ProbeRule, detect_islands
from .network import PowerNetwork, boundary_pseudo_candidates, build_jacobian, generate_measurement_config
from .oracle import oracle_islands, topological_islands
from .partition import partitions_equal
from .restoration import CandidatesExhausted, restore
from .synthetic import make_synthetic_network
from .variance import SweepConfig

METHODS = ("gbp", "topological", "oracle")
CSV_HEADER = ("network", "seed", "redundancy", "k", "method", "wall_ns", "sweeps",
              "agrees_oracle", "w", "accepted", "certificate")
BINS = ((2, 17), (18, 33))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run; serialised into every report."""

    sweep: SweepConfig = SweepConfig()
    probe: str = "lowest"
    probe_seed: int = 0
    candidate_order: str = "bus-id"
    restore: bool = True
    oracle_cap: int = 5000  # skip the oracle on networks with more buses than this
    workers: int = 1
    out: str | None = None
    csv: str | None = None
    summary: str | None = None

    def __post_init__(self) -> None:
        ProbeRule(self.probe)
        if self.candidate_order != "bus-id":
            raise ValueError(f"unsupported candidate order {self.candidate_order!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def detection(self) -> DetectionConfig:
        return DetectionConfig(self.sweep, ProbePolicy(ProbeRule(self.probe), self.probe_seed))

    def to_json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "RunConfig":
        doc = dict(doc)
        doc["sweep"] = SweepConfig(**doc.get("sweep", {}))
        return cls(**doc)


@dataclass(frozen=True)
class BenchRecord:
    """One method on one configuration; ``k == -1`` marks a failed run."""

    network: str
    seed: int
    redundancy: float
    k: int
    method: str
    wall_ns: int
    sweeps: tuple[int, ...] = ()
    agrees_oracle: bool | None = None
    w: int | None = None
    accepted: int | None = None
    certificate: bool | None = None

    def to_row(self) -> list[str]:
        def opt(v: Any) -> str:
            if v is None:
                return ""
            if isinstance(v, bool):
                return "true" if v else "false"
            return str(v)

        return [self.network, str(self.seed), repr(self.redundancy), str(self.k), self.method,
                str(self.wall_ns), ";".join(map(str, self.sweeps)), opt(self.agrees_oracle),
                opt(self.w), opt(self.accepted), opt(self.certificate)]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "BenchRecord":
        d = dict(zip(CSV_HEADER, row))

        def flag(s: str) -> bool | None:
            return None if s == "" else s == "true"

        def num(s: str) -> int | None:
            return None if s == "" else int(s)

        return cls(d["network"], int(d["seed"]), float(d["redundancy"]), int(d["k"]), d["method"],
                   int(d["wall_ns"]), tuple(int(x) for x in d["sweeps"].split(";") if x),
                   flag(d["agrees_oracle"]), num(d["w"]), num(d["accepted"]), flag(d["certificate"]))


def write_csv(records: Iterable[BenchRecord], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.to_row())


def read_csv(stream) -> list[BenchRecord]:
    rows = csv.reader(stream)
    header = next(rows)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    return [BenchRecord.from_row(r) for r in rows]


@dataclass(frozen=True)
class BenchSpec:
    """What to benchmark: a network plus the configuration sweep."""

    network: PowerNetwork
    configs: int
    redundancy: tuple[float, float]
    seed: int = 0
    methods: tuple[str, ...] = ("gbp", "oracle")

    def __post_init__(self) -> None:
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown method(s) {sorted(bad)}")
        lo, hi = self.redundancy
        if not 0 <= lo <= hi:
            raise ValueError("redundancy range must satisfy 0 <= lo <= hi")

    def config_seeds(self) -> list[int]:
        return [int(s) for s in np.random.SeedSequence(self.seed).generate_state(self.configs, np.uint64)]

    def redundancy_for(self, seed: int) -> float:
        lo, hi = self.redundancy
        return float(np.random.default_rng(seed).uniform(lo, hi)) if hi > lo else lo


@dataclass
class _Outcome:
    records: list[BenchRecord] = field(default_factory=list)
    failures: list[dict[str, Any]] = field(default_factory=list)


def _timed(fn, *args):
    t = time.perf_counter_ns()
    out = fn(*args)
    return out, max(time.perf_counter_ns() - t, 1)


def run_config(spec: BenchSpec, cfg: RunConfig, seed: int) -> _Outcome:
    """Generate configuration ``seed`` and run every method on it."""
    net = spec.network
    red = spec.redundancy_for(seed)
    res = _Outcome()
    name = net.name or f"{net.n}-bus"
    try:
        ms = generate_measurement_config(net, red, seed)
        J = build_jacobian(net, ms)
    except Exception as exc:  # a bad configuration is recorded, never fatal
        res.failures.append({"seed": seed, "method": "generate", "error": repr(exc)})
        return res
    truth = None
    if "oracle" in spec.methods and net.n <= cfg.oracle_cap:
        truth, ns = _timed(oracle_islands, net, J)
        res.records.append(BenchRecord(name, seed, red, truth.k, "oracle", ns))
    for method in spec.methods:
        if method == "oracle":
            continue
        try:
            if method == "gbp":
                det, ns = _timed(detect_islands, net, ms, cfg.detection(), J)
                part = det.partition
            else:
                part, ns = _timed(topological_islands, net, ms)
        except AmbiguousConvergence as exc:
            res.failures.append({"seed": seed, "method": method, "error": str(exc), "pass": exc.pass_index})
            res.records.append(BenchRecord(name, seed, red, -1, method, 1))
            continue
        agree = None if truth is None else partitions_equal(part, truth)
        w = acc = cert = None
        if method == "gbp" and cfg.restore:
            w, acc, cert = _restoration_fields(net, ms, det, cfg, seed, res)
        res.records.append(BenchRecord(name, seed, red, part.k, method, ns, tuple(part.sweeps), agree, w, acc, cert))
    return res


def _restoration_fields(net, ms, det, cfg: RunConfig, seed: int, res: _Outcome):
    pseudo = boundary_pseudo_candidates(net, det.partition, ms)
    try:
        r = restore(net, ms, det, pseudo, cfg.sweep)
        return r.problem.w, len(r.result.accepted), r.result.certificate
    except CandidatesExhausted as exc:
        res.failures.append({"seed": seed, "method": "restore", "error": str(exc)})
        return None, len(exc.result.accepted), exc.result.certificate
    except AmbiguousConvergence as exc:
        res.failures.append({"seed": seed, "method": "restore", "error": str(exc)})
        return None, None, None


def _worker(args):
    spec, cfg, seeds = args
    out = _Outcome()
    for s in seeds:
        r = run_config(spec, cfg, s)
        out.records += r.records
        out.failures += r.failures
    return out


_METHOD_RANK = {m: i for i, m in enumerate(METHODS)}


def run_benchmark(spec: BenchSpec, cfg: RunConfig = RunConfig()) -> tuple[list[BenchRecord], list[dict[str, Any]]]:
    """All records (sorted by config seed, then method) and the recorded failures."""
    seeds = spec.config_seeds()
    if cfg.workers == 1 or len(seeds) < 2:
        out = _worker((spec, cfg, seeds))
        parts = [out]
    else:
        chunks = [seeds[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_worker, [(spec, cfg, c) for c in chunks if c]))
    records = [r for p in parts for r in p.records]
    failures = [f for p in parts for f in p.failures]
    records.sort(key=lambda r: (r.seed, _METHOD_RANK[r.method]))
    failures.sort(key=lambda f: (f["seed"], f["method"]))
    return records, failures


def summarize(records: Sequence[BenchRecord], cfg: RunConfig, failures: Sequence[dict] = ()) -> dict[str, Any]:
    """Agreement rates and, per island-count bin, quartiles of ``t_method / t_gbp``."""
    by_seed: dict[int, dict[str, BenchRecord]] = {}
    for r in records:
        by_seed.setdefault(r.seed, {})[r.method] = r
    methods = sorted({r.method for r in records}, key=_METHOD_RANK.get)
    agreement = {}
    for m in methods:
        flags = [r.agrees_oracle for r in records if r.method == m and r.agrees_oracle is not None]
        if flags:
            agreement[m] = {"n": len(flags), "rate": sum(flags) / len(flags)}
    bins: dict[str, Any] = {}
    for lo, hi in BINS:
        entry: dict[str, Any] = {}
        for m in methods:
            ratios = []
            for recs in by_seed.values():
                g = recs.get("gbp")
                r = recs.get(m)
                k = recs["oracle"].k if "oracle" in recs else (g.k if g else -1)
                if g is None or r is None or g.k < 0 or r.k < 0 or not lo <= k <= hi:
                    continue
                ratios.append(r.wall_ns / g.wall_ns)
            if ratios:
                q1, med, q3 = np.percentile(ratios, [25, 50, 75])
                entry[m] = {"n": len(ratios), "q1": float(q1), "median": float(med), "q3": float(q3)}
        bins[f"{lo}-{hi}"] = entry
    restored = [r for r in records if r.method == "gbp" and r.certificate is not None]
    return {
        "run_config": cfg.to_json(),
        "configs": len(by_seed),
        "records": len(records),
        "agreement": agreement,
        "bins": bins,
        "restoration": {
            "n": len(restored),
            "certified": sum(bool(r.certificate) for r in restored),
        },
        "failures": list(failures),
    }


def synthetic_spec(buses: int, avg_degree: float, configs: int, redundancy: tuple[float, float],
                   seed: int = 0, methods: Sequence[str] = ("gbp", "oracle")) -> BenchSpec:
    net = make_synthetic_network(buses, avg_degree, seed)
    return BenchSpec(net, configs, redundancy, seed, tuple(methods))


def records_to_csv_text(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def dump_json(doc: Any, path: str | None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=False)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
