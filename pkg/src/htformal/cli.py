"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 invariant violation, 3 exploration
budget exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .benchmarks import BUILTINS, builtin
from .checker import (
    UNKNOWN_BUDGET, AnalysisReport, attribution_for, complement, ranking_table, summary_csv, vulnerability_analysis,
)
from .intrusion import (
    METRICS, MODES, IntrudedCircuit, IntrusionError, effects_csv, inject, lift_paths, loads_specs,
    min_detectable_size, sweep,
)
from .netlist import (
    CP, LOCATION_CLASSES, BenchSyntaxError, Circuit, NetlistError, decompose_universal, enumerate_paths,
    parse_bench,
)
from .sidechannel import GateTables, circuit_bounds, profile
from .statespace import BudgetExceeded, InputPolicy, build, estimate_coverage, to_smv
from .techmodel import (
    ParameterError, TechnologyParams, VariationSpec, default_variation, loads_params, loads_variation,
    sample_variations,
)

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_BUDGET = 0, 1, 2, 3
REPORT_FORMAT = 1


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    netlist: str
    tech: str | None = None
    variation: str | None = None
    intrude: str | None = None
    bound: int = 2
    policy: str = "exhaustive"
    metrics: tuple[str, ...] = ("dp", "lp", "delay")
    out: str = "out"
    seed: int | None = None
    paths: int = 8
    max_iterations: int = 10_000
    max_size: int = 256
    emit_smv: bool = False

    def __post_init__(self):
        if self.bound < 1:
            raise InputError("bound must be >= 1")
        bad = [m for m in self.metrics if m not in ("dp", "lp", "delay")]
        if bad:
            raise InputError(f"unknown metric(s): {', '.join(bad)}")


# ------------------------------------------------------------------ loading

def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def load_netlist(spec: str) -> Circuit:
    """A .bench path or ``builtin:NAME``; returned in NAND2/NOR2/NOT form."""
    if spec.startswith("builtin:"):
        try:
            c = builtin(spec.split(":", 1)[1])
        except KeyError:
            raise InputError(f"unknown built-in {spec!r}; choose from {', '.join(BUILTINS)}") from None
    else:
        c = parse_bench(_read(spec), Path(spec).stem)
    return c if c.is_universal() else decompose_universal(c)


def load_params(path: str | None) -> TechnologyParams:
    return TechnologyParams.default() if path is None else loads_params(_read(path))


def load_variation(path: str | None, nominal: TechnologyParams, seed: int | None) -> VariationSpec:
    spec = default_variation(nominal) if path is None else loads_variation(_read(path), nominal)
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    return spec


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_hash(cfg: RunConfig) -> str:
    """Hash of the configuration and of every input file's content."""
    parts = {"config": {k: v for k, v in asdict(cfg).items() if k != "out"}}
    for key in ("netlist", "tech", "variation", "intrude"):
        ref = getattr(cfg, key)
        if ref and not ref.startswith("builtin:"):
            parts[f"{key}_sha256"] = _sha(_read(ref))
    return _sha(json.dumps(parts, sort_keys=True))


# ----------------------------------------------------------------- commands

def cmd_parse(netlist: str) -> dict:
    raw = builtin(netlist.split(":", 1)[1]) if netlist.startswith("builtin:") else \
        parse_bench(_read(netlist), Path(netlist).stem)
    uni = raw if raw.is_universal() else decompose_universal(raw)
    summary = {
        "name": raw.name,
        "inputs": len(raw.inputs),
        "outputs": len(raw.outputs),
        "flipflops": len(raw.flipflops),
        "histogram": raw.histogram(),
        "universal_histogram": uni.histogram(),
    }
    if not uni.cyclic:
        delays = GateTables(uni, TechnologyParams.default()).worst_delays(0)
        top = enumerate_paths(uni, delays, limit=1)
        summary["critical_path_gates"] = len(top[0].gates) if top else 0
        summary["critical_path_delay_s"] = top[0].delay if top else 0.0
    return summary


def cmd_coverage(n_inputs: int, gates: int | None, nodes: int | None, rate: float) -> list[dict]:
    rows = estimate_coverage(n_inputs, gates, nodes, rate)
    return [{"item": r.label, "count": r.count, "patterns": str(r.patterns),
             "seconds": r.seconds_text(), "years": r.years_text()} for r in rows]


def _counterexample_json(ce) -> dict:
    return {
        "pattern": list(ce.pattern),
        "sequence": list(ce.sequence),
        "step": ce.step,
        "value": ce.value,
        "bound": ce.bound,
        "path": ce.path,
        "implicated": [{"net": n, "excess": e} for n, e in ce.implicated],
        "trace": [{"step": t.step, "state": t.state, "input": t.input, "next_input": t.next_input,
                   "DP": t.valuation.DP, "LP": t.valuation.LP, "D": list(t.valuation.D)}
                  for t in ce.trace],
    }


def cmd_analyze(cfg: RunConfig) -> tuple[dict, AnalysisReport, dict]:
    """Envelope, optional intrusion, state space, exception loop. Returns
    (deterministic report, analysis, extra output files)."""
    clean = load_netlist(cfg.netlist)
    nominal = load_params(cfg.tech)
    vspec = load_variation(cfg.variation, nominal, cfg.seed)
    samples = [nominal] + sample_variations(vspec)
    policy = InputPolicy.parse(cfg.policy, vspec.seed if cfg.seed is None else cfg.seed)
    clean_sys = build(clean, nominal, path_limit=cfg.paths)
    envelope = circuit_bounds(clean, samples, clean_sys.paths)
    intruded: IntrudedCircuit | None = None
    if cfg.intrude:
        specs = loads_specs(_read(cfg.intrude))
        if not specs:
            raise InputError("intrusion file lists no intrusions")
        intruded = inject(clean, specs, nominal)
        system = build(intruded.circuit, nominal, lift_paths(clean_sys.paths, intruded))
        attribution = attribution_for(system, intruded, clean_sys, envelope)
    else:
        system = clean_sys
        attribution = attribution_for(system, None, None, envelope)
    report = vulnerability_analysis(system, envelope, cfg.bound, policy, cfg.max_iterations,
                                    metrics=cfg.metrics, attribution=attribution)
    targets = list(dict.fromkeys(intruded.targets)) if intruded else [CP]
    for target in targets:
        for metric in METRICS:
            try:
                report.min_detectable[f"{target}:{metric}"] = min_detectable_size(
                    clean, target, metric, nominal, samples[1:], cfg.max_size)
            except IntrusionError:
                report.min_detectable[f"{target}:{metric}"] = None
    doc = {
        "format": REPORT_FORMAT,
        "tool": "htformal",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "config_hash": config_hash(cfg),
        "seed": vspec.seed,
        "circuit": {"name": clean.name, "inputs": len(clean.inputs), "outputs": len(clean.outputs),
                    "flipflops": len(clean.flipflops), "histogram": clean.histogram()},
        "variation_samples": len(samples),
        "intrusions": [] if intruded is None else [
            {"target": s.target, "net": net, "mode": s.mode, "size": s.size, "kind": s.gate_kind,
             "seed": s.seed, "attach": s.attach, "c_int_F": intruded.c_int[net]}
            for s, net in zip(intruded.specs, intruded.targets)],
        "envelope": {"DP_max_W": envelope.DP_max, "LP_max_W": envelope.LP_max, "LP_min_W": envelope.LP_min,
                     "D_max_s": list(envelope.D_max),
                     "paths": [list(p.gates) for p in envelope.paths]},
        "properties": {
            name: {"ltl": r.property.to_ltl(), "verdict": r.verdict, "invocations": r.invocations,
                   "truncated": r.truncated, "scanned": r.scanned, "evaluated": r.evaluated,
                   "visited": r.visited, "counterexamples": [_counterexample_json(ce) for ce in r.counterexamples]}
            for name, r in report.results.items()
        },
        "vulnerable_locations": [{"net": n, "count": c, "max_excess": e} for n, c, e in ranking_table(report)],
        "min_detectable_size": report.min_detectable,
        "qualitative_reference": {
            "note": "orderings and existence of hiding thresholds only; no numbers here are tool output",
            "claims": [
                "small intrusions hide inside the process-variation envelope up to a size threshold",
                "the hiding threshold grows with process variation",
            ],
        },
    }
    extra = {"summary.csv": summary_csv(report), "envelope.txt": envelope.to_text()}
    if cfg.emit_smv:
        bounds = {"DP_MAX": envelope.DP_max, "LP_MAX": envelope.LP_max, "LP_MIN": envelope.LP_min}
        bounds.update({f"D_MAX_{k}": v for k, v in enumerate(envelope.D_max)})
        specs_ltl = [complement(dataclasses.replace(r.property, exceptions=frozenset())).to_ltl()
                     for r in report.results.values()]
        extra["model.smv"] = to_smv(system, specs_ltl, bounds=bounds)
    return doc, report, extra


def write_outputs(out: str, doc: dict, report: AnalysisReport, extra: dict) -> None:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    perf = {"wall_time_s": report.wall_time, "memory_peak_bytes": report.memory_peak}
    (d / "perf.json").write_text(json.dumps(perf, indent=2) + "\n", encoding="utf-8")
    for name, text in extra.items():
        (d / name).write_text(text, encoding="utf-8")


def parse_sizes(text: str) -> list[int]:
    """``0,1,2,8`` or ``start:stop[:step]`` (stop inclusive)."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",") if p.strip()]


def cmd_sweep(netlist: str, location: str, mode: str, sizes: Sequence[int], tech: str | None,
              variation: str | None, seed: int | None, max_size: int, out: str | None) -> dict:
    c = load_netlist(netlist)
    nominal = load_params(tech)
    vspec = load_variation(variation, nominal, seed)
    samples = sample_variations(vspec)
    rows = sweep(c, location, mode, sizes, nominal, samples, seed=seed or 0)
    thresholds = {m: min_detectable_size(c, location, m, nominal, samples, max_size, mode=mode, seed=seed or 0)
                  for m in METRICS}
    text = effects_csv(rows)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "effects.csv").write_text(text, encoding="utf-8")
        (d / "thresholds.json").write_text(json.dumps(thresholds, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return {"csv": text, "thresholds": thresholds}


# ---------------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="htformal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="structural summary of a netlist")
    sp.add_argument("--netlist", required=True, help=".bench file or builtin:NAME")
    sp.add_argument("--json", action="store_true")

    def common(a):
        a.add_argument("--netlist", required=True, help=".bench file or builtin:NAME")
        a.add_argument("--tech", help="technology parameter file (default: built-in 45 nm set)")
        a.add_argument("--variation", help="variation spec file (default: 5%% gaussian)")
        a.add_argument("--seed", type=int, help="overrides the variation and policy seed")

    an = sub.add_parser("analyze", help="run the vulnerability analysis")
    common(an)
    an.add_argument("--intrude", help="intrusion spec file")
    an.add_argument("--bound", type=int, default=2)
    an.add_argument("--policy", default="exhaustive", help="exhaustive | random:N")
    an.add_argument("--metrics", default="dp,lp,delay")
    an.add_argument("--paths", type=int, default=8, help="monitored delay paths")
    an.add_argument("--max-iterations", type=int, default=10_000)
    an.add_argument("--max-size", type=int, default=256, help="largest intrusion for detectability search")
    an.add_argument("--out", default="out")
    an.add_argument("--emit-smv", action="store_true")

    cv = sub.add_parser("coverage", help="exhaustive-test cost estimate")
    cv.add_argument("--inputs", type=int, required=True)
    cv.add_argument("--gates", type=int)
    cv.add_argument("--nodes", type=int)
    cv.add_argument("--rate", type=float, default=10.0, help="tests per second")

    sw = sub.add_parser("sweep", help="intrusion size sweep at a location class")
    common(sw)
    sw.add_argument("--location", default=CP, choices=LOCATION_CLASSES)
    sw.add_argument("--mode", default="PARALLEL", type=str.upper, choices=MODES)
    sw.add_argument("--sizes", default="0:16")
    sw.add_argument("--max-size", type=int, default=256)
    sw.add_argument("--out")

    pf = sub.add_parser("profile", help="per-gate metrics and bound envelope")
    common(pf)
    pf.add_argument("--out", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except BenchSyntaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ParameterError, ValueError, KeyError) as exc:
        if isinstance(exc, NetlistError) and not isinstance(exc, IntrusionError):
            print(f"invariant violation: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


def _dispatch(args) -> int:
    if args.command == "parse":
        s = cmd_parse(args.netlist)
        if args.json:
            print(json.dumps(s, indent=2, sort_keys=True))
        else:
            print(f"{s['name']}: {s['inputs']} inputs, {s['outputs']} outputs, {s['flipflops']} flip-flops")
            print("gates: " + ", ".join(f"{k}:{v}" for k, v in s["histogram"].items()))
            print("universal: " + ", ".join(f"{k}:{v}" for k, v in s["universal_histogram"].items()))
            if "critical_path_gates" in s:
                print(f"critical path: {s['critical_path_gates']} gates, {s['critical_path_delay_s']:.6g} s")
        return EXIT_OK
    if args.command == "coverage":
        rows = cmd_coverage(args.inputs, args.gates, args.nodes, args.rate)
        print("item,count,patterns,seconds,years")
        for r in rows:
            print(f"{r['item']},{r['count']},{r['patterns']},{r['seconds']},{r['years']}")
        return EXIT_OK
    if args.command == "analyze":
        cfg = RunConfig(args.netlist, args.tech, args.variation, args.intrude, args.bound, args.policy,
                        tuple(m.strip() for m in args.metrics.split(",") if m.strip()), args.out, args.seed,
                        args.paths, args.max_iterations, args.max_size, args.emit_smv)
        doc, report, extra = cmd_analyze(cfg)
        write_outputs(cfg.out, doc, report, extra)
        print(summary_csv(report), end="")
        ranked = doc["vulnerable_locations"]
        if ranked:
            print("vulnerable: " + ", ".join(r["net"] for r in ranked[:10]))
        if any(r.verdict == UNKNOWN_BUDGET for r in report.results.values()):
            return EXIT_BUDGET
        return EXIT_OK
    if args.command == "sweep":
        res = cmd_sweep(args.netlist, args.location, args.mode, parse_sizes(args.sizes), args.tech,
                        args.variation, args.seed, args.max_size, args.out)
        print(res["csv"], end="")
        print("thresholds: " + ", ".join(f"{k}={'not found' if v is None else v}"
                                         for k, v in res["thresholds"].items()))
        return EXIT_OK
    if args.command == "profile":
        c = load_netlist(args.netlist)
        nominal = load_params(args.tech)
        samples = [nominal] + sample_variations(load_variation(args.variation, nominal, args.seed))
        paths = build(c, nominal).paths if not c.cyclic else ()
        prof = profile(c, nominal, paths)
        env = circuit_bounds(c, samples, paths)
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "profile.csv").write_text(prof.to_csv(), encoding="utf-8")
        (d / "envelope.txt").write_text(env.to_text(), encoding="utf-8")
        print(env.to_text(), end="")
        return EXIT_OK
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
