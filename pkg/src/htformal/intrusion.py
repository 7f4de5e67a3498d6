"""Hardware-Trojan insertion models and intrusion-size sweeps.

PARALLEL intrusions hang extra gates on a host net (load only, outputs
dangle). SERIES intrusions splice a chain of inverting gates into the net in
pairs, so the logic function is preserved while loading and timing change.
Intruded circuits keep the designed sizing of the base gates; inserted gates
are minimum size.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .netlist import (
    CP, DFF, FEEDBACK, INPUT, LOCATION_CLASSES, NAND2, NCP, NOR2, NOT, OUTPUT, TIE0, TIE1,
    Circuit, Gate, NetlistError, PathDescriptor, classify_locations,
)
from .logicsim import Simulator
from .sidechannel import GateTables
from .techmodel import TechnologyParams, pin_capacitance, stack_params

PARALLEL = "PARALLEL"
SERIES = "SERIES"
MODES = (PARALLEL, SERIES)
ATTACH_BOTH = "both"
ATTACH_SINGLE = "single"
METRICS = ("DP", "LP", "DELAY")


class IntrusionError(NetlistError):
    pass


@dataclass(frozen=True)
class IntrusionSpec:
    target: str  # net name or location class
    mode: str = PARALLEL
    size: int = 1
    gate_kind: str = NAND2
    seed: int = 0
    attach: str = ATTACH_BOTH
    payload: str | None = None  # trigger net; XORs the host net with it

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("intrusion size must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.gate_kind not in (NAND2, NOR2, NOT):
            raise ValueError("inserted gates must be NAND2, NOR2 or NOT")
        if self.attach not in (ATTACH_BOTH, ATTACH_SINGLE):
            raise ValueError("attach must be 'both' or 'single'")


@dataclass(frozen=True, eq=False)
class IntrudedCircuit:
    base: Circuit
    specs: tuple[IntrusionSpec, ...]
    circuit: Circuit
    targets: tuple[str, ...]  # resolved host net per spec
    host_of: Mapping[str, str]  # inserted gate -> host net
    spliced: Mapping[str, tuple[str, ...]]  # host net -> series chain gates
    sources: Mapping[str, tuple[str, ...]]  # spliced host net -> renamed upstream nets
    c_int: Mapping[str, float]  # host net -> added input capacitance (given params)

    @property
    def trojan_gates(self) -> tuple[str, ...]:
        return tuple(sorted(self.host_of))


def resolve_target(base: Circuit, spec: IntrusionSpec, params: TechnologyParams | None = None) -> str:
    """Host net for ``spec``: the net itself, or a seeded pick within a class."""
    if spec.target not in LOCATION_CLASSES:
        if spec.target not in base.nets:
            raise IntrusionError(f"unknown net {spec.target}")
        net = spec.target
    else:
        classes = location_classes(base, params)
        cands = sorted(n for n, k in classes.items() if k == spec.target)
        if spec.mode == SERIES:
            cands = [n for n in cands if n not in base.inputs]
        if not cands:
            raise IntrusionError(f"no {spec.target} nets available for {spec.mode} intrusion")
        net = random.Random(spec.seed).choice(cands)
    if spec.mode == SERIES and net in base.inputs:
        raise IntrusionError(f"cannot splice into primary input {net}")
    return net


def location_classes(circuit: Circuit, params: TechnologyParams | None = None) -> dict[str, str]:
    """Location class of every net, with critical paths from nominal worst-case delays."""
    if circuit.cyclic:
        return classify_locations(circuit)
    params = params or TechnologyParams.default()
    return classify_locations(circuit, GateTables(circuit, params).worst_delays(0))


def _fresh(circuit_nets, base: str) -> str:
    name, k = base, 0
    while name in circuit_nets:
        k += 1
        name = f"{base}_{k}"
    return name


def inject(circuit, spec: IntrusionSpec | Sequence[IntrusionSpec],
           params: TechnologyParams | None = None) -> IntrudedCircuit:
    """Insert one or more intrusions; an :class:`IntrudedCircuit` input is extended."""
    params = params or TechnologyParams.default()
    if isinstance(circuit, IntrudedCircuit):
        state = circuit
    else:
        empty = MappingProxyType({})
        state = IntrudedCircuit(circuit, (), circuit, (), empty, empty, empty, empty)
    specs = [spec] if isinstance(spec, IntrusionSpec) else list(spec)
    for s in specs:
        state = _inject_one(state, s, params)
    return state


def _inject_one(state: IntrudedCircuit, spec: IntrusionSpec, params: TechnologyParams) -> IntrudedCircuit:
    base = state.base
    net = resolve_target(base, spec, params)
    cur = state.circuit
    k = len(state.specs)
    gates = {g.name: g for g in cur.gates.values()}
    taken = set(cur.nets) | set(gates)
    host_of = dict(state.host_of)
    spliced = {h: tuple(v) for h, v in state.spliced.items()}
    sources = dict(state.sources)
    kind = spec.gate_kind
    serial = iter(range(1 << 30))

    def add(kind_: str, ins: tuple[str, ...], out: str | None = None) -> str:
        name = _fresh(taken, f"HT{k}_{next(serial)}")
        out = out or name
        taken.update((name, out))
        gates[name] = Gate(name, kind_, ins, out, 1)
        host_of[name] = net
        return out

    def tap(x: str) -> None:
        if kind == NOT:
            add(NOT, (x,))
        elif spec.attach == ATTACH_BOTH:
            add(kind, (x, x))
        else:
            # the other pin is tied to the non-controlling value
            tie = add(TIE1 if kind == NAND2 else TIE0, ())
            add(kind, (x, tie))

    def inverter(x: str, out: str | None = None) -> str:
        return add(NOT, (x,), out) if kind == NOT else add(kind, (x, x), out)

    def reroute(new_src: str) -> str:
        """Rename the driver of ``net`` to ``new_src`` and return it."""
        drv = cur.driver_of(net)
        if drv is None:
            raise IntrusionError(f"cannot splice into primary input {net}")
        g = gates[drv.name]
        gates[drv.name] = Gate(g.name, g.kind, g.inputs, new_src, g.fanout_count)
        taken.add(new_src)
        sources[net] = sources.get(net, ()) + (new_src,)
        return new_src

    if spec.payload is not None:
        if spec.payload not in cur.nets:
            raise IntrusionError(f"unknown trigger net {spec.payload}")
        # the XOR payload itself accounts for four of the gates
        src = reroute(_fresh(taken, f"{net}__ht{k}"))
        before = set(host_of)
        m = add(NAND2, (src, spec.payload))
        p = add(NAND2, (src, m))
        q = add(NAND2, (spec.payload, m))
        add(NAND2, (p, q), net)
        spliced[net] = spliced.get(net, ()) + tuple(sorted(set(host_of) - before))
        for _ in range(max(0, spec.size - 4)):
            tap(net)
    elif spec.mode == PARALLEL:
        for _ in range(spec.size):
            tap(net)
    else:
        pairs, odd = divmod(spec.size, 2)
        if pairs:
            x = reroute(_fresh(taken, f"{net}__ht{k}"))
            before = set(host_of)
            for i in range(pairs):
                y = inverter(x)
                x = inverter(y, net if i == pairs - 1 else None)
            spliced[net] = spliced.get(net, ()) + tuple(sorted(set(host_of) - before))
        if odd:
            tap(net)
    try:
        circuit = Circuit.build(cur.name, cur.inputs, cur.outputs, gates.values(),
                                resize=False, allow_cycles=cur.cyclic)
    except NetlistError as exc:
        raise IntrusionError(f"intrusion on {net} breaks the netlist: {exc}") from None
    c_int = dict(state.c_int)
    watched = {net, *sources.get(net, ())}
    pins = sum(1 for n in watched for g, _ in circuit.sinks(n)
               if host_of.get(g) == net and circuit.gates[g].kind not in (TIE0, TIE1))
    c_int[net] = float(pins * pin_capacitance(params, 1))
    return IntrudedCircuit(base, state.specs + (spec,), circuit, state.targets + (net,),
                           MappingProxyType(host_of), MappingProxyType(spliced),
                           MappingProxyType(sources), MappingProxyType(c_int))


def lift_paths(paths: Sequence[PathDescriptor], intruded: IntrudedCircuit) -> list[PathDescriptor]:
    """Base-circuit paths re-expressed in the intruded circuit: series chains
    spliced into a path net become part of the path."""
    out = []
    for p in paths:
        seq: list[str] = []
        for g in p.gates:
            seq.append(g)
            net = intruded.base.gates[g].output
            chain = intruded.spliced.get(net, ())
            # payload XOR gates are spliced too; follow the data input side only
            seq.extend(chain)
        out.append(PathDescriptor(tuple(seq), p.delay, p.critical))
    return out


# ------------------------------------------------------------ static metrics

def longest_delay(circuit: Circuit, gate_delay: np.ndarray, index: Mapping[str, int]) -> np.ndarray:
    """Largest source-to-sink sum of per-gate delays, per sample column."""
    S = gate_delay.shape[1]
    arrival: dict[str, np.ndarray] = {}
    zero = np.zeros(S)
    best = zero
    for name in circuit.order:
        g = circuit.gates[name]
        t = zero
        for i in g.inputs:
            t = np.maximum(t, arrival.get(i, zero))
        arrival[g.output] = t + gate_delay[index[name]]
        if circuit.is_sink(g.output):
            best = np.maximum(best, arrival[g.output])
    return best


def static_metrics(circuit: Circuit, params, *, pad_capacitance: float = 0.0,
                   sink_capacitance: float = 0.0) -> dict[str, np.ndarray]:
    """Circuit-level DP (every gate toggling), worst-state LP and critical delay,
    one value per parameter set."""
    t = GateTables(circuit, params, pad_capacitance=pad_capacitance, sink_capacitance=sink_capacitance)
    lp = np.where(t.valid_states[:, :, None], t.leak, -np.inf).max(axis=1)
    lp = np.where(np.isfinite(lp), lp, 0.0)
    out = {"DP": (t.dp + t.dp_d).sum(axis=0), "LP": lp.sum(axis=0)}
    if circuit.cyclic:
        out["DELAY"] = np.full(t.n_samples, np.nan)
    else:
        out["DELAY"] = longest_delay(circuit, t.delay.max(axis=(1, 2)), t.index)
    return out


@dataclass(frozen=True)
class EffectRow:
    size: int
    net: str
    dDP: float
    dLP: float
    dDELAY: float
    overlap: Mapping[str, bool] = field(default_factory=dict)


def _envelope(circuit: Circuit, params: TechnologyParams, samples) -> dict[str, tuple[float, float]]:
    pool = [params] + list(samples)
    m = static_metrics(circuit, stack_params(pool))
    return {k: (float(np.min(v)), float(np.max(v))) for k, v in m.items()}


def sweep(circuit: Circuit, location_class: str, mode: str, sizes: Sequence[int],
          params: TechnologyParams, samples, *, seed: int = 0, gate_kind: str = NAND2,
          attach: str = ATTACH_BOTH) -> list[EffectRow]:
    """Effect of growing intrusions on one (seeded) host net of a class.

    ``overlap[metric]`` is True when the intruded nominal value still lies in
    the clean circuit's process-variation envelope (the intrusion hides).
    """
    env = _envelope(circuit, params, samples)
    clean = {k: float(v[0]) for k, v in static_metrics(circuit, params).items()}
    net = resolve_target(circuit, IntrusionSpec(location_class, mode, 1, gate_kind, seed, attach), params)
    rows = []
    for size in sizes:
        if size == 0:
            m = clean
        else:
            ic = inject(circuit, IntrusionSpec(net, mode, size, gate_kind, seed, attach), params)
            m = {k: float(v[0]) for k, v in static_metrics(ic.circuit, params).items()}
        overlap = {k: bool(env[k][0] <= m[k] <= env[k][1]) for k in METRICS if not np.isnan(m[k])}
        rows.append(EffectRow(size, net, m["DP"] - clean["DP"], m["LP"] - clean["LP"],
                              m["DELAY"] - clean["DELAY"], overlap))
    return rows


def effects_csv(rows: Sequence[EffectRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size", "net", "dDP_w", "dLP_w", "dDELAY_s", "hidden_DP", "hidden_LP", "hidden_DELAY"])
    for r in rows:
        w.writerow([r.size, r.net, f"{r.dDP:.9g}", f"{r.dLP:.9g}", f"{r.dDELAY:.9g}",
                    *(str(r.overlap.get(k, "")).lower() for k in METRICS)])
    return buf.getvalue()


def mean_leakage(circuit: Circuit, params: TechnologyParams, input_trace: np.ndarray) -> float:
    """Leakage averaged over the settled cycles of one input sequence from reset."""
    sim = Simulator(circuit)
    vals = np.stack(sim.run(input_trace), axis=1)
    t = GateTables(circuit, params)
    total = 0.0
    for i, name in enumerate(t.names):
        g = circuit.gates[name]
        if g.kind in (TIE0, TIE1):
            continue
        if g.kind == DFF:
            state = 2 * vals[sim.index[g.inputs[0]]].astype(int) + vals[sim.index[g.output]]
        else:
            state = np.zeros(vals.shape[1], dtype=int)
            for net in g.inputs:
                state = 2 * state + vals[sim.index[net]]
        total += float(t.leak[i, state, 0].mean())
    return total


def location_impact(circuit: Circuit, params: TechnologyParams, *, size: int = 1, cycles: int = 64,
                    seed: int = 0, gate_kind: str = NAND2, attach: str = ATTACH_BOTH,
                    classes: Sequence[str] = (INPUT, OUTPUT, CP, NCP)) -> dict[str, float]:
    """Mean relative leakage change of a parallel intrusion, per location class.

    Every net of a class hosts the intrusion in turn; leakage is averaged over
    one seeded random input sequence shared by the clean and intruded runs.
    """
    rng = np.random.default_rng(seed)
    trace = rng.integers(0, 2, size=(cycles, len(circuit.inputs))).astype(bool)
    base = mean_leakage(circuit, params, trace)
    by_class: dict[str, list[str]] = {}
    for net, k in sorted(location_classes(circuit, params).items()):
        by_class.setdefault(k, []).append(net)
    out = {}
    for k in classes:
        nets = by_class.get(k, [])
        if not nets:
            continue
        rel = [(mean_leakage(inject(circuit, IntrusionSpec(net, PARALLEL, size, gate_kind, seed, attach),
                                    params).circuit, params, trace) - base) / base for net in nets]
        out[k] = float(np.mean(rel))
    return out


NOT_FOUND = None


def min_detectable_size(circuit: Circuit, location_class: str, metric: str, params: TechnologyParams,
                        samples, max_size: int, *, mode: str = PARALLEL, seed: int = 0,
                        gate_kind: str = NAND2, attach: str = ATTACH_BOTH) -> int | None:
    """Smallest intrusion size whose nominal metric leaves the clean envelope.

    Growing an intrusion never lowers any of the three metrics, so the
    predicate is monotone in size and a bisection finds the first hit.
    Returns None (not found) when even ``max_size`` stays hidden.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    lo_env, hi_env = _envelope(circuit, params, samples)[metric]
    net = resolve_target(circuit, IntrusionSpec(location_class, mode, 1, gate_kind, seed, attach), params)

    def exits(size: int) -> bool:
        ic = inject(circuit, IntrusionSpec(net, mode, size, gate_kind, seed, attach), params)
        v = float(static_metrics(ic.circuit, params)[metric][0])
        return v > hi_env or v < lo_env

    if not exits(max_size):
        return NOT_FOUND
    lo, hi = 0, max_size  # exits(hi) is True; sizes <= lo are hidden
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if exits(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ------------------------------------------------------------------ spec file

def loads_specs(text: str) -> list[IntrusionSpec]:
    """Records ``target mode size [kind] [seed] [attach=...] [payload=NET]``, one per line."""
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        opts = dict(p.split("=", 1) for p in parts if "=" in p)
        pos = [p for p in parts if "=" not in p]
        if len(pos) < 3 or len(pos) > 5:
            raise ValueError(f"line {lineno}: expected 'target mode size [kind] [seed]'")
        try:
            specs.append(IntrusionSpec(
                target=pos[0], mode=pos[1].upper(), size=int(pos[2]),
                gate_kind=pos[3].upper() if len(pos) > 3 else NAND2,
                seed=int(pos[4]) if len(pos) > 4 else 0,
                attach=opts.pop("attach", ATTACH_BOTH), payload=opts.pop("payload", None),
            ))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if opts:
            raise ValueError(f"line {lineno}: unknown option(s) {sorted(opts)}")
    return specs


def dumps_specs(specs: Sequence[IntrusionSpec]) -> str:
    lines = ["# target mode size kind seed [attach=...] [payload=...]"]
    for s in specs:
        extra = "" if s.attach == ATTACH_BOTH else f" attach={s.attach}"
        if s.payload:
            extra += f" payload={s.payload}"
        lines.append(f"{s.target} {s.mode} {s.size} {s.gate_kind} {s.seed}{extra}")
    return "\n".join(lines) + "\n"

