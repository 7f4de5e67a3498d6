"""Gate-level sequential netlists.

Parses ISCAS89 ``.bench`` text into an immutable :class:`Circuit`, rewrites
arbitrary gates into the NAND2/NOR2/NOT basis (plus DFFs), and answers the
structural queries the analysis needs: topological order, path enumeration
and location classes for intrusion placement.
"""

from __future__ import annotations

import heapq
import re
from collections import defaultdict
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

NAND2 = "NAND2"
NOR2 = "NOR2"
NOT = "NOT"
DFF = "DFF"
TIE0 = "TIE0"
TIE1 = "TIE1"

UNIVERSAL_KINDS = frozenset({NAND2, NOR2, NOT})
GENERIC_KINDS = frozenset({"AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUF", "BUFF", DFF})
TIE_KINDS = frozenset({TIE0, TIE1})
ALL_KINDS = GENERIC_KINDS | UNIVERSAL_KINDS | TIE_KINDS

INPUT = "INPUT"
OUTPUT = "OUTPUT"
CP = "CP"
NCP = "NCP"
FEEDBACK = "FEEDBACK"
LOCATION_CLASSES = (INPUT, OUTPUT, CP, NCP, FEEDBACK)


class NetlistError(ValueError):
    """Structural problem with a netlist."""


class BenchSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Gate:
    name: str
    kind: str
    inputs: tuple[str, ...]
    output: str
    fanout_count: int = 1

    def __post_init__(self):
        arity = len(self.inputs)
        if self.kind in (NAND2, NOR2) and arity != 2:
            raise NetlistError(f"gate {self.name}: {self.kind} needs 2 inputs, got {arity}")
        if self.kind in (NOT, "BUF", "BUFF", DFF) and arity != 1:
            raise NetlistError(f"gate {self.name}: {self.kind} needs 1 input, got {arity}")
        if self.kind in TIE_KINDS and arity:
            raise NetlistError(f"gate {self.name}: tie cells take no inputs")
        if self.kind in ("AND", "NAND", "OR", "NOR", "XOR", "XNOR") and arity < 1:
            raise NetlistError(f"gate {self.name}: {self.kind} needs inputs")
        if self.fanout_count < 1:
            raise NetlistError(f"gate {self.name}: fanout_count must be >= 1")


@dataclass(frozen=True)
class Net:
    name: str
    driver: str | None  # gate name, or None for a primary input
    sinks: tuple[tuple[str, int], ...]  # (gate name, pin index)


@dataclass(frozen=True)
class PathDescriptor:
    gates: tuple[str, ...]
    delay: float
    critical: bool

    @property
    def klass(self) -> str:
        return "CRITICAL" if self.critical else "NONCRITICAL"


@dataclass(frozen=True, eq=False)
class Circuit:
    """Immutable netlist. Build through :meth:`build`."""

    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    gates: Mapping[str, Gate]
    nets: Mapping[str, Net]
    order: tuple[str, ...]  # evaluation order of non-DFF gates
    cyclic: bool = False
    _by_output: Mapping[str, str] = field(default=MappingProxyType({}), repr=False)

    @classmethod
    def build(
        cls,
        name: str,
        inputs: Sequence[str],
        outputs: Sequence[str],
        gates: Iterable[Gate],
        *,
        resize: bool = True,
        allow_cycles: bool = False,
    ) -> "Circuit":
        """Validate and assemble a circuit.

        With ``resize`` the fanout_count of every gate is recomputed from the
        sinks of its output net; otherwise the given sizing is kept (used for
        intruded circuits, whose host gates keep their designed size).
        """
        gates = list(gates)
        if not gates:
            raise NetlistError("no gates defined")
        inputs = tuple(inputs)
        outputs = tuple(outputs)
        if len(set(inputs)) != len(inputs):
            raise NetlistError("duplicate primary input")
        drivers: dict[str, str | None] = {pi: None for pi in inputs}
        by_name: dict[str, Gate] = {}
        for g in gates:
            if g.name in by_name:
                raise NetlistError(f"duplicate gate name {g.name}")
            if g.output in drivers:
                raise NetlistError(f"net {g.output} is driven more than once")
            drivers[g.output] = g.name
            by_name[g.name] = g
        sinks: dict[str, list[tuple[str, int]]] = defaultdict(list)
        for g in gates:
            for pin, src in enumerate(g.inputs):
                if src not in drivers:
                    raise NetlistError(f"net {src} (input of {g.name}) is never driven")
                sinks[src].append((g.name, pin))
        for po in outputs:
            if po not in drivers:
                raise NetlistError(f"primary output {po} is never driven")
        if resize:
            by_name = {
                n: _with_fanout(g, max(1, len(sinks.get(g.output, ()))))
                for n, g in by_name.items()
            }
        nets = {
            net: Net(net, drv, tuple(sinks.get(net, ())))
            for net, drv in drivers.items()
        }
        order, cyclic = _evaluation_order(by_name, drivers)
        if cyclic and not allow_cycles:
            raise NetlistError("combinational cycle detected")
        return cls(
            name=name,
            inputs=inputs,
            outputs=outputs,
            gates=MappingProxyType(dict(sorted(by_name.items()))),
            nets=MappingProxyType(dict(sorted(nets.items()))),
            order=order,
            cyclic=cyclic,
            _by_output=MappingProxyType({g.output: g.name for g in by_name.values()}),
        )

    @property
    def flipflops(self) -> tuple[Gate, ...]:
        return tuple(g for g in self.gates.values() if g.kind == DFF)

    @property
    def combinational(self) -> tuple[Gate, ...]:
        return tuple(self.gates[n] for n in self.order)

    def driver_of(self, net: str) -> Gate | None:
        name = self._by_output.get(net)
        return self.gates[name] if name is not None else None

    def sinks(self, net: str) -> tuple[tuple[str, int], ...]:
        return self.nets[net].sinks

    def is_source(self, net: str) -> bool:
        """Primary input or flip-flop output."""
        drv = self.driver_of(net)
        return drv is None or drv.kind == DFF

    def is_sink(self, net: str) -> bool:
        """Primary output or flip-flop data input."""
        if net in self.outputs:
            return True
        return any(self.gates[g].kind == DFF for g, _ in self.nets[net].sinks)

    def histogram(self) -> dict[str, int]:
        hist: dict[str, int] = defaultdict(int)
        for g in self.gates.values():
            hist[g.kind] += 1
        return dict(sorted(hist.items()))

    def is_universal(self) -> bool:
        return all(g.kind in UNIVERSAL_KINDS or g.kind in TIE_KINDS or g.kind == DFF for g in self.gates.values())


def _with_fanout(g: Gate, fo: int) -> Gate:
    if g.fanout_count == fo:
        return g
    return Gate(g.name, g.kind, g.inputs, g.output, fo)


def _evaluation_order(gates: Mapping[str, Gate], drivers: Mapping[str, str | None]):
    """Kahn order over non-DFF gates; DFF outputs and PIs are sources.

    Gates left on a combinational cycle are appended in name order so cyclic
    circuits (expanded latch cells) can still be relaxed to a fixpoint.
    """
    comb = {n: g for n, g in gates.items() if g.kind != DFF}
    indeg = {}
    users: dict[str, list[str]] = defaultdict(list)
    for n, g in comb.items():
        deps = {drivers[i] for i in g.inputs if drivers[i] is not None and drivers[i] in comb}
        indeg[n] = len(deps)
        for d in deps:
            users[d].append(n)
    ready = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for u in users[n]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    cyclic = len(order) != len(comb)
    if cyclic:
        placed = set(order)
        order.extend(sorted(n for n in comb if n not in placed))
    return tuple(order), cyclic


# --------------------------------------------------------------------- parsing

_DECL = re.compile(r"^(INPUT|OUTPUT)\s*\(\s*([^\s()]+)\s*\)$", re.IGNORECASE)
_ASSIGN = re.compile(r"^([^\s=()]+)\s*=\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)$")


def parse_bench(text: str, name: str = "circuit") -> Circuit:
    """Parse ISCAS89 ``.bench`` text; gate kinds are kept as written."""
    inputs: list[str] = []
    outputs: list[str] = []
    gates: list[Gate] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        m = _DECL.match(line)
        if m:
            (inputs if m.group(1).upper() == "INPUT" else outputs).append(m.group(2))
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise BenchSyntaxError(f"cannot parse {line!r}", lineno, col)
        out, kind, args = m.group(1), m.group(2).upper(), m.group(3)
        if kind not in GENERIC_KINDS:
            raise BenchSyntaxError(f"unknown gate type {m.group(2)!r}", lineno, col + raw.strip().find(m.group(2)))
        ins = tuple(a.strip() for a in args.split(","))
        if any(not a or re.search(r"[\s()=]", a) for a in ins):
            raise BenchSyntaxError(f"malformed argument list {args!r}", lineno, col + raw.strip().find("("))
        if kind == "BUFF":
            kind = "BUF"
        try:
            gates.append(Gate(out, kind, ins, out))
        except NetlistError as exc:
            raise BenchSyntaxError(str(exc), lineno, col) from None
    return Circuit.build(name, inputs, outputs, gates)


def write_bench(circuit: Circuit) -> str:
    """Canonical serialization: inputs, outputs, then gates by output name."""
    lines = [f"# {circuit.name}"]
    lines += [f"INPUT({n})" for n in circuit.inputs]
    lines += [f"OUTPUT({n})" for n in circuit.outputs]
    for g in sorted(circuit.gates.values(), key=lambda g: g.output):
        kind = {NAND2: "NAND", NOR2: "NOR"}.get(g.kind, g.kind)
        lines.append(f"{g.output} = {kind}({', '.join(g.inputs)})")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- decomposition

def decompose_universal(circuit: Circuit) -> Circuit:
    """Rewrite every gate into NAND2/NOR2/NOT (DFFs kept).

    Fixed rewrites: AND/OR become a balanced tree of AND2/OR2 pairs (each a
    NAND2/NOR2 plus NOT) finished by NAND2/NOR2 (+NOT for the positive form);
    XOR2 is the 4-NAND pattern; BUF is two NOTs.
    """
    out: list[Gate] = []
    for g in circuit.gates.values():
        out.extend(_decompose_gate(g))
    return Circuit.build(circuit.name, circuit.inputs, circuit.outputs, out)


def _decompose_gate(g: Gate) -> list[Gate]:
    kind = g.kind
    if kind in UNIVERSAL_KINDS or kind == DFF:
        return [g]
    if kind not in GENERIC_KINDS:
        raise NetlistError(f"unsupported gate kind {kind}")
    emitted: list[Gate] = []
    counter = iter(range(1 << 30))

    def fresh() -> str:
        return f"{g.output}__d{next(counter)}"

    def emit(k: str, ins: tuple[str, ...], out: str | None = None) -> str:
        out = out or fresh()
        emitted.append(Gate(out, k, ins, out))
        return out

    def inv(x: str, out: str | None = None) -> str:
        return emit(NOT, (x,), out)

    def reduce_pairs(sig: list[str], base: str) -> list[str]:
        # combine pairs with the positive (AND/OR) form until two remain
        while len(sig) > 2:
            nxt = []
            for i in range(0, len(sig) - 1, 2):
                nxt.append(inv(emit(base, (sig[i], sig[i + 1]))))
            if len(sig) % 2:
                nxt.append(sig[-1])
            sig = nxt
        return sig

    ins = list(g.inputs)
    if kind in ("BUF", "BUFF"):
        inv(inv(ins[0]), g.output)
    elif kind == NOT:
        inv(ins[0], g.output)
    elif kind in ("AND", "NAND", "OR", "NOR"):
        base = NAND2 if kind in ("AND", "NAND") else NOR2
        negated = kind in ("NAND", "NOR")
        if len(ins) == 1:
            if negated:
                inv(ins[0], g.output)
            else:
                inv(inv(ins[0]), g.output)
        else:
            a, b = reduce_pairs(ins, base)
            if negated:
                emit(base, (a, b), g.output)
            else:
                inv(emit(base, (a, b)), g.output)
    elif kind in ("XOR", "XNOR"):
        acc = ins[0]
        for i, x in enumerate(ins[1:], start=1):
            last = i == len(ins) - 1 and kind == "XOR"
            m = emit(NAND2, (acc, x))
            p = emit(NAND2, (acc, m))
            q = emit(NAND2, (x, m))
            acc = emit(NAND2, (p, q), g.output if last else None)
        if kind == "XNOR":
            inv(acc, g.output)
        elif len(ins) == 1:
            inv(inv(acc), g.output)
    return emitted


# -------------------------------------------------------------- D flip-flop cell

def dff_cell_gates(prefix: str, d: str, clk: str, q: str, qn: str | None = None) -> list[Gate]:
    """Gated-latch model of one flip-flop: input inverter, two steering NAND2s
    and the cross-coupled NAND2 pair holding Q/QN."""
    qn = qn or f"{prefix}_qn"
    dn, s, r = f"{prefix}_dn", f"{prefix}_s", f"{prefix}_r"
    return [
        Gate(f"{prefix}_inv", NOT, (d,), dn),
        Gate(f"{prefix}_nand1", NAND2, (d, clk), s),
        Gate(f"{prefix}_nand2", NAND2, (dn, clk), r),
        Gate(f"{prefix}_nand3", NAND2, (s, qn), q),
        Gate(f"{prefix}_nand4", NAND2, (r, q), qn),
    ]


def dff_cell_circuit() -> Circuit:
    """Stand-alone flip-flop cell with inputs D, CLK and outputs Q, QN."""
    return Circuit.build("dff_cell", ("D", "CLK"), ("Q",),
                         dff_cell_gates("ff", "D", "CLK", "Q", "QN"), allow_cycles=True)


# -------------------------------------------------------------------- paths

def _successors(circuit: Circuit, gate: Gate) -> list[str]:
    return sorted({s for s, _ in circuit.sinks(gate.output) if circuit.gates[s].kind != DFF})


def _path_starts(circuit: Circuit) -> list[str]:
    return sorted(
        g.name for g in circuit.combinational
        if g.inputs and any(circuit.is_source(i) for i in g.inputs)
    )


def enumerate_paths(
    circuit: Circuit,
    gate_delays: Mapping[str, float],
    limit: int = 10_000,
) -> list[PathDescriptor]:
    """Top-``limit`` source-to-sink gate paths by delay.

    Best-first search on (accumulated + best achievable remaining delay), so
    complete paths pop in exact descending order without enumerating the rest.
    Ties are broken by the lexicographic gate-name sequence.
    """
    if circuit.cyclic:
        raise NetlistError("path enumeration needs an acyclic combinational part")
    best_tail: dict[str, float] = {}
    for name in reversed(circuit.order):
        g = circuit.gates[name]
        tails = [best_tail[s] for s in _successors(circuit, g)]
        if circuit.is_sink(g.output):
            tails.append(0.0)
        best_tail[name] = gate_delays[name] + (max(tails) if tails else float("-inf"))
    heap: list[tuple[float, tuple[str, ...], float, bool]] = []
    for name in _path_starts(circuit):
        if best_tail[name] > float("-inf"):
            heapq.heappush(heap, (-best_tail[name], (name,), gate_delays[name], False))
    found: list[tuple[tuple[str, ...], float]] = []
    while heap and len(found) < limit:
        neg_bound, seq, acc, complete = heapq.heappop(heap)
        if complete:
            found.append((seq, acc))
            continue
        g = circuit.gates[seq[-1]]
        if circuit.is_sink(g.output):
            heapq.heappush(heap, (-acc, seq, acc, True))
        for s in _successors(circuit, g):
            bound = acc + best_tail[s]
            if bound > float("-inf"):
                heapq.heappush(heap, (-bound, seq + (s,), acc + gate_delays[s], False))
    found.sort(key=lambda item: (-item[1], item[0]))
    cone_max: dict[str, float] = {}
    for seq, d in found:
        sink = circuit.gates[seq[-1]].output
        cone_max[sink] = max(cone_max.get(sink, float("-inf")), d)
    return [
        PathDescriptor(seq, d, d >= cone_max[circuit.gates[seq[-1]].output])
        for seq, d in found
    ]


def critical_path_delay(circuit: Circuit, gate_delays: Mapping[str, float]) -> float:
    paths = enumerate_paths(circuit, gate_delays, limit=1)
    return paths[0].delay if paths else 0.0


def _cycle_nets(circuit: Circuit) -> set[str]:
    """Nets on combinational cycles (cross-coupled latch nets)."""
    comb = {g.name: g for g in circuit.combinational}
    graph = {n: _successors(circuit, g) for n, g in comb.items()}
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    stack: list[str] = []
    on: set[str] = set()
    result: set[str] = set()
    counter = [0]

    def strong(v: str):
        # iterative Tarjan
        work = [(v, iter(graph[v]))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on.add(w)
                    work.append((w, iter(graph[w])))
                    advanced = True
                    break
                if w in on:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                if len(comp) > 1 or node in graph[node]:
                    result.update(comb[c].output for c in comp)

    for v in sorted(graph):
        if v not in index:
            strong(v)
    return result


def classify_locations(
    circuit: Circuit,
    gate_delays: Mapping[str, float] | None = None,
) -> dict[str, str]:
    """Map every net to INPUT, OUTPUT, FEEDBACK, CP or NCP (first match wins).

    FEEDBACK marks nets on combinational cycles, i.e. the cross-coupled nodes
    of expanded flip-flop cells. CP marks nets on a maximal-delay path.
    """
    feedback = _cycle_nets(circuit)
    critical: set[str] = set()
    if not circuit.cyclic and gate_delays is not None:
        limit = 64
        while True:
            # fetch until a path below the maximum shows up, so all ties are seen
            paths = enumerate_paths(circuit, gate_delays, limit=limit)
            if not paths or paths[-1].delay < paths[0].delay or len(paths) < limit:
                break
            limit *= 4
        for p in paths:
            if p.delay < paths[0].delay:
                break
            critical.update(circuit.gates[g].output for g in p.gates)
    classes = {}
    outputs = set(circuit.outputs)
    for net in circuit.nets:
        if net in circuit.inputs:
            classes[net] = INPUT
        elif net in outputs:
            classes[net] = OUTPUT
        elif net in feedback:
            classes[net] = FEEDBACK
        elif net in critical:
            classes[net] = CP
        else:
            classes[net] = NCP
    return classes
