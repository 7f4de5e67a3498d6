"""Finite transition systems over sequential circuits, with metric labels.

A configuration is ``(state, input)``: flip-flop contents plus the input
vector currently applied. A transition picks the next input ``x2``; the
flip-flops load ``next(state, input)`` and the circuit settles again. The
label of transition ``(s, x, x2)`` is the side-channel valuation of moving
between the two settled evaluations:

* DP: power of every gate whose output (or flip-flop data pin) toggled,
* LP: leakage of every gate at the new settled state,
* D(k): Elmore delay of the new edge at each gate of monitored path k.

States and input vectors are integers; bit j is flip-flop j (sorted by name)
or primary input j (declaration order).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from decimal import Decimal, localcontext
from typing import Iterator, Mapping, Sequence

import numpy as np

from .logicsim import Simulator, array_to_bits, bits_to_array
from .netlist import DFF, NOT, TIE_KINDS, Circuit, NetlistError, PathDescriptor, enumerate_paths
from .sidechannel import GateTables
from .techmodel import TechnologyParams

EXHAUSTIVE = "EXHAUSTIVE"
RANDOM = "RANDOM"
DEFAULT_BUDGET = 2 ** 32
BUDGET_ENV = "FORASEC_BUDGET"
CELL_BUDGET = 1 << 24
SECONDS_PER_YEAR = 31_560_000  # 3.156e7 s


class BudgetExceeded(RuntimeError):
    pass


def budget_limit() -> int:
    """Transition budget; the environment variable overrides the default."""
    raw = os.environ.get(BUDGET_ENV)
    if raw is None or not raw.strip():
        return DEFAULT_BUDGET
    value = int(float(raw))
    if value < 1:
        raise ValueError(f"{BUDGET_ENV} must be positive")
    return value


@dataclass(frozen=True)
class InputPolicy:
    kind: str = EXHAUSTIVE
    n: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (EXHAUSTIVE, RANDOM):
            raise ValueError("policy must be EXHAUSTIVE or RANDOM")
        if self.kind == RANDOM and self.n < 1:
            raise ValueError("RANDOM policy needs n >= 1 sequences")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "InputPolicy":
        """``exhaustive`` or ``random:N``."""
        t = text.strip().lower()
        if t == "exhaustive":
            return cls(EXHAUSTIVE, 0, seed)
        if t.startswith("random:"):
            return cls(RANDOM, int(t.split(":", 1)[1]), seed)
        raise ValueError(f"unknown input policy {text!r}")

    def __str__(self) -> str:
        return "exhaustive" if self.kind == EXHAUSTIVE else f"random:{self.n}"


@dataclass(frozen=True)
class MetricValuation:
    DP: float
    LP: float
    D: tuple[float, ...] = ()

    def metric(self, name: str, k: int = 0) -> float:
        if name == "DP":
            return self.DP
        if name in ("LP", "LP_UPPER", "LP_LOWER"):
            return self.LP
        if name == "DELAY":
            return self.D[k]
        raise KeyError(name)


@dataclass
class TransitionBatch:
    """A chunk of explored transitions, in exploration order."""

    depth: int
    states: np.ndarray  # int64
    inputs: np.ndarray
    next_inputs: np.ndarray
    weights: list[int]  # input sequences of this depth ending in each transition
    DP: np.ndarray
    LP: np.ndarray
    D: np.ndarray  # (paths, batch)
    prefixes: list[tuple[int, ...]] = field(repr=False)  # input sequence reaching (state, input)

    def __len__(self) -> int:
        return len(self.states)

    def valuation(self, j: int) -> MetricValuation:
        return MetricValuation(float(self.DP[j]), float(self.LP[j]), tuple(float(v) for v in self.D[:, j]))

    def sequence(self, j: int) -> tuple[int, ...]:
        """Input sequence (reset input excluded) whose last step is transition j."""
        return self.prefixes[j] + (int(self.next_inputs[j]),)


def ordered_sum(rows: np.ndarray) -> np.ndarray:
    """Column sums accumulated row by row, so a column's result does not
    depend on how many other columns share the batch."""
    acc = np.zeros(rows.shape[1:])
    for r in rows:
        acc += r
    return acc


class TransitionSystem:
    def __init__(self, circuit: Circuit, params: TechnologyParams, paths: Sequence[PathDescriptor],
                 reset_state: int = 0, reset_input: int = 0, **cap_kw):
        if circuit.cyclic:
            raise NetlistError("combinational cycle: transition system needs an acyclic gate graph")
        if not circuit.is_universal():
            raise NetlistError("transition system needs a NAND2/NOR2/NOT netlist")
        self.circuit = circuit
        self.params = params
        self.paths = tuple(paths)
        self.sim = Simulator(circuit)
        self.n_inputs = self.sim.n_inputs
        self.n_state = self.sim.n_state
        self.reset_state = int(reset_state)
        self.reset_input = int(reset_input)
        self.tables = GateTables(circuit, params, **cap_kw)
        self._compile()

    def _compile(self) -> None:
        t, sim, c = self.tables, self.sim, self.circuit
        idx = sim.index
        self.gate_names = t.names
        G = len(t.names)
        self.leak = t.leak[:, :, 0].copy()
        self.delay = t.delay[:, :, :, 0].reshape(G, 16).copy()
        self.dp = t.dp[:, 0].copy()
        self.dp_d = t.dp_d[:, 0].copy()
        self.gid = np.arange(G)
        in0 = np.zeros(G, dtype=np.intp)
        in1 = np.zeros(G, dtype=np.intp)
        out = np.zeros(G, dtype=np.intp)
        arity = np.zeros(G, dtype=np.intp)
        for i, name in enumerate(t.names):
            g = c.gates[name]
            out[i] = idx[g.output]
            if g.kind in TIE_KINDS:
                continue
            if g.kind in (DFF, NOT):
                in0[i] = idx[g.inputs[0]]
                arity[i] = 1
            else:
                in0[i], in1[i] = idx[g.inputs[0]], idx[g.inputs[1]]
                arity[i] = 2
        is_dff = np.array([c.gates[n].kind == DFF for n in t.names], dtype=bool)
        self._two = np.flatnonzero(arity == 2)
        self._one = np.flatnonzero((arity == 1) & ~is_dff)
        self._dff = np.flatnonzero(is_dff)
        self._in0, self._in1, self._out = in0, in1, out
        self._path_rows = [np.array([t.index[g] for g in p.gates], dtype=np.intp) for p in self.paths]

    # ----------------------------------------------------------- semantics

    def settle(self, states, inputs) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states, dtype=np.int64))
        inputs = np.atleast_1d(np.asarray(inputs, dtype=np.int64))
        return self.sim.settle(bits_to_array(states, self.n_state), bits_to_array(inputs, self.n_inputs))

    def next_state_of(self, values: np.ndarray) -> np.ndarray:
        if self.n_state == 0:
            return np.zeros(values.shape[1], dtype=np.int64)
        return array_to_bits(self.sim.next_state(values))

    def next_state(self, state: int, x: int) -> int:
        return int(self.next_state_of(self.settle(state, x))[0])

    def outputs(self, state: int, x: int) -> int:
        return int(array_to_bits(self.sim.outputs(self.settle(state, x)))[0])

    def gate_terms(self, old: np.ndarray, new: np.ndarray):
        """Per-gate DP, LP and delay arrays (gates x batch) between settled values."""
        G, B = len(self.gate_names), old.shape[1]
        dp = np.zeros((G, B))
        lp = np.zeros((G, B))
        dl = np.zeros((G, B))
        o, i0, i1 = self._out, self._in0, self._in1
        toggled = old[o] != new[o]
        dp[:] = self.dp[:, None] * toggled
        for sel, width in ((self._two, 2), (self._one, 1)):
            if not len(sel):
                continue
            if width == 2:
                so = 2 * old[i0[sel]].astype(np.intp) + old[i1[sel]]
                sn = 2 * new[i0[sel]].astype(np.intp) + new[i1[sel]]
            else:
                so = old[i0[sel]].astype(np.intp)
                sn = new[i0[sel]].astype(np.intp)
            lp[sel] = np.take_along_axis(self.leak[sel], sn, axis=1)
            dl[sel] = np.take_along_axis(self.delay[sel], 4 * so + sn, axis=1)
        if len(self._dff):
            sel = self._dff
            d_old, d_new = old[i0[sel]], new[i0[sel]]
            sn = 2 * d_new.astype(np.intp) + new[o[sel]]
            lp[sel] = np.take_along_axis(self.leak[sel], sn, axis=1)
            dp[sel] += self.dp_d[sel, None] * (d_old != d_new)
        return dp, lp, dl

    def evaluate(self, old: np.ndarray, new: np.ndarray):
        """Aggregate (DP, LP, D) per transition column."""
        dp, lp, dl = self.gate_terms(old, new)
        D = np.zeros((len(self.paths), old.shape[1]))
        for k, rows in enumerate(self._path_rows):
            D[k] = ordered_sum(dl[rows])
        return ordered_sum(dp), ordered_sum(lp), D

    def transition_values(self, s: int, x: int, x2: int):
        old = self.settle(s, x)
        s2 = self.next_state_of(old)
        new = self.settle(s2, x2)
        return old, new

    def label(self, s: int, x: int, x2: int) -> MetricValuation:
        old, new = self.transition_values(s, x, x2)
        DP, LP, D = self.evaluate(old, new)
        return MetricValuation(float(DP[0]), float(LP[0]), tuple(float(v) for v in D[:, 0]))

    def replay(self, sequence: Sequence[int], state: int | None = None, x: int | None = None):
        """Walk an input sequence from a configuration (default: reset); yields
        ``(step, state, input, next_input, MetricValuation)``."""
        s = self.reset_state if state is None else state
        cur = self.reset_input if x is None else x
        for step, x2 in enumerate(sequence, start=1):
            v = self.label(s, cur, x2)
            yield step, s, cur, int(x2), v
            s, cur = self.next_state(s, cur), int(x2)


def build(circuit: Circuit, params: TechnologyParams | None = None,
          paths: Sequence[PathDescriptor] | None = None, *, path_limit: int = 8,
          reset_state: int = 0, reset_input: int = 0, **cap_kw) -> TransitionSystem:
    """Transition system of a decomposed circuit.

    ``paths`` are the monitored delay paths; by default the ``path_limit``
    slowest paths under nominal worst-case gate delays.
    """
    params = params or TechnologyParams.default()
    if circuit.cyclic:
        raise NetlistError("combinational cycle: transition system needs an acyclic gate graph")
    if paths is None:
        delays = GateTables(circuit, params, **cap_kw).worst_delays(0)
        paths = enumerate_paths(circuit, delays, limit=path_limit)
    return TransitionSystem(circuit, params, paths, reset_state, reset_input, **cap_kw)


# ----------------------------------------------------------------- exploration

def exhaustive_count(n_inputs: int, bound: int) -> int:
    """Input sequences of length 1..bound, one transition each."""
    return sum(1 << (n_inputs * t) for t in range(1, bound + 1))


def explore(system: TransitionSystem, bound: int, policy: InputPolicy | None = None, *,
            chunk: int = 1 << 16, stats: dict | None = None) -> Iterator[TransitionBatch]:
    """Lazily explore transitions up to ``bound`` steps from reset.

    EXHAUSTIVE walks depth by depth; within a depth, transitions come in
    lexicographic order of the shortest input sequence reaching them. A
    configuration already expanded at a shallower depth has identical
    outgoing labels, so it is only counted (``weights``) and not re-labelled.
    RANDOM yields ``n`` seeded sequences step by step (all sequences' step t
    before step t+1), labelling every step.

    ``stats`` (if given) receives ``visited`` (weighted transitions) and
    ``evaluated`` (labels computed).
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    policy = policy or InputPolicy()
    stats = stats if stats is not None else {}
    stats.setdefault("visited", 0)
    stats.setdefault("evaluated", 0)
    # keep per-batch gate-by-transition arrays to a few hundred MB
    chunk = max(1, min(chunk, CELL_BUDGET // max(1, len(system.gate_names))))
    if policy.kind == EXHAUSTIVE:
        total = exhaustive_count(system.n_inputs, bound)
        if total > budget_limit():
            raise BudgetExceeded(f"exhaustive exploration needs {total} transitions, budget {budget_limit()}")
        yield from _explore_exhaustive(system, bound, chunk, stats)
    else:
        yield from _explore_random(system, bound, policy, chunk, stats)


def _explore_exhaustive(system: TransitionSystem, bound: int, chunk: int, stats: dict):
    n_x = 1 << system.n_inputs
    xs = np.arange(n_x, dtype=np.int64)
    # frontier: config -> (multiplicity, shortest lexicographic prefix)
    frontier: dict[tuple[int, int], tuple[int, tuple[int, ...]]] = {
        (system.reset_state, system.reset_input): (1, ())}
    expanded: set[tuple[int, int]] = set()
    for depth in range(1, bound + 1):
        configs = sorted(frontier, key=lambda c: frontier[c][1])
        nxt: dict[tuple[int, int], tuple[int, tuple[int, ...]]] = {}
        per = max(1, chunk // n_x)
        for lo in range(0, len(configs), per):
            block = configs[lo:lo + per]
            stats["visited"] += sum(frontier[c][0] for c in block) * n_x
            s = np.array([c[0] for c in block], dtype=np.int64)
            x = np.array([c[1] for c in block], dtype=np.int64)
            old = system.settle(s, x)
            s2 = system.next_state_of(old)
            if depth < bound:
                for c, t in zip(block, s2.tolist()):
                    mult, pre = frontier[c]
                    for x2 in range(n_x):
                        key = (t, x2)
                        hit = nxt.get(key)
                        # configs arrive in prefix order, so the first prefix stays the smallest
                        nxt[key] = (mult, pre + (x2,)) if hit is None else (hit[0] + mult, hit[1])
            todo = [j for j, c in enumerate(block) if c not in expanded]
            if todo:
                yield _label_block(system, depth, [block[j] for j in todo], old[:, todo], s2[todo],
                                   frontier, xs, stats)
        expanded.update(configs)
        frontier = nxt


def _label_block(system, depth, block, old_cfg, s2, frontier, xs, stats) -> TransitionBatch:
    n_x = len(xs)
    C = len(block)
    uniq, inv = np.unique(s2, return_inverse=True)
    new_all = system.settle(np.repeat(uniq, n_x), np.tile(xs, len(uniq)))
    cols_new = (inv[:, None] * n_x + xs[None, :]).ravel()
    cols_old = np.repeat(np.arange(C), n_x)
    old = old_cfg[:, cols_old]
    new = new_all[:, cols_new]
    DP, LP, D = system.evaluate(old, new)
    stats["evaluated"] += C * n_x
    states = np.repeat(np.array([c[0] for c in block], dtype=np.int64), n_x)
    inputs = np.repeat(np.array([c[1] for c in block], dtype=np.int64), n_x)
    weights = [frontier[c][0] for c in block for _ in range(n_x)]
    prefixes = [frontier[c][1] for c in block for _ in range(n_x)]
    return TransitionBatch(depth, states, inputs, np.tile(xs, C), weights, DP, LP, D, prefixes)


def random_sequences(n_inputs: int, bound: int, policy: InputPolicy) -> np.ndarray:
    """(n, bound) input integers; sequence j depends only on (seed, j)."""
    out = np.zeros((policy.n, bound), dtype=np.int64)
    for j in range(policy.n):
        rng = np.random.default_rng([policy.seed, j])
        out[j] = rng.integers(0, 1 << n_inputs, size=bound, dtype=np.int64) if n_inputs else 0
    return out


def _explore_random(system: TransitionSystem, bound: int, policy: InputPolicy, chunk: int, stats: dict):
    seqs = random_sequences(system.n_inputs, bound, policy)
    n = len(seqs)
    s = np.full(n, system.reset_state, dtype=np.int64)
    x = np.full(n, system.reset_input, dtype=np.int64)
    for depth in range(1, bound + 1):
        old = system.settle(s, x)
        s2 = system.next_state_of(old)
        x2 = seqs[:, depth - 1]
        new = system.settle(s2, x2)
        for lo in range(0, n, chunk):
            sl = slice(lo, lo + chunk)
            DP, LP, D = system.evaluate(old[:, sl], new[:, sl])
            m = len(DP)
            stats["visited"] += m
            stats["evaluated"] += m
            prefixes = [tuple(int(v) for v in seqs[j, :depth - 1]) for j in range(lo, lo + m)]
            yield TransitionBatch(depth, s[sl].copy(), x[sl].copy(), x2[sl].copy(), [1] * m,
                                  DP, LP, D, prefixes)
        s, x = s2, x2


def visit(system: TransitionSystem, bound: int, policy: InputPolicy | None, visitor) -> int:
    """Call ``visitor(step, state, input, next_input, MetricValuation)`` per
    labelled transition; a ``False`` return stops early. Returns the count."""
    count = 0
    for batch in explore(system, bound, policy):
        for j in range(len(batch)):
            count += 1
            if visitor(batch.depth, int(batch.states[j]), int(batch.inputs[j]),
                       int(batch.next_inputs[j]), batch.valuation(j)) is False:
                return count
    return count


def reachable_states(system: TransitionSystem, depth: int | None = None) -> set[int]:
    """Flip-flop states reachable from reset (all depths unless bounded)."""
    n_x = 1 << system.n_inputs
    seen = {system.reset_state}
    frontier = [system.reset_state]
    d = 0
    while frontier and (depth is None or d < depth):
        s = np.repeat(np.array(frontier, dtype=np.int64), n_x)
        x = np.tile(np.arange(n_x, dtype=np.int64), len(frontier))
        nxt = set(int(v) for v in system.next_state_of(system.settle(s, x))) - seen
        seen |= nxt
        frontier = sorted(nxt)
        d += 1
    return seen


# ------------------------------------------------------------------ partitions

DP, LP, DELAY = "DP", "LP", "DELAY"


@dataclass(frozen=True)
class Partition:
    ident: str
    metric: str
    cut: str | None  # cut net (flip-flop data input or primary output); None for leftovers
    cone: frozenset[str]  # every gate in the transitive fan-in
    owned: tuple[str, ...]  # gates whose bound share this partition carries


def _fanin_cone(circuit: Circuit, net: str) -> set[str]:
    cone: set[str] = set()
    stack = [net]
    while stack:
        n = stack.pop()
        g = circuit.driver_of(n)
        if g is None or g.name in cone or g.kind == DFF:
            continue
        cone.add(g.name)
        stack.extend(g.inputs)
    return cone


def partition(circuit: Circuit, metric: str) -> list[Partition]:
    """Cones cut at flip-flop data inputs and primary outputs.

    Cuts are ordered primary outputs first (declaration order), then
    flip-flops by name; each gate is owned by the first cone containing it,
    a flip-flop by the cone of its own data input. Gates outside every cone
    (dangling logic, inserted Trojans) form a final leftover partition.
    """
    if metric not in (DP, LP, DELAY):
        raise ValueError("metric must be DP, LP or DELAY")
    cuts: list[tuple[str, str, str | None]] = []
    seen_cut = set()
    for po in circuit.outputs:
        if po not in seen_cut:
            cuts.append((f"po:{po}", po, None))
            seen_cut.add(po)
    for ff in circuit.flipflops:
        cuts.append((f"ff:{ff.name}", ff.inputs[0], ff.name))
    owned_all: set[str] = set()
    parts = []
    for ident, net, ff in cuts:
        cone = _fanin_cone(circuit, net)
        if ff is not None:
            cone.add(ff)
        own = tuple(sorted(cone - owned_all))
        owned_all |= cone
        parts.append(Partition(ident, metric, net, frozenset(cone), own))
    rest = tuple(sorted(set(circuit.gates) - owned_all))
    if rest:
        parts.append(Partition("rest", metric, None, frozenset(rest), rest))
    return parts


def partition_matrix(system: TransitionSystem, parts: Sequence[Partition]) -> np.ndarray:
    """0/1 (partitions x gates) ownership matrix in the system's gate order."""
    M = np.zeros((len(parts), len(system.gate_names)))
    index = system.tables.index
    for p, part in enumerate(parts):
        for g in part.owned:
            M[p, index[g]] = 1.0
    return M


# -------------------------------------------------------------------- coverage

@dataclass(frozen=True)
class CoverageRow:
    label: str
    count: int
    patterns: int
    seconds: Fraction
    years: Fraction

    def seconds_text(self, digits: int = 6) -> str:
        return _render(self.seconds, digits)

    def years_text(self, digits: int = 6) -> str:
        return _render(self.years, digits)


def _render(value: Fraction, digits: int) -> str:
    with localcontext() as ctx:
        ctx.prec = digits
        d = Decimal(value.numerator) / Decimal(value.denominator)
    return format(d.normalize(), "f") if abs(d.adjusted()) < 15 else format(d, "E")


def estimate_coverage(input_count: int, gate_count: int | None = None, node_count: int | None = None,
                      rate=10) -> list[CoverageRow]:
    """Exhaustive-test cost: 2^n patterns at ``rate`` tests per second."""
    rate_q = Fraction(str(rate))
    if rate_q <= 0:
        raise ValueError("rate must be positive")
    rows = []
    for label, n in (("inputs", input_count), ("gates", gate_count), ("nodes", node_count)):
        if n is None:
            continue
        if n < 0:
            raise ValueError(f"{label} count must be >= 0")
        patterns = 1 << n
        seconds = Fraction(patterns) / rate_q
        rows.append(CoverageRow(label, n, patterns, seconds, seconds / SECONDS_PER_YEAR))
    return rows


# ------------------------------------------------------------------ SMV export

def _q(value: float, unit: float) -> str:
    """Exact decimal rendering of value/unit (no exponent; SMV-friendly)."""
    d = Decimal(value) / Decimal(unit)
    return format(d.quantize(Decimal("0.000001")), "f")


def _ident(net: str) -> str:
    return "n_" + "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in net)


def to_smv(system: TransitionSystem, specs: Sequence[str] = (), *, bounds: Mapping[str, float] | None = None) -> str:
    """SMV model: flip-flops as state, inputs free, previous-cycle net copies
    for toggle detection, and metrics as real-valued DEFINEs.

    Power is expressed in nanowatts and delay in picoseconds.
    """
    c = system.circuit
    lines = [f"-- {c.name}: state-space model with side-channel metrics",
             "-- units: DP, LP in nW; D_k in ps", "MODULE main", "VAR"]
    for pi in c.inputs:
        lines.append(f"  {_ident(pi)} : boolean;")
    for ff in c.flipflops:
        lines.append(f"  {_ident(ff.output)} : boolean;")
    nets = list(system.sim.nets)
    for n in nets:
        lines.append(f"  p_{_ident(n)} : boolean;")
    lines.append("DEFINE")
    for name in c.order:
        g = c.gates[name]
        a = [_ident(i) for i in g.inputs]
        expr = {"NAND2": f"!({a[0] if a else ''} & {a[-1] if a else ''})",
                "NOR2": f"!({a[0] if a else ''} | {a[-1] if a else ''})",
                "NOT": f"!{a[0] if a else ''}", "TIE0": "FALSE", "TIE1": "TRUE"}[g.kind]
        lines.append(f"  {_ident(g.output)} := {expr};")
    t = system
    dp_terms, lp_terms = [], []
    for i, name in enumerate(t.gate_names):
        g = c.gates[name]
        if g.kind in TIE_KINDS:
            continue
        out = _ident(g.output)
        dp_terms.append(f"(({out} != p_{out}) ? {_q(t.dp[i], 1e-9)} : 0.0)")
        if g.kind == DFF:
            d = _ident(g.inputs[0])
            dp_terms.append(f"(({d} != p_{d}) ? {_q(t.dp_d[i], 1e-9)} : 0.0)")
            sel = [(f"{'' if s >> 1 else '!'}{d} & {'' if s & 1 else '!'}{out}", t.leak[i, s]) for s in range(4)]
        elif g.kind == NOT:
            a = _ident(g.inputs[0])
            sel = [(f"!{a}", t.leak[i, 0]), (a, t.leak[i, 1])]
        else:
            a, b = (_ident(x) for x in g.inputs)
            sel = [(f"{'' if s >> 1 else '!'}{a} & {'' if s & 1 else '!'}{b}", t.leak[i, s]) for s in range(4)]
        cases = " ".join(f"{cond} : {_q(v, 1e-9)};" for cond, v in sel)
        lp_terms.append(f"case {cases} TRUE : 0.0; esac")
    lines.append("  DP := " + (" + ".join(dp_terms) or "0.0") + ";")
    lines.append("  LP := " + (" + ".join(f"({x})" for x in lp_terms) or "0.0") + ";")
    for k, p in enumerate(system.paths):
        terms = []
        for gname in p.gates:
            i = t.tables.index[gname]
            g = c.gates[gname]
            cur = [_ident(x) for x in g.inputs]
            for so in range(4 if len(cur) == 2 else 2):
                for sn in range(4 if len(cur) == 2 else 2):
                    v = t.delay[i, 4 * so + sn]
                    if v == 0:
                        continue
                    bits = lambda s, pre: " & ".join(
                        f"{'' if (s >> (len(cur) - 1 - j)) & 1 else '!'}{pre}{x}" for j, x in enumerate(cur))
                    terms.append(f"(({bits(so, 'p_')} & {bits(sn, '')}) ? {_q(v, 1e-12)} : 0.0)")
        lines.append(f"  D_{k} := " + (" + ".join(terms) or "0.0") + ";")
    for name, value in sorted((bounds or {}).items()):
        unit = 1e-12 if name.startswith("D_") else 1e-9
        lines.append(f"  {name} := {_q(value, unit)};")
    lines.append("ASSIGN")
    for ff in c.flipflops:
        bit = (system.reset_state >> system.sim.flipflops.index(ff)) & 1
        lines.append(f"  init({_ident(ff.output)}) := {'TRUE' if bit else 'FALSE'};")
        lines.append(f"  next({_ident(ff.output)}) := {_ident(ff.inputs[0])};")
    for j, pi in enumerate(c.inputs):
        bit = (system.reset_input >> j) & 1
        lines.append(f"  init({_ident(pi)}) := {'TRUE' if bit else 'FALSE'};")
    for n in nets:
        lines.append(f"  init(p_{_ident(n)}) := {_ident(n)};")
        lines.append(f"  next(p_{_ident(n)}) := {_ident(n)};")
    for spec in specs:
        lines.append(f"LTLSPEC {spec}")
    return "\n".join(lines) + "\n"
