"""Bounded checking of side-channel bound properties and the iterative
exception-augmented vulnerability analysis.

A :class:`BoundProperty` compares an envelope bound against a transition
metric, e.g. ``F(DP != 0 -> DP_MAX < DP)``. The EVENTUALLY form is witnessed
by the first explored transition where guard and comparison hold; the
GLOBALLY form fails at the first transition where the guard holds and the
comparison does not. Complementary properties therefore share witnesses.
Transitions matching an exception pattern ``(state, input, next_input)`` are
ignored by both forms.
"""

from __future__ import annotations

import csv
import io
import time
import tracemalloc
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from .sidechannel import BoundEnvelope
from .statespace import (
    BudgetExceeded, InputPolicy, MetricValuation, TransitionBatch, TransitionSystem, explore,
)

EVENTUALLY = "F"
GLOBALLY = "G"
DP = "DP"
LP_UPPER = "LP_UPPER"
LP_LOWER = "LP_LOWER"
DELAY = "DELAY"
PROPERTY_METRICS = (DP, LP_UPPER, LP_LOWER, DELAY)

HOLDS = "HOLDS_WITHIN_BOUND"
VIOLATED = "VIOLATED"
UNKNOWN_BUDGET = "UNKNOWN_BUDGET"

NEGATE = {"<": ">=", ">=": "<", ">": "<=", "<=": ">"}
_OPS = {
    "<": np.less, ">=": np.greater_equal, ">": np.greater, "<=": np.less_equal,
}
_SYMBOL = {DP: "DP", LP_UPPER: "LP", LP_LOWER: "LP", DELAY: "D"}
_BOUND_NAME = {DP: "DP_MAX", LP_UPPER: "LP_MAX", LP_LOWER: "LP_MIN", DELAY: "D_MAX"}

Pattern = tuple[int, int, int]


@dataclass(frozen=True)
class BoundProperty:
    """``Q(guard -> bound OP metric)`` minus the exception patterns.

    For DELAY, ``bound`` is a tuple with one entry per monitored path and the
    comparison applies to every path (EVENTUALLY: some path; GLOBALLY: all).
    """

    quantifier: str
    metric: str
    comparison: str
    bound: float | tuple[float, ...]
    exceptions: frozenset[Pattern] = frozenset()
    guard: bool = True

    def __post_init__(self):
        if self.quantifier not in (EVENTUALLY, GLOBALLY):
            raise ValueError("quantifier must be F or G")
        if self.metric not in PROPERTY_METRICS:
            raise ValueError(f"metric must be one of {PROPERTY_METRICS}")
        if self.comparison not in NEGATE:
            raise ValueError("comparison must be <, >=, > or <=")

    def with_exceptions(self, patterns) -> "BoundProperty":
        return replace(self, exceptions=self.exceptions | frozenset(patterns))

    def to_ltl(self) -> str:
        sym = _SYMBOL[self.metric]
        bnd = _BOUND_NAME[self.metric]
        if self.metric == DELAY:
            k = len(self.bound)
            parts = [self._atom(f"{sym}_{i}", f"{bnd}_{i}") for i in range(k)]
            body = (" | " if self.quantifier == EVENTUALLY else " & ").join(parts) or "TRUE"
        else:
            body = self._atom(sym, bnd)
        if self.exceptions:
            body = f"({body}) & !EXC"
        return f"{self.quantifier} ({body})"

    def _atom(self, sym: str, bnd: str) -> str:
        cmp = f"{bnd} {self.comparison} {sym}"
        return f"({sym} != 0 -> {cmp})" if self.guard else f"({cmp})"


def property_for(metric: str, envelope: BoundEnvelope) -> BoundProperty:
    """The EVENTUALLY (vulnerability-witness) property of a metric."""
    if metric == DP:
        return BoundProperty(EVENTUALLY, DP, "<", envelope.DP_max)
    if metric == LP_UPPER:
        return BoundProperty(EVENTUALLY, LP_UPPER, "<", envelope.LP_max, guard=False)
    if metric == LP_LOWER:
        return BoundProperty(EVENTUALLY, LP_LOWER, ">", envelope.LP_min, guard=False)
    if metric == DELAY:
        return BoundProperty(EVENTUALLY, DELAY, "<", tuple(envelope.D_max))
    raise ValueError(metric)


def complement(prop: BoundProperty) -> BoundProperty:
    """Swap the quantifier and negate the comparison; exceptions are kept."""
    q = GLOBALLY if prop.quantifier == EVENTUALLY else EVENTUALLY
    return replace(prop, quantifier=q, comparison=NEGATE[prop.comparison])


def _batch_metric(prop: BoundProperty, batch: TransitionBatch) -> np.ndarray:
    """(paths, batch) metric values; one row for scalar metrics."""
    if prop.metric == DP:
        return batch.DP[None, :]
    if prop.metric in (LP_UPPER, LP_LOWER):
        return batch.LP[None, :]
    return batch.D


def _bounds(prop: BoundProperty, rows: int) -> np.ndarray:
    b = np.atleast_1d(np.asarray(prop.bound, dtype=float))
    if len(b) != rows:
        raise ValueError(f"property has {len(b)} bounds for {rows} metric rows")
    return b[:, None]


def witness_mask(prop: BoundProperty, batch: TransitionBatch, system: TransitionSystem) -> np.ndarray:
    """Transitions of ``batch`` that witness the property's verdict
    (EVENTUALLY: satisfied; GLOBALLY: violated)."""
    vals = _batch_metric(prop, batch)
    if vals.shape[0] == 0:
        return np.zeros(len(batch), dtype=bool)
    bounds = _bounds(prop, vals.shape[0])
    guard = vals != 0 if prop.guard else np.ones_like(vals, dtype=bool)
    cmp = _OPS[prop.comparison](bounds, vals)
    hits = guard & cmp if prop.quantifier == EVENTUALLY else guard & ~cmp
    mask = hits.any(axis=0)
    if prop.exceptions and mask.any():
        mask &= ~_excepted(system, batch, prop.exceptions)
    return mask


def _excepted(system: TransitionSystem, batch: TransitionBatch, patterns: frozenset[Pattern]) -> np.ndarray:
    ni = system.n_inputs
    if system.n_state + 2 * ni <= 62:
        keys = (batch.states << (2 * ni)) | (batch.inputs << ni) | batch.next_inputs
        pk = np.array([(s << (2 * ni)) | (x << ni) | y for s, x, y in patterns], dtype=np.int64)
        return np.isin(keys, pk)
    return np.array([(int(s), int(x), int(y)) in patterns
                     for s, x, y in zip(batch.states, batch.inputs, batch.next_inputs)], dtype=bool)


# ---------------------------------------------------------------- witnesses

@dataclass(frozen=True)
class TraceStep:
    step: int
    state: int
    input: int
    next_input: int
    valuation: MetricValuation


@dataclass(frozen=True)
class Counterexample:
    trace: tuple[TraceStep, ...]
    step: int  # violating step (1-based, last of the trace)
    property: BoundProperty
    pattern: Pattern
    value: float  # metric value at the violating step (worst path for DELAY)
    bound: float
    path: int | None
    implicated: tuple[tuple[str, float], ...] = ()  # (net, excess), largest excess first

    @property
    def sequence(self) -> tuple[int, ...]:
        return tuple(t.next_input for t in self.trace)

    def excess(self) -> float:
        return self.value - self.bound if self.property.comparison in ("<", ">=") else self.bound - self.value


@dataclass
class CheckResult:
    verdict: str
    counterexample: Counterexample | None = None
    evaluated: int = 0


class Scanner:
    """Resumable walk over the exploration, returning successive witnesses."""

    def __init__(self, system: TransitionSystem, bound: int, policy: InputPolicy | None = None):
        self.system = system
        self.stats: dict = {}
        self._gen: Iterator[TransitionBatch] = explore(system, bound, policy, stats=self.stats)
        self._batch: TransitionBatch | None = None
        self._pos = 0
        self.scanned = 0  # transitions examined, up to and including each witness

    @property
    def evaluated(self) -> int:
        return self.stats.get("evaluated", 0)

    def next_witness(self, prop: BoundProperty) -> tuple[TransitionBatch, int] | None:
        while True:
            if self._batch is None or self._pos >= len(self._batch):
                self._batch = next(self._gen, None)
                self._pos = 0
                if self._batch is None:
                    return None
            mask = witness_mask(prop, self._batch, self.system)
            hit = np.flatnonzero(mask[self._pos:])
            if len(hit):
                j = self._pos + int(hit[0])
                self.scanned += j + 1 - self._pos
                self._pos = j + 1
                return self._batch, j
            self.scanned += len(self._batch) - self._pos
            self._pos = len(self._batch)


def make_counterexample(system: TransitionSystem, prop: BoundProperty, batch: TransitionBatch, j: int,
                        attribution: "Attribution | None" = None) -> Counterexample:
    seq = batch.sequence(j)
    steps = tuple(TraceStep(*row) for row in system.replay(seq))
    last = steps[-1]
    pattern = (int(batch.states[j]), int(batch.inputs[j]), int(batch.next_inputs[j]))
    assert (last.state, last.input, last.next_input) == pattern
    path = None
    if prop.metric == DELAY:
        bounds = np.asarray(prop.bound)
        over = np.asarray(last.valuation.D) - bounds
        path = int(np.argmax(over))
        value, bnd = last.valuation.D[path], float(bounds[path])
    else:
        value = last.valuation.metric(prop.metric)
        bnd = float(prop.bound)
    implicated = attribution.implicate(prop, pattern, path) if attribution else ()
    return Counterexample(steps, len(steps), prop, pattern, value, bnd, path, implicated)


def check(system: TransitionSystem, prop: BoundProperty, bound: int, policy: InputPolicy | None = None,
          attribution: "Attribution | None" = None) -> CheckResult:
    """Bounded verdict; UNKNOWN_BUDGET when exhaustive exploration is too large."""
    try:
        sc = Scanner(system, bound, policy)
        hit = sc.next_witness(prop)
    except BudgetExceeded:
        return CheckResult(UNKNOWN_BUDGET)
    if hit is None:
        return CheckResult(HOLDS, None, sc.evaluated)
    ce = make_counterexample(system, prop, hit[0], hit[1], attribution)
    return CheckResult(VIOLATED, ce, sc.evaluated)


# -------------------------------------------------------------- attribution

class Attribution:
    """Per-net metric shares at a transition, minus a clean reference.

    Each gate's contribution is credited to its output net, except inserted
    gates (credited to their host net) and drivers renamed by a series
    splice (credited to the spliced net). The reference is the clean
    circuit at the same transition when available, else each gate's share
    of the bound envelope.
    """

    def __init__(self, system: TransitionSystem, hosts: Mapping[str, str] | None = None,
                 renamed: Mapping[str, str] | None = None, reference: TransitionSystem | None = None,
                 envelope: BoundEnvelope | None = None):
        self.system = system
        self.reference = reference
        hosts = dict(hosts or {})
        renamed = dict(renamed or {})
        c = system.circuit
        self.net_of = []
        for name in system.gate_names:
            g = c.gates[name]
            net = hosts.get(name) or renamed.get(g.output, g.output)
            self.net_of.append(net)
        self.nets = sorted(set(self.net_of))
        self._col = {n: i for i, n in enumerate(self.nets)}
        self.envelope = envelope

    def _per_net(self, system: TransitionSystem, net_of: Sequence[str], terms: np.ndarray) -> dict[str, float]:
        out: dict[str, float] = {}
        for name_i, net in enumerate(net_of):
            out[net] = out.get(net, 0.0) + float(terms[name_i])
        return out

    def _terms(self, system: TransitionSystem, prop: BoundProperty, pattern: Pattern, path: int | None):
        old, new = system.transition_values(*pattern)
        dp, lp, dl = system.gate_terms(old, new)
        if prop.metric == DP:
            return dp[:, 0]
        if prop.metric in (LP_UPPER, LP_LOWER):
            return lp[:, 0]
        on_path = np.zeros(len(system.gate_names))
        for g in system.paths[path].gates:
            on_path[system.tables.index[g]] += 1.0
        return dl[:, 0] * on_path

    def implicate(self, prop: BoundProperty, pattern: Pattern, path: int | None) -> tuple[tuple[str, float], ...]:
        cur = self._per_net(self.system, self.net_of, self._terms(self.system, prop, pattern, path))
        if self.reference is not None:
            ref_sys = self.reference
            ref_terms = self._terms_reference(prop, pattern, path)
            ref = self._per_net(ref_sys, [ref_sys.circuit.gates[n].output for n in ref_sys.gate_names], ref_terms)
        else:
            ref = self._envelope_shares(prop, path)
        sign = -1.0 if prop.metric == LP_LOWER else 1.0
        excess = {n: sign * (v - ref.get(n, 0.0)) for n, v in cur.items()}
        ranked = sorted(excess.items(), key=lambda kv: (-kv[1], kv[0]))
        if not ranked or ranked[0][1] <= 0:
            return ()
        top = ranked[0][1]
        return tuple((n, e) for n, e in ranked if e == top)

    def _terms_reference(self, prop, pattern, path):
        ref = self.reference
        if prop.metric != DELAY:
            return self._terms(ref, prop, pattern, path)
        # the reference has no notion of the intruded path; charge every gate
        # of the matching clean path (same gate names minus inserted ones)
        old, new = ref.transition_values(*pattern)
        _, _, dl = ref.gate_terms(old, new)
        on_path = np.zeros(len(ref.gate_names))
        for g in self.system.paths[path].gates:
            if g in ref.tables.index:
                on_path[ref.tables.index[g]] += 1.0
        return dl[:, 0] * on_path

    def _envelope_shares(self, prop, path) -> dict[str, float]:
        env = self.envelope
        if env is None:
            return {}
        col = {DP: env.gate_dp_max, LP_UPPER: env.gate_lp_max, LP_LOWER: env.gate_lp_min,
               DELAY: env.gate_delay_max}[prop.metric]
        shares: dict[str, float] = {}
        index = {g: i for i, g in enumerate(env.gate_names)}
        on = set(self.system.paths[path].gates) if prop.metric == DELAY else None
        for name, net in zip(self.system.gate_names, self.net_of):
            if name in index and (on is None or name in on):
                shares[net] = shares.get(net, 0.0) + float(col[index[name]])
        return shares


# ------------------------------------------------------------------ analysis

@dataclass
class PropertyResult:
    property: BoundProperty
    verdict: str
    counterexamples: list[Counterexample] = field(default_factory=list)
    invocations: int = 0
    truncated: bool = False
    evaluated: int = 0
    visited: int = 0
    scanned: int = 0

    @property
    def final_property(self) -> BoundProperty:
        return self.property.with_exceptions(ce.pattern for ce in self.counterexamples)


@dataclass
class AnalysisReport:
    results: dict[str, PropertyResult]
    envelope: BoundEnvelope | None = None
    min_detectable: dict[str, int | None] = field(default_factory=dict)
    wall_time: float = 0.0
    memory_peak: int = 0

    @property
    def counterexamples(self) -> list[Counterexample]:
        return [ce for r in self.results.values() for ce in r.counterexamples]

    @property
    def iterations(self) -> dict[str, int]:
        return {m: r.invocations for m, r in self.results.items()}

    @property
    def vulnerable(self) -> list[str]:
        return rank_vulnerable(self)


def _loop(system: TransitionSystem, prop: BoundProperty, bound: int, policy: InputPolicy | None,
          max_iterations: int, attribution: Attribution | None) -> PropertyResult:
    """Check, turn the witness into an exception, check again ... Exceptions
    only grow, so every transition scanned before the latest witness stays
    clean and the scan resumes right after it."""
    res = PropertyResult(prop, HOLDS)
    try:
        sc = Scanner(system, bound, policy)
        cur = prop
        while True:
            res.invocations += 1
            hit = sc.next_witness(cur)
            if hit is None:
                break
            ce = make_counterexample(system, cur, hit[0], hit[1], attribution)
            res.counterexamples.append(ce)
            res.verdict = VIOLATED
            cur = cur.with_exceptions([ce.pattern])
            if res.invocations >= max_iterations:
                res.truncated = True
                break
    except BudgetExceeded:
        res.verdict = UNKNOWN_BUDGET
        return res
    res.evaluated = sc.evaluated
    res.visited = sc.stats.get("visited", 0)
    res.scanned = sc.scanned
    return res


def naive_loop(system: TransitionSystem, prop: BoundProperty, bound: int, policy: InputPolicy | None = None,
               max_iterations: int = 10_000) -> PropertyResult:
    """Baseline: each iteration restarts exploration from reset, skipping the
    witnesses found so far. Same counterexamples, more transition labels."""
    res = PropertyResult(prop, HOLDS)
    cur = prop
    try:
        while True:
            res.invocations += 1
            sc = Scanner(system, bound, policy)
            hit = sc.next_witness(cur)
            res.evaluated += sc.evaluated
            res.visited += sc.stats.get("visited", 0)
            res.scanned += sc.scanned
            if hit is None:
                break
            ce = make_counterexample(system, cur, hit[0], hit[1])
            res.counterexamples.append(ce)
            res.verdict = VIOLATED
            cur = cur.with_exceptions([ce.pattern])
            if res.invocations >= max_iterations:
                res.truncated = True
                break
    except BudgetExceeded:
        res.verdict = UNKNOWN_BUDGET
    return res


METRIC_GROUPS = {"dp": (DP,), "lp": (LP_UPPER, LP_LOWER), "delay": (DELAY,)}


def vulnerability_analysis(system: TransitionSystem, envelope: BoundEnvelope, bound: int,
                           policy: InputPolicy | None = None, max_iterations: int = 10_000, *,
                           metrics: Sequence[str] = ("dp", "lp", "delay"),
                           attribution: Attribution | None = None) -> AnalysisReport:
    """Run the exception loop for each selected metric's bound property."""
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    t0 = time.perf_counter()
    tracing = tracemalloc.is_tracing()
    if not tracing:
        tracemalloc.start()
    results: dict[str, PropertyResult] = {}
    try:
        for group in metrics:
            for m in METRIC_GROUPS[group]:
                if m == DELAY and not system.paths:
                    continue
                prop = property_for(m, envelope)
                results[m] = _loop(system, prop, bound, policy, max_iterations, attribution)
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        if not tracing:
            tracemalloc.stop()
    return AnalysisReport(results, envelope, {}, time.perf_counter() - t0, peak)


def rank_vulnerable(report: AnalysisReport) -> list[str]:
    """Implicated nets by (count desc, largest excess desc, name asc)."""
    count: dict[str, int] = {}
    worst: dict[str, float] = {}
    for ce in report.counterexamples:
        for net, ex in ce.implicated:
            count[net] = count.get(net, 0) + 1
            worst[net] = max(worst.get(net, float("-inf")), ex)
    return sorted(count, key=lambda n: (-count[n], -worst[n], n))


def ranking_table(report: AnalysisReport) -> list[tuple[str, int, float]]:
    count: dict[str, int] = {}
    worst: dict[str, float] = {}
    for ce in report.counterexamples:
        for net, ex in ce.implicated:
            count[net] = count.get(net, 0) + 1
            worst[net] = max(worst.get(net, float("-inf")), ex)
    return [(n, count[n], worst[n]) for n in rank_vulnerable(report)]


def summary_csv(report: AnalysisReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["property", "verdict", "counterexamples", "invocations", "truncated", "scanned",
                "evaluated", "visited"])
    for name, r in report.results.items():
        w.writerow([name, r.verdict, len(r.counterexamples), r.invocations, str(r.truncated).lower(),
                    r.scanned, r.evaluated, r.visited])
    return buf.getvalue()


def attribution_for(system: TransitionSystem, intruded=None, reference: TransitionSystem | None = None,
                    envelope: BoundEnvelope | None = None) -> Attribution:
    """Attribution for a plain or intruded circuit (``intruded`` is an
    :class:`~htformal.intrusion.IntrudedCircuit`)."""
    hosts, renamed = {}, {}
    if intruded is not None:
        hosts = dict(intruded.host_of)
        for net, srcs in intruded.sources.items():
            for s in srcs:
                renamed[s] = net
    return Attribution(system, hosts, renamed, reference, envelope)

