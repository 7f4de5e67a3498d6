"""Dynamic power, subthreshold leakage and Elmore delay of NAND2/NOR2/NOT gates.

The scalar functions mirror the closed-form gate models; :class:`GateTables`
precomputes them per gate (and per variation sample) so whole circuits and
batches of transitions can be evaluated with array operations.

Two-input state strings are ``"ab"`` with ``a`` on the first input pin. In a
NAND2 the first input drives the nMOS next to the output, so the stack node
only matters when the second (bottom) input switches; NOR2 mirrors this on
its pMOS stack.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .logicsim import Simulator
from .netlist import DFF, NAND2, NOR2, NOT, TIE_KINDS, Circuit, Gate, NetlistError, PathDescriptor
from .techmodel import (
    NMOS, PMOS, TechnologyParams, diffusion_capacitance, leakage_term, on_resistance,
    pin_capacitance, stack_factor, stack_params,
)

LN2 = math.log(2.0)

STATES = {NAND2: ("00", "01", "10", "11"), NOR2: ("00", "01", "10", "11"), NOT: ("0", "1")}


def _bits(state) -> tuple[int, ...]:
    if isinstance(state, str):
        return tuple(int(c) for c in state)
    return tuple(int(b) for b in state)


def _state_str(state) -> str:
    return "".join(str(b) for b in _bits(state))


def logic_output(kind: str, state) -> int:
    b = _bits(state)
    if kind == NAND2:
        return int(not (b[0] and b[1]))
    if kind == NOR2:
        return int(not (b[0] or b[1]))
    if kind == NOT:
        return int(not b[0])
    raise NetlistError(f"no logic model for {kind}")


# ----------------------------------------------------------------- formulas

def dynamic_power(alpha, C_total, params: TechnologyParams):
    """alpha * C_total * V_dd^2 * f."""
    a = np.asarray(alpha)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("switching activity must lie in [0, 1]")
    return alpha * C_total * params.V_dd ** 2 * params.f


def dff_pin_capacitance(params: TechnologyParams):
    """Data pin of a flip-flop cell: input inverter plus one steering NAND2."""
    return 2 * pin_capacitance(params, 1)


def load_capacitance(circuit: Circuit, net: str, params: TechnologyParams,
                     pad_capacitance: float = 0.0, sink_capacitance: float = 0.0):
    """Gate capacitance hanging on ``net``; each sink is sized by its own fanout."""
    total = 0.0
    for gname, _pin in circuit.sinks(net):
        g = circuit.gates[gname]
        if g.kind in (NAND2, NOR2, NOT):
            total = total + pin_capacitance(params, g.fanout_count)
        elif g.kind == DFF:
            total = total + dff_pin_capacitance(params)
        elif g.kind in TIE_KINDS:
            pass
        else:
            raise NetlistError(f"no capacitance model for {g.kind}; decompose first")
    if net in circuit.outputs:
        total = total + pad_capacitance
    elif not circuit.sinks(net):
        total = total + sink_capacitance
    return total


def total_capacitance(circuit: Circuit, gate: Gate, params: TechnologyParams,
                      intrusion_load=0.0, pad_capacitance: float = 0.0, sink_capacitance: float = 0.0):
    """C_load + C_diff (+ any extra intrusion load) at the gate output."""
    return (load_capacitance(circuit, gate.output, params, pad_capacitance, sink_capacitance)
            + diffusion_capacitance(params, gate.kind, gate.fanout_count) + intrusion_load)


def leakage_power(kind: str, input_state, params: TechnologyParams, FO=1):
    """Subthreshold leakage power of one gate in a static input state."""
    b = _bits(input_state)
    arity = {NAND2: 2, NOR2: 2, NOT: 1}.get(kind)
    if arity is None:
        raise NetlistError(f"no leakage model for {kind}")
    if len(b) != arity:
        raise ValueError(f"{kind} expects {arity} input bits, got {len(b)}")
    Kn = leakage_term(params, NMOS)
    Kp = leakage_term(params, PMOS)
    V = params.V_dd
    if kind == NOT:
        return 2 * FO * V * (Kp if b[0] else Kn)
    ones = sum(b)
    if kind == NAND2:
        if ones == 0:
            return 2 * FO * V * Kn * stack_factor(params, NMOS)
        if ones == 1:
            return 2 * FO * V * (Kn + Kp)
        return 4 * FO * V * Kp
    if ones == 0:
        return 4 * FO * V * Kn
    if ones == 1:
        return 2 * FO * V * (Kn + Kp)
    return 2 * FO * V * Kp * stack_factor(params, PMOS)


def elmore_tau(kind: str, transition, C_total, params: TechnologyParams, FO=1, WR_n=None, WR_p=None):
    """First-order time constant of the output edge caused by ``transition``.

    ``transition`` is ``(old_state, new_state)``. Returns 0 when the output
    does not change. R_n/R_p are minimum-width on-resistances; the gate
    width enters through ``FO * WR``.
    """
    old, new = (_state_str(s) for s in transition)
    if kind not in STATES or old not in STATES[kind] or new not in STATES[kind]:
        raise ValueError(f"unknown transition {old}->{new} for {kind}")
    if logic_output(kind, old) == logic_output(kind, new):
        return 0.0 * C_total
    WR_n = params.WR_n if WR_n is None else WR_n
    WR_p = params.WR_p if WR_p is None else WR_p
    Rn = on_resistance(params, NMOS, 1.0)
    Rp = on_resistance(params, PMOS, 1.0)
    if kind == NOT:
        if new == "0":
            return Rp * C_total / (FO * WR_p)
        return Rn * C_total / (FO * WR_n)
    if kind == NAND2:
        if new == "11":
            extra = params.C_nstack if old == "10" else 0.0
            return 2 * Rn * (C_total + extra) / (FO * WR_n)
        if new == "00":
            return Rp * C_total / (2 * FO * WR_p)
        extra = params.C_nstack if new == "10" else 0.0
        return Rp * (C_total + extra) / (FO * WR_p)
    # NOR2: series pMOS pull-up, parallel nMOS pull-down
    if new == "00":
        extra = params.C_pstack if old == "01" else 0.0
        return 2 * Rp * (C_total + extra) / (FO * WR_p)
    if new == "11":
        return Rn * C_total / (2 * FO * WR_n)
    extra = params.C_pstack if new == "01" else 0.0
    return Rn * (C_total + extra) / (FO * WR_n)


def elmore_delay(kind: str, transition, C_total, params: TechnologyParams, FO=1, WR_n=None, WR_p=None):
    return LN2 * elmore_tau(kind, transition, C_total, params, FO, WR_n, WR_p)


def switching_activity(circuit: Circuit, trace, initial_state=None) -> dict[str, float]:
    """Output toggle rate of every gate over a cycle-accurate run of ``trace``."""
    trace = np.asarray(trace, dtype=bool)
    if trace.ndim != 2 or len(trace) < 2:
        raise ValueError("trace must contain at least 2 input vectors")
    sim = Simulator(circuit)
    values = np.stack(sim.run(trace, initial_state), axis=1)  # nets x cycles
    toggles = (values[:, 1:] != values[:, :-1]).sum(axis=1)
    steps = len(trace) - 1
    return {g.name: float(toggles[sim.index[g.output]]) / steps for g in circuit.gates.values()}


# ------------------------------------------------------------ flip-flop cell

def dff_models(params: TechnologyParams, FO: int, q_load):
    """Hold-phase leakage (indexed by 2*D + Q) and toggle energies of a
    flip-flop cell: ``(leak[4], q_coef, d_coef)``, coefficients in watts.

    Q is driven by the cross-coupled NAND2 sized for the external fanout plus
    the internal feedback pin; all other cell gates are minimum size.
    """
    fo_q = FO + 1
    leak = []
    for d in (0, 1):
        for q in (0, 1):
            qn = 1 - q
            leak.append(
                leakage_power(NOT, (d,), params, 1)
                + leakage_power(NAND2, (d, 0), params, 1)
                + leakage_power(NAND2, (1 - d, 0), params, 1)
                + leakage_power(NAND2, (1, qn), params, fo_q)
                + leakage_power(NAND2, (1, q), params, 1)
            )
    c_q = q_load + pin_capacitance(params, 1) + diffusion_capacitance(params, NAND2, fo_q)
    c_qn = pin_capacitance(params, fo_q) + diffusion_capacitance(params, NAND2, 1)
    c_dn = pin_capacitance(params, 1) + diffusion_capacitance(params, NOT, 1)
    scale = params.V_dd ** 2 * params.f
    return leak, (c_q + c_qn) * scale, c_dn * scale


# ------------------------------------------------------------- gate tables

def wired_states(circuit: Circuit, g: Gate) -> set[int]:
    """Input states a gate's wiring permits: pins tied to one net move
    together and tie-cell pins are constant."""
    fixed: list[int | None] = []
    for net in g.inputs:
        drv = circuit.driver_of(net)
        fixed.append(None if drv is None or drv.kind not in TIE_KINDS else int(drv.kind == "TIE1"))
    out = set()
    for idx in range(1 << len(g.inputs)):
        bits = [(idx >> (len(g.inputs) - 1 - k)) & 1 for k in range(len(g.inputs))]
        if any(f is not None and f != b for f, b in zip(fixed, bits)):
            continue
        if any(g.inputs[a] == g.inputs[b] and bits[a] != bits[b]
               for a in range(len(bits)) for b in range(a)):
            continue
        out.add(idx)
    return out


KIND_CODE = {NOT: 1, NAND2: 2, NOR2: 2, DFF: 3}


class GateTables:
    """Per-gate leakage, delay and switching tables for a set of parameters.

    Arrays carry a trailing sample axis of length S (S = 1 for one parameter
    set): ``leak[g, state, S]``, ``delay[g, old, new, S]``, ``dp[g, S]`` (power
    when the output toggles) and ``dp_d[g, S]`` (flip-flop data-side toggle).
    Tie cells contribute nothing.
    """

    def __init__(self, circuit: Circuit, params, *, pad_capacitance: float = 0.0,
                 sink_capacitance: float = 0.0):
        if isinstance(params, TechnologyParams):
            stacked = params if np.ndim(params.V_dd) else stack_params([params])
        else:
            stacked = stack_params(params)
        self.circuit = circuit
        self.params = stacked
        self.names = list(circuit.gates)
        self.index = {n: i for i, n in enumerate(self.names)}
        S = stacked.n_samples
        G = len(self.names)
        self.leak = np.zeros((G, 4, S))
        self.delay = np.zeros((G, 4, 4, S))
        self.dp = np.zeros((G, S))
        self.dp_d = np.zeros((G, S))
        self.c_total = np.zeros((G, S))
        self.valid_states = np.zeros((G, 4), dtype=bool)
        self.valid_edges = np.zeros((G, 4, 4), dtype=bool)
        scale = stacked.V_dd ** 2 * stacked.f
        loads: dict[str, np.ndarray] = {}
        leak_rows: dict = {}
        delay_rows: dict = {}

        def c_load(net):
            if net not in loads:
                loads[net] = np.broadcast_to(
                    load_capacitance(circuit, net, stacked, pad_capacitance, sink_capacitance), (S,))
            return loads[net]

        for i, name in enumerate(self.names):
            g = circuit.gates[name]
            if g.kind in TIE_KINDS:
                continue
            if g.kind == DFF:
                leak, qc, dc = dff_models(stacked, g.fanout_count, c_load(g.output))
                self.leak[i] = np.array(leak)
                self.dp[i] = qc
                self.dp_d[i] = dc
                self.valid_states[i] = True
                continue
            if g.kind not in STATES:
                raise NetlistError(f"no side-channel model for {g.kind}; decompose first")
            ct = c_load(g.output) + diffusion_capacitance(stacked, g.kind, g.fanout_count)
            self.c_total[i] = ct
            self.dp[i] = ct * scale
            states = STATES[g.kind]
            allowed = wired_states(circuit, g)
            # identical cells (intrusions especially) share their rows
            lkey = (g.kind, g.fanout_count)
            if lkey not in leak_rows:
                leak_rows[lkey] = [leakage_power(g.kind, s, stacked, g.fanout_count) for s in states]
            dkey = lkey + (ct.tobytes(),)
            if dkey not in delay_rows:
                delay_rows[dkey] = {
                    (si, ti): elmore_delay(g.kind, (s, t), ct, stacked, g.fanout_count)
                    for si, s in enumerate(states) for ti, t in enumerate(states)
                    if logic_output(g.kind, s) != logic_output(g.kind, t)}
            for si, v in enumerate(leak_rows[lkey]):
                self.leak[i, si] = v
                self.valid_states[i, si] = si in allowed
            for (si, ti), v in delay_rows[dkey].items():
                self.delay[i, si, ti] = v
                self.valid_edges[i, si, ti] = si in allowed and ti in allowed
        # transitions the wiring forbids never contribute to a worst case
        self.delay[~self.valid_edges] = 0.0

    @property
    def n_samples(self) -> int:
        return self.dp.shape[1]

    def leak_max(self) -> np.ndarray:
        """Per-gate maximum over valid states and samples."""
        masked = np.where(self.valid_states[:, :, None], self.leak, -np.inf)
        out = masked.max(axis=(1, 2))
        return np.where(np.isfinite(out), out, 0.0)

    def leak_min(self) -> np.ndarray:
        masked = np.where(self.valid_states[:, :, None], self.leak, np.inf)
        out = masked.min(axis=(1, 2))
        return np.where(np.isfinite(out), out, 0.0)

    def dp_max(self) -> np.ndarray:
        return (self.dp + self.dp_d).max(axis=1)

    def delay_max(self) -> np.ndarray:
        return self.delay.max(axis=(1, 2, 3))

    def worst_delays(self, sample: int | None = None) -> dict[str, float]:
        d = self.delay.max(axis=(1, 2)) if sample is None else self.delay[:, :, :, sample].max(axis=(1, 2))
        if sample is None:
            d = d.max(axis=1)
        return {n: float(d[i]) for i, n in enumerate(self.names)}


# ---------------------------------------------------------------- envelopes

@dataclass
class BoundEnvelope:
    DP_max: float
    LP_max: float
    LP_min: float
    D_max: tuple[float, ...]
    paths: tuple[PathDescriptor, ...]
    gate_names: tuple[str, ...]
    gate_dp_max: np.ndarray = field(repr=False)
    gate_lp_max: np.ndarray = field(repr=False)
    gate_lp_min: np.ndarray = field(repr=False)
    gate_delay_max: np.ndarray = field(repr=False)
    n_samples: int = 1

    def share(self, gates: Sequence[str]) -> dict[str, float]:
        """Bound share of a gate subset (sum of its per-gate extremes)."""
        idx = [self.gate_names.index(g) for g in gates]
        return {
            "DP_max": float(self.gate_dp_max[idx].sum()),
            "LP_max": float(self.gate_lp_max[idx].sum()),
            "LP_min": float(self.gate_lp_min[idx].sum()),
        }

    def to_text(self) -> str:
        lines = [
            f"samples: {self.n_samples}",
            f"DP_max [W]: {self.DP_max:.9g}",
            f"LP_max [W]: {self.LP_max:.9g}",
            f"LP_min [W]: {self.LP_min:.9g}",
        ]
        for k, (p, d) in enumerate(zip(self.paths, self.D_max)):
            lines.append(f"D_max({k}) [s]: {d:.9g}  path: {' '.join(p.gates)}")
        return "\n".join(lines) + "\n"


def circuit_bounds(circuit: Circuit, samples, paths: Sequence[PathDescriptor] = (),
                   reachable_states: Mapping[str, set[int]] | None = None, **cap_kw) -> BoundEnvelope:
    """Upper/lower bounds from per-gate extremes over all samples.

    Dynamic power uses full switching activity per gate; leakage takes each
    gate's extreme over its input states (restricted to ``reachable_states``
    when given, state index as in :class:`GateTables`).
    """
    samples = list(samples) if not isinstance(samples, TechnologyParams) else [samples]
    if not samples:
        raise ValueError("empty sample set")
    tables = GateTables(circuit, samples, **cap_kw)
    return envelope_from_tables(tables, paths, reachable_states)


def envelope_from_tables(tables: GateTables, paths: Sequence[PathDescriptor] = (),
                         reachable_states: Mapping[str, set[int]] | None = None) -> BoundEnvelope:
    valid = tables.valid_states.copy()
    if reachable_states is not None:
        for name, states in reachable_states.items():
            i = tables.index[name]
            mask = np.zeros(4, dtype=bool)
            mask[list(states)] = True
            if (valid[i] & mask).any():
                valid[i] &= mask
    lp_hi = np.where(valid[:, :, None], tables.leak, -np.inf).max(axis=(1, 2))
    lp_lo = np.where(valid[:, :, None], tables.leak, np.inf).min(axis=(1, 2))
    lp_hi = np.where(np.isfinite(lp_hi), lp_hi, 0.0)
    lp_lo = np.where(np.isfinite(lp_lo), lp_lo, 0.0)
    dp = tables.dp_max()
    dmax = tables.delay_max()
    d_paths = tuple(float(sum(dmax[tables.index[g]] for g in p.gates)) for p in paths)
    return BoundEnvelope(
        DP_max=float(dp.sum()), LP_max=float(lp_hi.sum()), LP_min=float(lp_lo.sum()),
        D_max=d_paths, paths=tuple(paths), gate_names=tuple(tables.names),
        gate_dp_max=dp, gate_lp_max=lp_hi, gate_lp_min=lp_lo, gate_delay_max=dmax,
        n_samples=tables.n_samples,
    )


# ------------------------------------------------------------------ profile

@dataclass
class GateMetrics:
    gate: str
    kind: str
    dynamic_power: float
    leakage_power: dict[str, float]
    delay: dict[str, float]


@dataclass
class SideChannelProfile:
    gates: dict[str, GateMetrics]
    DP: float
    LP: float
    path_delays: tuple[float, ...]
    paths: tuple[PathDescriptor, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gate", "kind", "state", "dp_w", "lp_w", "delay_s"])
        for name, m in self.gates.items():
            w.writerow([name, m.kind, "*", f"{m.dynamic_power:.9g}", "", ""])
            for s, v in m.leakage_power.items():
                w.writerow([name, m.kind, s, "", f"{v:.9g}", ""])
            for t, v in m.delay.items():
                w.writerow([name, m.kind, t, "", "", f"{v:.9g}"])
        return buf.getvalue()


def _state_label(kind: str, idx: int) -> str:
    if kind == NOT:
        return str(idx)
    if kind == DFF:
        return f"D{idx >> 1}Q{idx & 1}"
    return f"{idx >> 1}{idx & 1}"


def profile(circuit: Circuit, params: TechnologyParams, paths: Sequence[PathDescriptor] = (),
            activity: Mapping[str, float] | None = None, values: np.ndarray | None = None,
            **cap_kw) -> SideChannelProfile:
    """Per-gate metrics at one parameter set.

    ``activity`` defaults to 1 for every gate. Aggregate LP is taken at the
    settled net ``values`` (one column of a :class:`Simulator` result) when
    given, otherwise at each gate's worst state.
    """
    t = GateTables(circuit, params, **cap_kw)
    sim_index = {n: i for i, n in enumerate(circuit.nets)}
    gates = {}
    dp_total = 0.0
    lp_total = 0.0
    for i, name in enumerate(t.names):
        g = circuit.gates[name]
        alpha = 1.0 if activity is None else activity.get(name, 0.0)
        dp = alpha * float(t.dp[i, 0] + t.dp_d[i, 0])
        leak = {_state_label(g.kind, s): float(t.leak[i, s, 0]) for s in range(4) if t.valid_states[i, s]}
        delay = {
            f"{_state_label(g.kind, a)}->{_state_label(g.kind, b)}": float(t.delay[i, a, b, 0])
            for a in range(4) for b in range(4) if t.valid_edges[i, a, b]
        }
        gates[name] = GateMetrics(name, g.kind, dp, leak, delay)
        dp_total += dp
        if values is not None and t.valid_states[i].any():
            lp_total += float(t.leak[i, gate_state(circuit, g, values, sim_index), 0])
        elif leak:
            lp_total += max(leak.values())
    dmax = t.delay.max(axis=(1, 2))[:, 0]
    pd = tuple(float(sum(dmax[t.index[g]] for g in p.gates)) for p in paths)
    return SideChannelProfile(gates, dp_total, lp_total, pd, tuple(paths))


def gate_state(circuit: Circuit, g: Gate, values: np.ndarray, index: Mapping[str, int]) -> int:
    """State index of a gate at settled net values (a 1-D column)."""
    if g.kind == DFF:
        return 2 * int(values[index[g.inputs[0]]]) + int(values[index[g.output]])
    idx = 0
    for i in g.inputs:
        idx = 2 * idx + int(values[index[i]])
    return idx
