"""Zero-delay, bit-parallel logic simulation.

Values are numpy bool arrays of shape ``(n_nets, batch)``; gates of the same
level and kind are evaluated together. Flip-flops are ideal edge-triggered
elements: ``settle`` takes the present state, ``next_state`` reads the data
inputs. Circuits with combinational cycles (expanded latch cells) are relaxed
gate by gate from the previous values until stable.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .netlist import DFF, NAND2, NOR2, NOT, TIE0, TIE1, Circuit, NetlistError

_REDUCE = {
    "AND": (np.logical_and, False),
    "NAND": (np.logical_and, True),
    NAND2: (np.logical_and, True),
    "OR": (np.logical_or, False),
    "NOR": (np.logical_or, True),
    NOR2: (np.logical_or, True),
    "XOR": (np.logical_xor, False),
    "XNOR": (np.logical_xor, True),
}


def bits_to_array(values: list[int] | np.ndarray, width: int) -> np.ndarray:
    """Integers -> (len, width) bool array, bit i of the integer in column i."""
    v = np.asarray(values, dtype=np.int64).reshape(-1, 1)
    return ((v >> np.arange(width, dtype=np.int64)) & 1).astype(bool)


def array_to_bits(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.int64)
    return (arr << np.arange(arr.shape[-1], dtype=np.int64)).sum(axis=-1)


def _rows(a, width: int) -> np.ndarray:
    a = np.asarray(a, dtype=bool)
    if a.ndim == 2:
        return a
    return a.reshape(-1, width) if width else np.zeros((1, 0), dtype=bool)


class Simulator:
    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.nets = list(circuit.nets)
        self.index = {n: i for i, n in enumerate(self.nets)}
        self.pi = np.array([self.index[n] for n in circuit.inputs], dtype=np.intp)
        self.po = np.array([self.index[n] for n in circuit.outputs], dtype=np.intp)
        self.flipflops = circuit.flipflops
        self.q = np.array([self.index[g.output] for g in self.flipflops], dtype=np.intp)
        self.d = np.array([self.index[g.inputs[0]] for g in self.flipflops], dtype=np.intp)
        self.n_inputs = len(self.pi)
        self.n_state = len(self.q)
        self._groups = None if circuit.cyclic else self._level_groups()

    def _level_groups(self):
        level: dict[str, int] = {}
        for ff in self.flipflops:
            level[ff.output] = 0
        for pi in self.circuit.inputs:
            level[pi] = 0
        buckets = defaultdict(list)
        for g in self.circuit.combinational:
            lv = 1 + max((level[i] for i in g.inputs), default=0)
            level[g.output] = lv
            buckets[(lv, g.kind, len(g.inputs))].append(g)
        groups = []
        for (lv, kind, arity) in sorted(buckets):
            gs = buckets[(lv, kind, arity)]
            out = np.array([self.index[g.output] for g in gs], dtype=np.intp)
            ins = np.array([[self.index[i] for i in g.inputs] for g in gs], dtype=np.intp).reshape(len(gs), arity)
            groups.append((kind, out, ins))
        return groups

    def settle(self, state: np.ndarray, inputs: np.ndarray, prev: np.ndarray | None = None) -> np.ndarray:
        """Settled net values for a batch of (state, input) bool rows."""
        state = _rows(state, self.n_state)
        inputs = _rows(inputs, self.n_inputs)
        batch = max(len(state), len(inputs))
        vals = np.zeros((len(self.nets), batch), dtype=bool) if prev is None else prev.copy()
        vals[self.pi] = inputs.T
        vals[self.q] = state.T
        if self._groups is not None:
            for kind, out, ins in self._groups:
                vals[out] = _apply(kind, vals, ins)
        else:
            self._relax(vals)
        return vals

    def _relax(self, vals: np.ndarray) -> None:
        gates = self.circuit.combinational
        compiled = [(g.kind, self.index[g.output],
                     np.array([[self.index[i] for i in g.inputs]], dtype=np.intp).reshape(1, -1))
                    for g in gates]
        for _ in range(2 * len(gates) + 2):
            changed = False
            for kind, out, ins in compiled:
                new = _apply(kind, vals, ins)[0]
                if not np.array_equal(new, vals[out]):
                    vals[out] = new
                    changed = True
            if not changed:
                return
        raise NetlistError("combinational loop does not settle (oscillation)")

    def next_state(self, vals: np.ndarray) -> np.ndarray:
        return vals[self.d].T.copy()

    def outputs(self, vals: np.ndarray) -> np.ndarray:
        return vals[self.po].T.copy()

    def run(self, input_trace: np.ndarray, initial_state: np.ndarray | None = None) -> list[np.ndarray]:
        """Cycle-accurate run of one input sequence; returns settled values per cycle."""
        trace = np.asarray(input_trace, dtype=bool).reshape(-1, self.n_inputs)
        state = np.zeros((1, self.n_state), dtype=bool) if initial_state is None else \
            np.asarray(initial_state, dtype=bool).reshape(1, self.n_state)
        out, prev = [], None
        for x in trace:
            vals = self.settle(state, x.reshape(1, -1), prev)
            out.append(vals[:, 0].copy())
            state = self.next_state(vals)
            prev = vals
        return out


def _apply(kind: str, vals: np.ndarray, ins: np.ndarray) -> np.ndarray:
    if kind == NOT:
        return ~vals[ins[:, 0]]
    if kind == "BUF":
        return vals[ins[:, 0]].copy()
    if kind == TIE0:
        return np.zeros((ins.shape[0], vals.shape[1]), dtype=bool)
    if kind == TIE1:
        return np.ones((ins.shape[0], vals.shape[1]), dtype=bool)
    if kind == DFF:
        raise NetlistError("flip-flops are not combinational")
    op, negate = _REDUCE[kind]
    acc = vals[ins[:, 0]]
    for k in range(1, ins.shape[1]):
        acc = op(acc, vals[ins[:, k]])
    return ~acc if negate else acc


def exhaustive_io(circuit: Circuit) -> tuple[np.ndarray, np.ndarray]:
    """Outputs and next state for every (state, input) pair.

    Rows enumerate ``state << n_inputs | input``; handy for equivalence checks.
    """
    sim = Simulator(circuit)
    width = sim.n_state + sim.n_inputs
    if width > 24:
        raise ValueError("too many inputs+state bits for exhaustive simulation")
    rows = np.arange(1 << width, dtype=np.int64)
    inputs = bits_to_array(rows & ((1 << sim.n_inputs) - 1), sim.n_inputs)
    state = bits_to_array(rows >> sim.n_inputs, sim.n_state)
    vals = sim.settle(state, inputs)
    return sim.outputs(vals), sim.next_state(vals)
