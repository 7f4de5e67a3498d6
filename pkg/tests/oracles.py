"""Independent reference computations used to check the package.

Everything here is scalar, dictionary-based and written from the device and
circuit equations, without calling the package's evaluation code. Only the
netlist data structures and parameter containers are shared.
"""

from __future__ import annotations

import math
from itertools import product

BOLTZMANN = 1.380649e-23
CHARGE = 1.602176634e-19
LN2 = math.log(2.0)

_GENERIC = {
    "AND": lambda v: all(v),
    "NAND": lambda v: not all(v),
    "NAND2": lambda v: not all(v),
    "OR": lambda v: any(v),
    "NOR": lambda v: not any(v),
    "NOR2": lambda v: not any(v),
    "XOR": lambda v: sum(v) % 2 == 1,
    "XNOR": lambda v: sum(v) % 2 == 0,
    "NOT": lambda v: not v[0],
    "BUF": lambda v: v[0],
    "BUFF": lambda v: v[0],
    "TIE0": lambda v: False,
    "TIE1": lambda v: True,
}


# ------------------------------------------------------------- simulation

def evaluate(circuit, state: dict, inputs: dict) -> dict:
    """Settled net values by recursive evaluation (acyclic combinational part)."""
    vals = dict(inputs)
    vals.update(state)
    driver = {g.output: g for g in circuit.gates.values() if g.kind != "DFF"}

    def value(net):
        if net not in vals:
            g = driver[net]
            vals[net] = bool(_GENERIC[g.kind]([value(i) for i in g.inputs]))
        return vals[net]

    for net in circuit.nets:
        value(net)
    return vals


def bits(value: int, width: int) -> list[bool]:
    return [bool((value >> i) & 1) for i in range(width)]


def state_dict(circuit, s: int) -> dict:
    return {ff.output: b for ff, b in zip(circuit.flipflops, bits(s, len(circuit.flipflops)))}


def input_dict(circuit, x: int) -> dict:
    return dict(zip(circuit.inputs, bits(x, len(circuit.inputs))))


def next_state(circuit, vals: dict) -> int:
    return sum(int(vals[ff.inputs[0]]) << j for j, ff in enumerate(circuit.flipflops))


def run(circuit, sequence, state: int = 0):
    """Output integer per cycle for an input-integer sequence from ``state``."""
    outs = []
    for x in sequence:
        v = evaluate(circuit, state_dict(circuit, state), input_dict(circuit, x))
        outs.append(sum(int(v[o]) << j for j, o in enumerate(circuit.outputs)))
        state = next_state(circuit, v)
    return outs


def reachable(circuit, reset: int = 0) -> set[int]:
    """Breadth-first reachable flip-flop states under all inputs."""
    seen, frontier = {reset}, [reset]
    while frontier:
        nxt = []
        for s in frontier:
            for x in range(1 << len(circuit.inputs)):
                t = next_state(circuit, evaluate(circuit, state_dict(circuit, s), input_dict(circuit, x)))
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return seen


def all_paths(circuit) -> list[tuple[str, ...]]:
    """Every source-to-sink gate path by depth-first search."""
    readers: dict[str, list[str]] = {}
    for g in circuit.gates.values():
        if g.kind in ("DFF", "TIE0", "TIE1"):
            continue
        for net in set(g.inputs):
            readers.setdefault(net, []).append(g.name)
    ff_d = {ff.inputs[0] for ff in circuit.flipflops}
    sources = set(circuit.inputs) | {ff.output for ff in circuit.flipflops}
    sinks = set(circuit.outputs) | ff_d
    out = []

    def dfs(path):
        g = circuit.gates[path[-1]]
        if g.output in sinks:
            out.append(tuple(path))
        for nxt in sorted(readers.get(g.output, [])):
            dfs(path + [nxt])

    starts = sorted({r for net in sources for r in readers.get(net, [])})
    for s in starts:
        dfs([s])
    return out


# ----------------------------------------------------------- device level

def _p(params, name):
    return float(getattr(params, name))


def device_current(params, pol: str, FO: int = 1) -> float:
    """Subthreshold off-current of one device of width FO*WR*W_min."""
    n = _p(params, f"n_{pol}")
    mu = _p(params, f"mu_{pol}")
    W = FO * _p(params, f"WR_{pol}") * _p(params, f"W_{pol}min")
    L = _p(params, f"L_{pol}")
    phi = BOLTZMANN * _p(params, "T") / CHARGE
    vth = _p(params, f"V_th{pol}")
    sigma = _p(params, f"sigma_{pol}")
    vdd = _p(params, "V_dd")
    return 2 * n * mu * _p(params, "C_ox") * (W / L) * phi ** 2 * math.exp((sigma * vdd - vth) / (n * phi))


def stack(params, pol: str) -> float:
    return 10.0 ** (-_p(params, "V_dd") * _p(params, f"sigma_{pol}") / _p(params, f"n_{pol}"))


# Transistor networks: ("series" | "parallel", [input index per device]).
TOPOLOGY = {
    "NAND2": {"n": ("series", [0, 1]), "p": ("parallel", [0, 1])},
    "NOR2": {"n": ("parallel", [0, 1]), "p": ("series", [0, 1])},
    "NOT": {"n": ("series", [0]), "p": ("series", [0])},
}


def topology_leakage(kind: str, inputs, params, FO: int = 1) -> float:
    """Sum over off devices of their current times V_dd; a series chain whose
    devices are all off leaks as one device reduced by the stack factor."""
    total = 0.0
    for pol, (shape, pins) in TOPOLOGY[kind].items():
        off = [(inputs[i] == 0) if pol == "n" else (inputs[i] == 1) for i in pins]
        i_dev = device_current(params, pol, FO)
        if shape == "series" and len(off) > 1 and all(off):
            total += i_dev * stack(params, pol)
        else:
            total += i_dev * sum(off)
    return _p(params, "V_dd") * total


def r_on(params, pol: str, W_ratio: float = 1.0) -> float:
    W = W_ratio * _p(params, f"W_{pol}min")
    return _p(params, f"L_{pol}") / (_p(params, f"mu_{pol}") * _p(params, "C_ox") * W
                                     * (_p(params, "V_dd") - _p(params, f"V_th{pol}")))


def output(kind: str, inputs) -> int:
    return int(_GENERIC[kind]([bool(v) for v in inputs]))


def tau(kind: str, old, new, C, params, FO: int = 1) -> float:
    """Elmore time constant of a driving network switching the output node."""
    if output(kind, old) == output(kind, new):
        return 0.0
    WRn, WRp = _p(params, "WR_n"), _p(params, "WR_p")
    if kind == "NOT":
        if output(kind, new) == 0:
            return r_on(params, "n", FO * WRn) * C
        return r_on(params, "p", FO * WRp) * C
    if kind == "NAND2":
        cs = _p(params, "C_nstack")
        if output(kind, new) == 0:  # both series nMOS conduct
            extra = cs if tuple(old) == (1, 0) else 0.0
            return 2 * r_on(params, "n", FO * WRn) * (C + extra)
        on = [i for i in (0, 1) if new[i] == 0]
        r = r_on(params, "p", FO * WRp) / len(on)  # conducting parallel pMOS
        extra = cs if tuple(new) == (1, 0) else 0.0
        return r * (C + extra)
    cs = _p(params, "C_pstack")
    if output(kind, new) == 1:  # NOR2: both series pMOS conduct
        extra = cs if tuple(old) == (0, 1) else 0.0
        return 2 * r_on(params, "p", FO * WRp) * (C + extra)
    on = [i for i in (0, 1) if new[i] == 1]
    extra = cs if tuple(new) == (0, 1) else 0.0
    return r_on(params, "n", FO * WRn) / len(on) * (C + extra)


def nand_table_tau(old, new, C, params, FO: int = 1) -> float:
    """The six rows of the NAND2 propagation-delay table, written out."""
    Rn, Rp = r_on(params, "n"), r_on(params, "p")
    WRn, WRp, Cs = _p(params, "WR_n"), _p(params, "WR_p"), _p(params, "C_nstack")
    rows = {
        ("01", "11"): 2 * Rn * C / (FO * WRn),
        ("10", "11"): 2 * Rn * (C + Cs) / (FO * WRn),
        ("00", "11"): 2 * Rn * C / (FO * WRn),
        ("11", "01"): Rp * C / (FO * WRp),
        ("11", "00"): Rp * C / (2 * FO * WRp),
        ("11", "10"): Rp * (C + Cs) / (FO * WRp),
    }
    return rows[(old, new)]


# ---------------------------------------------------------- capacitances

def c_gate(params, pol: str, FO: int = 1) -> float:
    L = _p(params, f"L_{pol}")
    return FO * _p(params, f"WR_{pol}") * (_p(params, "C_GSO") + _p(params, "C_GDO")
                                           + _p(params, f"W_{pol}min") * L * _p(params, "C_ox"))


def c_pin(params, FO: int = 1) -> float:
    return c_gate(params, "p", FO) + c_gate(params, "n", FO)


DIFFUSIONS = {"NAND2": (2, 1), "NOR2": (1, 2), "NOT": (1, 1)}


def c_diff(params, kind: str, FO: int = 1) -> float:
    cd = _p(params, "AS") * _p(params, "C_jbd") + _p(params, "PS") * _p(params, "C_jbsdw")
    k_p, k_n = DIFFUSIONS[kind]
    return FO * cd * (k_p * _p(params, "WR_p") * _p(params, "W_pmin")
                      + k_n * _p(params, "WR_n") * _p(params, "W_nmin"))


def fanouts(circuit, base=None) -> dict[str, int]:
    """Gate sizing: max(1, number of input pins reading the gate's output).

    With ``base`` (the design before an intrusion) sizes come from the base
    design and added gates are minimum size: a Trojan does not resize its host.
    """
    ref = base or circuit
    pins: dict[str, int] = {}
    for g in ref.gates.values():
        for net in g.inputs:
            pins[net] = pins.get(net, 0) + 1
    return {g.name: max(1, pins.get(ref.gates[g.name].output, 0)) if g.name in ref.gates else 1
            for g in circuit.gates.values()}


def net_load(circuit, net: str, params, fo: dict) -> float:
    total = 0.0
    for g in circuit.gates.values():
        for i in g.inputs:
            if i != net:
                continue
            total += 2 * c_pin(params, 1) if g.kind == "DFF" else c_pin(params, fo[g.name])
    return total


def dff_cell(params, FO: int, q_load: float):
    """Hold-phase model of the gated-latch flip-flop cell (CLK low), derived
    by walking its five gates: leakage per (D, Q) and toggle energies."""
    V2f = _p(params, "V_dd") ** 2 * _p(params, "f")
    fo_q = FO + 1  # Q feeds the external sinks and the cross-coupled NAND
    leak = {}
    for d, q in product((0, 1), repeat=2):
        dn, s, r, qn = 1 - d, 1, 1, 1 - q
        leak[(d, q)] = (topology_leakage("NOT", (d,), params, 1)
                        + topology_leakage("NAND2", (d, 0), params, 1)
                        + topology_leakage("NAND2", (dn, 0), params, 1)
                        + topology_leakage("NAND2", (s, qn), params, fo_q)
                        + topology_leakage("NAND2", (r, q), params, 1))
    c_q = q_load + c_pin(params, 1) + c_diff(params, "NAND2", fo_q)
    c_qn = c_pin(params, fo_q) + c_diff(params, "NAND2", 1)
    c_dn = c_pin(params, 1) + c_diff(params, "NOT", 1)
    return leak, (c_q + c_qn) * V2f, c_dn * V2f


class MetricOracle:
    """Per-transition DP, LP and path delays from first principles."""

    def __init__(self, circuit, params, paths=(), base=None):
        self.c = circuit
        self.params = params
        self.paths = [tuple(p.gates) if hasattr(p, "gates") else tuple(p) for p in paths]
        self.fo = fanouts(circuit, base)
        self.V2f = _p(params, "V_dd") ** 2 * _p(params, "f")
        self.C = {}
        self.dff = {}
        for g in circuit.gates.values():
            if g.kind in ("TIE0", "TIE1"):
                continue
            load = net_load(circuit, g.output, params, self.fo)
            if g.kind == "DFF":
                self.dff[g.name] = dff_cell(params, self.fo[g.name], load)
            else:
                self.C[g.name] = load + c_diff(params, g.kind, self.fo[g.name])

    def gate_leak(self, g, vals) -> float:
        if g.kind in ("TIE0", "TIE1"):
            return 0.0
        if g.kind == "DFF":
            return self.dff[g.name][0][(int(vals[g.inputs[0]]), int(vals[g.output]))]
        return topology_leakage(g.kind, [int(vals[i]) for i in g.inputs], self.params, self.fo[g.name])

    def gate_delay(self, g, old, new) -> float:
        a = [int(old[i]) for i in g.inputs]
        b = [int(new[i]) for i in g.inputs]
        return LN2 * tau(g.kind, a, b, self.C[g.name], self.params, self.fo[g.name])

    def transition(self, s: int, x: int, x2: int):
        c = self.c
        old = evaluate(c, state_dict(c, s), input_dict(c, x))
        s2 = next_state(c, old)
        new = evaluate(c, state_dict(c, s2), input_dict(c, x2))
        DP = LP = 0.0
        for g in c.gates.values():
            if g.kind in ("TIE0", "TIE1"):
                continue
            LP += self.gate_leak(g, new)
            if g.kind == "DFF":
                _, q_coef, d_coef = self.dff[g.name]
                DP += q_coef * (old[g.output] != new[g.output])
                DP += d_coef * (old[g.inputs[0]] != new[g.inputs[0]])
            elif old[g.output] != new[g.output]:
                DP += self.C[g.name] * self.V2f
        D = tuple(sum(self.gate_delay(c.gates[n], old, new) for n in p) for p in self.paths)
        return s2, DP, LP, D

    def walk(self, sequence, s: int = 0, x: int = 0):
        """(s, x, x2, DP, LP, D) per step of an input sequence from (s, x)."""
        out = []
        for x2 in sequence:
            s2, DP, LP, D = self.transition(s, x, x2)
            out.append((s, x, x2, DP, LP, D))
            s, x = s2, x2
        return out

    # worst cases over wiring-feasible states, for envelope checks
    def _feasible(self, g):
        tie = {}
        for i, net in enumerate(g.inputs):
            drv = next((h for h in self.c.gates.values() if h.output == net), None)
            if drv is not None and drv.kind in ("TIE0", "TIE1"):
                tie[i] = int(drv.kind == "TIE1")
        for st in product((0, 1), repeat=len(g.inputs)):
            if any(st[i] != v for i, v in tie.items()):
                continue
            if any(g.inputs[a] == g.inputs[b] and st[a] != st[b]
                   for a in range(len(st)) for b in range(a)):
                continue
            yield st

    def worst(self, g):
        """(dp_max, lp_max, lp_min, delay_max) of one gate at these parameters."""
        if g.kind == "DFF":
            leak, qc, dc = self.dff[g.name]
            return qc + dc, max(leak.values()), min(leak.values()), 0.0
        states = list(self._feasible(g))
        lps = [topology_leakage(g.kind, st, self.params, self.fo[g.name]) for st in states]
        delays = [LN2 * tau(g.kind, a, b, self.C[g.name], self.params, self.fo[g.name])
                  for a in states for b in states]
        return self.C[g.name] * self.V2f, max(lps), min(lps), max(delays)


def brute_envelope(circuit, samples, paths=()):
    """(DP_max, LP_max, LP_min, D_max per path) by per-gate max/min over samples."""
    per = {}
    for p in samples:
        o = MetricOracle(circuit, p)
        for g in circuit.gates.values():
            if g.kind in ("TIE0", "TIE1"):
                continue
            w = o.worst(g)
            cur = per.get(g.name)
            per[g.name] = w if cur is None else (max(cur[0], w[0]), max(cur[1], w[1]),
                                                 min(cur[2], w[2]), max(cur[3], w[3]))
    DP = sum(v[0] for v in per.values())
    LPmax = sum(v[1] for v in per.values())
    LPmin = sum(v[2] for v in per.values())
    D = tuple(sum(per[n][3] for n in (p.gates if hasattr(p, "gates") else p)) for p in paths)
    return DP, LPmax, LPmin, D


def sequences(n_inputs: int, bound: int):
    """Every input sequence of length 1..bound, shortest first, then lexicographic."""
    for t in range(1, bound + 1):
        yield from product(range(1 << n_inputs), repeat=t)


def violating_patterns(circuit, params, paths, bound, predicate, reset_state=0, reset_input=0, base=None):
    """Set of (s, x, x2) patterns whose labels satisfy ``predicate(DP, LP, D)``,
    found by walking every input sequence up to ``bound`` from reset."""
    o = MetricOracle(circuit, params, paths, base)
    found = set()
    memo = {}
    for seq in sequences(len(circuit.inputs), bound):
        s, x = reset_state, reset_input
        for x2 in seq[:-1]:
            s, x = next_state(circuit, evaluate(circuit, state_dict(circuit, s), input_dict(circuit, x))), x2
        key = (s, x, seq[-1])
        if key not in memo:
            _, DP, LP, D = o.transition(*key)
            memo[key] = predicate(DP, LP, D)
        if memo[key]:
            found.add(key)
    return found


def static_leakage(circuit, params, base=None) -> float:
    """Sum over gates of the worst wiring-feasible state leakage."""
    fo = fanouts(circuit, base)
    o = MetricOracle.__new__(MetricOracle)
    o.c = circuit
    total = 0.0
    for g in circuit.gates.values():
        if g.kind in ("TIE0", "TIE1"):
            continue
        if g.kind == "DFF":
            total += max(dff_cell(params, fo[g.name], 0.0)[0].values())
        else:
            total += max(topology_leakage(g.kind, st, params, fo[g.name]) for st in o._feasible(g))
    return total
