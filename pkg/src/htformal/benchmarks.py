"""Built-in benchmark circuits and a seeded ISCAS89-style circuit generator."""

from __future__ import annotations

import random
from importlib import resources

from .netlist import DFF, Circuit, Gate, decompose_universal, dff_cell_circuit, parse_bench

# Interface sizes (inputs, outputs, flip-flops, generic gates) of ISCAS89 circuits.
ISCAS_SHAPES = {
    "s298": (3, 6, 14, 119),
    "s344": (9, 11, 15, 160),
    "s349": (9, 11, 15, 161),
}


def s27() -> Circuit:
    text = resources.files("htformal.data").joinpath("s27.bench").read_text()
    return parse_bench(text, "s27")


def shift_register(width: int = 8) -> Circuit:
    """Loadable serial shift register: Q_i <- EN ? Q_{i-1} : Q_i."""
    gates = [Gate("nEN", "NOT", ("EN",), "nEN")]
    prev = "SI"
    for i in range(width):
        q = f"Q{i}"
        gates += [
            Gate(f"A{i}", "AND", ("EN", prev), f"A{i}"),
            Gate(f"H{i}", "AND", ("nEN", q), f"H{i}"),
            Gate(f"D{i}", "OR", (f"A{i}", f"H{i}"), f"D{i}"),
            Gate(q, DFF, (f"D{i}",), q),
        ]
        prev = q
    return Circuit.build(f"shift{width}", ("SI", "EN"), (prev,), gates)


def counter(width: int = 8) -> Circuit:
    """Synchronous up-counter with enable: Q_i <- Q_i xor (EN and Q_0..Q_{i-1})."""
    gates = []
    carry = "EN"
    for i in range(width):
        q = f"Q{i}"
        gates.append(Gate(f"T{i}", "XOR", (q, carry), f"T{i}"))
        gates.append(Gate(q, DFF, (f"T{i}",), q))
        if i < width - 1:
            gates.append(Gate(f"C{i}", "AND", (carry, q), f"C{i}"))
            carry = f"C{i}"
    return Circuit.build(f"counter{width}", ("EN",), tuple(f"Q{i}" for i in range(width)), gates)


def synthetic_iscas(n_inputs: int, n_outputs: int, n_dff: int, n_gates: int, seed: int = 0,
                    name: str | None = None) -> Circuit:
    """Random sequential circuit with an ISCAS89-like interface and gate mix.

    Gates draw inputs mostly from recently created nets (local cones) and
    preferentially from nets nobody reads yet, so little logic dangles.
    Whatever is still unread at the end feeds flip-flops and outputs; any
    surplus is merged through extra NAND gates. Deterministic in ``seed``.
    """
    if min(n_inputs, n_outputs, n_gates) < 1 or n_dff < 0:
        raise ValueError("need at least one input, output and gate")
    rng = random.Random(seed)
    inputs = [f"I{i}" for i in range(n_inputs)]
    qs = [f"Q{i}" for i in range(n_dff)]
    pool = inputs + qs
    unread = list(pool)
    gates: list[Gate] = []
    kinds = ["NOT"] * 4 + ["AND"] * 4 + ["NAND"] * 2 + ["OR"] * 2 + ["NOR"] * 3
    slots = n_dff + n_outputs

    def pick(exclude: set[str]) -> str:
        if unread and (len(unread) > slots // 2 or rng.random() < 0.3):
            cands = [n for n in unread if n not in exclude]
            if cands:
                return cands[0] if rng.random() < 0.5 else rng.choice(cands)
        window = pool[-16:] if rng.random() < 0.7 else pool
        cands = [n for n in window if n not in exclude] or [n for n in pool if n not in exclude]
        return rng.choice(cands)

    for j in range(n_gates):
        kind = rng.choice(kinds)
        arity = 1 if kind == "NOT" else rng.choice((2, 2, 2, 3, 4))
        arity = min(arity, len(pool))
        ins: list[str] = []
        for _ in range(arity):
            ins.append(pick(set(ins)))
        out = f"G{j}"
        gates.append(Gate(out, kind, tuple(ins), out))
        for n in ins:
            if n in unread:
                unread.remove(n)
        pool.append(out)
        unread.append(out)

    produced = [n for n in pool if n not in inputs and n not in qs]
    sinks = [n for n in unread if n not in inputs and n not in qs]
    extra = 0
    while len(sinks) > slots:
        a, b = sinks.pop(0), sinks.pop(0)
        out = f"M{extra}"
        extra += 1
        gates.append(Gate(out, "NAND", (a, b), out))
        sinks.append(out)
    rest = [n for n in reversed(produced) if n not in sinks]
    d_inputs = (sinks[:n_dff] + rest)[:n_dff]
    used = set(d_inputs)
    po_cands = sinks[n_dff:] + [n for n in rest if n not in used]
    outputs = po_cands[:n_outputs]
    for q, d in zip(qs, d_inputs):
        gates.append(Gate(q, DFF, (d,), q))
    return Circuit.build(name or f"synth_{n_inputs}_{n_outputs}_{n_dff}_{n_gates}_{seed}",
                         inputs, outputs, gates)


def iscas_like(shape: str, seed: int = 0) -> Circuit:
    """Synthetic stand-in with the interface of the named ISCAS89 circuit."""
    pi, po, ff, ng = ISCAS_SHAPES[shape]
    return synthetic_iscas(pi, po, ff, ng, seed, name=f"{shape}-scale")


def random_combinational(n_gates: int = 20, n_inputs: int = 5, n_outputs: int = 3, seed: int = 0) -> Circuit:
    return synthetic_iscas(n_inputs, n_outputs, 0, n_gates, seed, name=f"rand{n_gates}_{seed}")


def builtin(name: str) -> Circuit:
    """Look up a built-in benchmark by name (``s27``, ``dff``, ``shift8``,
    ``counter8``, ``s298-scale``, ``s344-scale``, ``s349-scale``)."""
    if name == "s27":
        return s27()
    if name == "dff":
        return dff_cell_circuit()
    if name.startswith("shift"):
        return shift_register(int(name[5:] or 8))
    if name.startswith("counter"):
        return counter(int(name[7:] or 8))
    if name.endswith("-scale") and name[:-6] in ISCAS_SHAPES:
        return iscas_like(name[:-6])
    raise KeyError(f"unknown built-in benchmark {name!r}")


BUILTINS = ("dff", "s27", "shift8", "counter8", "s298-scale", "s344-scale", "s349-scale")


def universal(name: str) -> Circuit:
    c = builtin(name)
    return c if c.is_universal() else decompose_universal(c)
