"""Shared generators for tests."""

from __future__ import annotations

import random

from htformal.netlist import Circuit, Gate
from htformal.techmodel import TechnologyParams


def random_params(rng: random.Random, base: TechnologyParams) -> TechnologyParams:
    """Independent +-30% perturbation of every parameter, kept conducting."""
    while True:
        vals = {k: v * rng.uniform(0.7, 1.3) for k, v in base.as_dict().items()}
        if vals["V_thn"] < 0.8 * vals["V_dd"] and vals["V_thp"] < 0.8 * vals["V_dd"]:
            return TechnologyParams(**vals)


def random_sequential(seed: int, n_inputs: int = 4, n_dff: int = 3, n_gates: int = 14) -> Circuit:
    """Small random sequential circuit in universal form."""
    rng = random.Random(seed)
    pis = [f"i{k}" for k in range(n_inputs)]
    qs = [f"q{k}" for k in range(n_dff)]
    avail = pis + qs
    gates = []
    for k in range(n_gates):
        kind = rng.choice(["NAND2", "NOR2", "NOT"])
        ins = (rng.choice(avail),) if kind == "NOT" else (rng.choice(avail), rng.choice(avail))
        gates.append(Gate(f"g{k}", kind, ins, f"n{k}"))
        avail.append(f"n{k}")
    internal = [f"n{k}" for k in range(n_gates)]
    for k, q in enumerate(qs):
        gates.append(Gate(f"ff{k}", "DFF", (rng.choice(internal),), q))
    outs = sorted(set(rng.sample(internal, 2)))
    return Circuit.build(f"rand{seed}", pis, outs, gates)


GENERIC_POOL = ("AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUF")


def random_generic(seed: int, n_inputs: int = 4, n_dff: int = 2, n_gates: int = 12) -> Circuit:
    """Random sequential circuit with generic multi-input gates."""
    rng = random.Random(seed)
    pis = [f"i{k}" for k in range(n_inputs)]
    qs = [f"q{k}" for k in range(n_dff)]
    avail = pis + qs
    gates = []
    for k in range(n_gates):
        kind = rng.choice(GENERIC_POOL)
        arity = 1 if kind in ("NOT", "BUF") else rng.randint(2, 4)
        gates.append(Gate(f"g{k}", kind, tuple(rng.choice(avail) for _ in range(arity)), f"n{k}"))
        avail.append(f"n{k}")
    internal = [f"n{k}" for k in range(n_gates)]
    for k, q in enumerate(qs):
        gates.append(Gate(f"ff{k}", "DFF", (rng.choice(internal),), q))
    outs = sorted(set(rng.sample(internal, 3)))
    return Circuit.build(f"gen{seed}", pis, outs, gates)


# One "PASS|FAIL <criterion> <detail>" line per acceptance check, shown in the terminal summary.
ACCEPTANCE: list[str] = []


def verdict(name: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok
