from __future__ import annotations

import random

import numpy as np
import pytest

import oracles
from helpers import random_sequential
from htformal.benchmarks import random_combinational
from htformal.intrusion import (
    ATTACH_SINGLE, PARALLEL, SERIES, IntrusionError, IntrusionSpec, dumps_specs, effects_csv,
    inject, lift_paths, location_classes, location_impact, loads_specs, mean_leakage,
    min_detectable_size, resolve_target, static_metrics, sweep,
)
from htformal.logicsim import exhaustive_io
from htformal.netlist import CP, FEEDBACK, INPUT, NCP, OUTPUT, decompose_universal
from htformal.sidechannel import GateTables
from htformal.statespace import build
from htformal.techmodel import pin_capacitance


def equivalent(a, b) -> bool:
    oa, na = exhaustive_io(a)
    ob, nb = exhaustive_io(b)
    return np.array_equal(oa, ob) and np.array_equal(na, nb)


def oracle_equivalent(a, b) -> bool:
    """Outputs and next state of every (state, input) pair, dictionary simulator."""
    for s in range(1 << len(a.flipflops)):
        for x in range(1 << len(a.inputs)):
            va = oracles.evaluate(a, oracles.state_dict(a, s), oracles.input_dict(a, x))
            vb = oracles.evaluate(b, oracles.state_dict(b, s), oracles.input_dict(b, x))
            if [va[o] for o in a.outputs] != [vb[o] for o in b.outputs]:
                return False
            if oracles.next_state(a, va) != oracles.next_state(b, vb):
                return False
    return True


def c_total(circuit, params, net):
    t = GateTables(circuit, params)
    return float(t.c_total[t.index[circuit.driver_of(net).name], 0])


# -------------------------------------------------------------- structure

def test_spec_validation():
    with pytest.raises(ValueError):
        IntrusionSpec("x", size=0)
    with pytest.raises(ValueError):
        IntrusionSpec("x", mode="DIAGONAL")
    with pytest.raises(ValueError):
        IntrusionSpec("x", gate_kind="XOR")


def test_parallel_c_int(s27, params):
    ic = inject(s27, IntrusionSpec("G11", PARALLEL, 1), params)
    assert ic.c_int["G11"] == pytest.approx(2 * (oracles.c_gate(params, "p") + oracles.c_gate(params, "n")), rel=1e-14)
    single = inject(s27, IntrusionSpec("G11", PARALLEL, 1, attach=ATTACH_SINGLE), params)
    assert single.c_int["G11"] == pytest.approx(oracles.c_pin(params), rel=1e-14)
    five = inject(s27, IntrusionSpec("G11", PARALLEL, 5), params)
    assert five.c_int["G11"] == pytest.approx(10 * pin_capacitance(params), rel=1e-14)


def test_parallel_adds_c_int_to_host(s27, params):
    ic = inject(s27, IntrusionSpec("G11", PARALLEL, 3), params)
    assert c_total(ic.circuit, params, "G11") - c_total(s27, params, "G11") == pytest.approx(ic.c_int["G11"], rel=1e-12)
    assert len(ic.trojan_gates) == 3
    assert all(ic.host_of[g] == "G11" for g in ic.trojan_gates)


def test_host_keeps_sizing(s27, params):
    ic = inject(s27, IntrusionSpec("G11", PARALLEL, 4), params)
    assert ic.circuit.gates["G11"].fanout_count == s27.gates["G11"].fanout_count
    assert all(ic.circuit.gates[g].fanout_count == 1 for g in ic.trojan_gates)


def test_base_untouched(s27, params):
    before = {n: g for n, g in s27.gates.items()}
    inject(s27, IntrusionSpec("G11", SERIES, 4), params)
    assert dict(s27.gates) == before


def test_series_on_primary_input_rejected(s27, params):
    with pytest.raises(IntrusionError):
        inject(s27, IntrusionSpec("G0", SERIES, 2), params)


def test_unresolvable_class(params):
    c = decompose_universal(random_combinational(seed=1))
    with pytest.raises(IntrusionError, match="no FEEDBACK nets"):
        inject(c, IntrusionSpec(FEEDBACK), params)


def test_unknown_net(s27, params):
    with pytest.raises(IntrusionError):
        inject(s27, IntrusionSpec("nope"), params)


def test_class_placement_seeded(s27, params):
    classes = location_classes(s27, params)
    picks = {resolve_target(s27, IntrusionSpec(NCP, seed=k), params) for k in range(20)}
    assert picks <= {n for n, k in classes.items() if k == NCP}
    assert len(picks) > 1
    assert resolve_target(s27, IntrusionSpec(CP, seed=3), params) == resolve_target(s27, IntrusionSpec(CP, seed=3), params)


# ------------------------------------------------------- function preserved

@pytest.mark.parametrize("size", [1, 2, 3, 7])
@pytest.mark.parametrize("net", ["G0", "G8", "G11", "G17", "G5"])
def test_parallel_preserves_function(s27, params, net, size):
    ic = inject(s27, IntrusionSpec(net, PARALLEL, size), params)
    assert oracle_equivalent(s27, ic.circuit)


@pytest.mark.parametrize("kind", ["NAND2", "NOR2", "NOT"])
@pytest.mark.parametrize("size", [1, 2, 3, 4])
@pytest.mark.parametrize("net", ["G8", "G11", "G17", "G5"])
def test_series_preserves_function(s27, params, net, size, kind):
    ic = inject(s27, IntrusionSpec(net, SERIES, size, gate_kind=kind), params)
    assert oracle_equivalent(s27, ic.circuit)
    assert len(ic.trojan_gates) == size


@pytest.mark.parametrize("seed", range(30))
def test_random_injections_preserve_function(seed, params):
    rng = random.Random(seed)
    c = random_sequential(seed, n_inputs=rng.randint(2, 5), n_dff=rng.randint(0, 3))
    internal = [n for n in c.nets if n not in c.inputs]
    specs = [IntrusionSpec(rng.choice(list(c.nets)), PARALLEL, rng.randint(1, 4),
                           rng.choice(["NAND2", "NOR2", "NOT"]), attach=rng.choice(["both", "single"])),
             IntrusionSpec(rng.choice(internal), SERIES, rng.randint(1, 4), rng.choice(["NAND2", "NOR2", "NOT"]))]
    ic = inject(c, specs, params)
    assert equivalent(c, ic.circuit)
    assert oracle_equivalent(c, ic.circuit)


def test_series_slows_path(s27, params):
    sys = build(s27, params)
    k = next(i for i, p in enumerate(sys.paths) if "G11" in p.gates)
    ic = inject(s27, IntrusionSpec("G11", SERIES, 2), params)
    assert oracle_equivalent(s27, ic.circuit)
    lifted = lift_paths(sys.paths, ic)
    assert len(lifted[k].gates) == len(sys.paths[k].gates) + 2
    clean = GateTables(s27, params).worst_delays(0)
    dirty = GateTables(ic.circuit, params).worst_delays(0)
    assert sum(dirty[g] for g in lifted[k].gates) > sum(clean[g] for g in sys.paths[k].gates)
    assert static_metrics(ic.circuit, params)["DELAY"][0] > static_metrics(s27, params)["DELAY"][0]


def test_payload_corrupts_only_when_triggered(s27, params):
    ic = inject(s27, IntrusionSpec("G11", SERIES, 4, payload="G3"), params)
    assert len(ic.trojan_gates) == 4
    flipped = False
    for s in range(8):
        for x in range(16):
            vb = oracles.evaluate(s27, oracles.state_dict(s27, s), oracles.input_dict(s27, x))
            vi = oracles.evaluate(ic.circuit, oracles.state_dict(s27, s), oracles.input_dict(s27, x))
            if not vb["G3"]:
                assert vi["G11"] == vb["G11"]
            else:
                assert vi["G11"] != vi["G11__ht0"]
                flipped |= vi["G17"] != vb["G17"]
    assert flipped


# ------------------------------------------------------------ side channel

@pytest.mark.parametrize("seed", range(10))
def test_parallel_monotone(seed, params):
    c = random_sequential(seed)
    rng = random.Random(seed)
    net = rng.choice([n for n in c.nets if c.driver_of(n) is not None and c.driver_of(n).kind != "DFF"])
    ic = inject(c, IntrusionSpec(net, PARALLEL, rng.randint(1, 3)), params)
    assert c_total(ic.circuit, params, net) > c_total(c, params, net)
    assert static_metrics(ic.circuit, params)["LP"][0] > static_metrics(c, params)["LP"][0]
    drv = c.driver_of(net).name
    before = GateTables(c, params).worst_delays(0)[drv]
    after = GateTables(ic.circuit, params).worst_delays(0)[drv]
    assert after > before


def test_c_int_commutes(s27, params):
    a = IntrusionSpec("G11", PARALLEL, 3)
    b = IntrusionSpec("G9", SERIES, 2, gate_kind="NOR2")
    ab = inject(inject(s27, a, params), b, params)
    ba = inject(inject(s27, b, params), a, params)
    assert dict(ab.c_int) == dict(ba.c_int)
    assert equivalent(ab.circuit, ba.circuit)


def test_sweep_rows(s27, params, samples):
    rows = sweep(s27, CP, PARALLEL, [0, 1, 2, 4, 8, 200], params, samples[1:])
    assert rows[0].dDP == rows[0].dLP == rows[0].dDELAY == 0.0
    assert all(rows[0].overlap.values())
    lps = [r.dLP for r in rows]
    assert all(b > a for a, b in zip(lps, lps[1:]))
    assert rows[-1].overlap["LP"] is False
    text = effects_csv(rows)
    assert text.splitlines()[0].startswith("size,net,dDP_w")
    assert len(text.splitlines()) == 7


def test_sweep_matches_oracle_leakage(s27, params):
    rows = sweep(s27, NCP, PARALLEL, [3], params, [])
    ic = inject(s27, IntrusionSpec(rows[0].net, PARALLEL, 3), params)
    want = oracles.static_leakage(ic.circuit, params, s27) - oracles.static_leakage(s27, params)
    assert rows[0].dLP == pytest.approx(want, rel=1e-9)


# ---------------------------------------------------------- detectability

def test_degenerate_envelope_detects_one_gate(s27, params):
    for metric in ("DP", "LP"):
        assert min_detectable_size(s27, CP, metric, params, [], 10) == 1


def test_min_detectable_matches_linear_scan(s27, params, samples):
    got = min_detectable_size(s27, CP, "LP", params, samples[1:], 400)
    vals = [oracles.static_leakage(s27, p) for p in samples]
    lo, hi = min(vals), max(vals)
    net = resolve_target(s27, IntrusionSpec(CP), params)
    want = None
    for size in range(1, 401):
        v = oracles.static_leakage(inject(s27, IntrusionSpec(net, PARALLEL, size), params).circuit, params, s27)
        if not lo <= v <= hi:
            want = size
            break
    assert got == want == 171


def test_min_detectable_not_found(s27, params, samples):
    assert min_detectable_size(s27, CP, "LP", params, samples[1:], 50) is None
    with pytest.raises(ValueError):
        min_detectable_size(s27, CP, "LP", params, samples[1:], 0)


def test_min_detectable_monotone_in_sigma(s27, params):
    from htformal.techmodel import default_variation, sample_variations
    spec = default_variation(params)
    prev = 0
    for factor in (0.0, 0.5, 1.0, 2.0):
        found = min_detectable_size(s27, CP, "DP", params, sample_variations(spec.with_sigma_scaled(factor)), 500)
        assert found is not None and found >= prev
        prev = found


# ------------------------------------------------------- location impact

def test_mean_leakage_matches_oracle(s27, params):
    trace = np.random.default_rng(0).integers(0, 2, size=(16, 4)).astype(bool)
    o = oracles.MetricOracle(s27, params)
    s, total = 0, 0.0
    for row in trace:
        x = sum(int(b) << j for j, b in enumerate(row))
        v = oracles.evaluate(s27, oracles.state_dict(s27, s), oracles.input_dict(s27, x))
        total += sum(o.gate_leak(g, v) for g in s27.gates.values())
        s = oracles.next_state(s27, v)
    assert mean_leakage(s27, params, trace) == pytest.approx(total / len(trace), rel=1e-12)


def test_location_impact_positive(s27, params):
    impact = location_impact(s27, params, cycles=32)
    assert set(impact) == {INPUT, OUTPUT, CP, NCP}
    assert all(v > 0 for v in impact.values())
    assert location_impact(s27, params, cycles=32) == impact


# -------------------------------------------------------------- spec files

def test_spec_file_round_trip():
    specs = [IntrusionSpec("G11", PARALLEL, 3), IntrusionSpec(CP, SERIES, 2, "NOR2", 7),
             IntrusionSpec("G9", PARALLEL, 1, attach=ATTACH_SINGLE), IntrusionSpec("G11", SERIES, 5, payload="G3")]
    assert loads_specs(dumps_specs(specs)) == specs


def test_spec_file_errors():
    with pytest.raises(ValueError, match="line 2"):
        loads_specs("G1 PARALLEL 1\nG2 PARALLEL\n")
    with pytest.raises(ValueError, match="line 1"):
        loads_specs("G1 PARALLEL 1 NAND2 0 colour=red\n")
    with pytest.raises(ValueError):
        loads_specs("G1 PARALLEL 0\n")
