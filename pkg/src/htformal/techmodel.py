"""Transistor-level technology parameters and process-variation sampling.

All quantities are SI. Every formula is written with numpy arithmetic so a
:class:`TechnologyParams` whose fields are arrays (one entry per variation
sample, see :func:`stack_params`) evaluates a whole sample set at once.

Two conventions keep the textbook formulas dimensionally sound:

* ``C_GSO``/``C_GDO`` are the overlap capacitances of a minimum-width device
  (farads), so they add directly to ``W_min * L * C_ox``.
* ``AS``/``PS`` are the drain area and sidewall perimeter *per unit width*
  (metres and dimensionless), so ``AS*C_jbd + PS*C_jbsdw`` is a capacitance
  per width that multiplies a transistor width.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from importlib import resources
from typing import Mapping

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K
ELEMENTARY_CHARGE = 1.602176634e-19  # C

NMOS = "n"
PMOS = "p"

GAUSSIAN = "gaussian"
UNIFORM = "uniform"

UNITS = {
    "V_dd": "V", "f": "Hz", "L_n": "m", "L_p": "m", "W_nmin": "m", "W_pmin": "m",
    "WR_n": "1", "WR_p": "1", "C_ox": "F/m^2", "C_GSO": "F", "C_GDO": "F",
    "mu_n": "m^2/(V*s)", "mu_p": "m^2/(V*s)", "V_thn": "V", "V_thp": "V",
    "n_n": "1", "n_p": "1", "sigma_n": "1", "sigma_p": "1", "T": "K",
    "C_jbd": "F/m^2", "C_jbsdw": "F/m", "AS": "m (per unit width)",
    "PS": "1 (per unit width)", "C_nstack": "F", "C_pstack": "F",
}

# Operating conditions; everything else is a process parameter.
OPERATING = ("V_dd", "f", "T")


class ParameterError(ValueError):
    pass


class NotConducting(ParameterError):
    pass


@dataclass(frozen=True)
class TechnologyParams:
    V_dd: float
    f: float
    L_n: float
    L_p: float
    W_nmin: float
    W_pmin: float
    WR_n: float
    WR_p: float
    C_ox: float
    C_GSO: float
    C_GDO: float
    mu_n: float
    mu_p: float
    V_thn: float
    V_thp: float
    n_n: float
    n_p: float
    sigma_n: float
    sigma_p: float
    T: float
    C_jbd: float
    C_jbsdw: float
    AS: float
    PS: float
    C_nstack: float
    C_pstack: float

    def __post_init__(self):
        for fld in fields(self):
            if not np.all(np.asarray(getattr(self, fld.name)) > 0):
                raise ParameterError(f"{fld.name} must be strictly positive")
        if not np.all(np.asarray(self.V_thn) < np.asarray(self.V_dd)):
            raise ParameterError("V_thn must be below V_dd")
        if not np.all(np.asarray(self.V_thp) < np.asarray(self.V_dd)):
            raise ParameterError("V_thp must be below V_dd")

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.names()}

    def replace(self, **changes) -> "TechnologyParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def default(cls) -> "TechnologyParams":
        return loads_params(resources.files("htformal.data").joinpath("tech45.txt").read_text())

    @property
    def n_samples(self) -> int:
        return int(np.size(self.V_dd))


def stack_params(samples) -> TechnologyParams:
    """Column-stack a sequence of parameter sets into array-valued fields."""
    samples = list(samples)
    if not samples:
        raise ParameterError("empty sample set")
    return TechnologyParams(**{
        name: np.array([getattr(s, name) for s in samples], dtype=float)
        for name in TechnologyParams.names()
    })


# ---------------------------------------------------------------- file format

def dumps_params(params: TechnologyParams) -> str:
    lines = ["# technology parameters (SI units)"]
    for name in params.names():
        lines.append(f"{name} = {float(getattr(params, name))!r} # {UNITS[name]}")
    return "\n".join(lines) + "\n"


def _kv_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'symbol = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        yield lineno, key, value


def loads_params(text: str) -> TechnologyParams:
    values: dict[str, float] = {}
    for lineno, key, value in _kv_lines(text):
        if key not in UNITS:
            raise ParameterError(f"line {lineno}: unknown parameter {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ParameterError(f"line {lineno}: bad number {value!r}") from None
    missing = set(UNITS) - set(values)
    if missing:
        raise ParameterError(f"missing parameters: {', '.join(sorted(missing))}")
    return TechnologyParams(**values)


# ------------------------------------------------------------------ formulas

def thermal_voltage(params: TechnologyParams):
    return BOLTZMANN * params.T / ELEMENTARY_CHARGE


def _device(params: TechnologyParams, polarity: str):
    if polarity == NMOS:
        return params.L_n, params.W_nmin, params.WR_n, params.mu_n, params.V_thn, params.n_n, params.sigma_n
    if polarity == PMOS:
        return params.L_p, params.W_pmin, params.WR_p, params.mu_p, params.V_thp, params.n_p, params.sigma_p
    raise ParameterError(f"unknown polarity {polarity!r}")


def gate_capacitance(params: TechnologyParams, polarity: str, FO=1, WR=None):
    """Gate capacitance of one transistor of a gate sized by fanout ``FO``."""
    L, W_min, WR_default, *_ = _device(params, polarity)
    WR = WR_default if WR is None else WR
    return FO * WR * (params.C_GSO + params.C_GDO + W_min * L * params.C_ox)


def pin_capacitance(params: TechnologyParams, FO=1):
    """One logic input pin: the pMOS and nMOS gate it drives."""
    return gate_capacitance(params, PMOS, FO) + gate_capacitance(params, NMOS, FO)


def min_drain_capacitance(params: TechnologyParams):
    """Junction capacitance per unit transistor width (bottom + sidewall)."""
    return params.AS * params.C_jbd + params.PS * params.C_jbsdw


# pMOS / nMOS drain diffusions touching the output node
_DIFFUSION_COUNT = {"NAND2": (2, 1), "NOR2": (1, 2), "NOT": (1, 1)}


def diffusion_capacitance(params: TechnologyParams, kind: str, FO=1):
    if kind not in _DIFFUSION_COUNT:
        raise ParameterError(f"no diffusion model for {kind}")
    n_p, n_n = _DIFFUSION_COUNT[kind]
    c = min_drain_capacitance(params)
    return (n_p * FO * params.WR_p * params.W_pmin * c
            + n_n * FO * params.WR_n * params.W_nmin * c)


def on_resistance(params: TechnologyParams, polarity: str, WR=1.0):
    """Linear-region resistance with V_gs = V_dd and W = WR * W_min."""
    L, W_min, _, mu, V_th, *_ = _device(params, polarity)
    overdrive = params.V_dd - V_th
    if np.any(np.asarray(overdrive) <= 0):
        raise NotConducting("transistor not conducting (V_dd <= V_th)")
    return L / (mu * params.C_ox * WR * W_min * overdrive)


def leakage_term(params: TechnologyParams, polarity: str):
    """Subthreshold current scale of one device without the leading 2:
    n*mu*C_ox*WR*(W_min/L)*phi_t^2*exp((sigma*V_dd - V_th)/(n*phi_t))."""
    L, W_min, WR, mu, V_th, n, sigma = _device(params, polarity)
    phi = thermal_voltage(params)
    return n * mu * params.C_ox * WR * (W_min / L) * phi ** 2 * np.exp((sigma * params.V_dd - V_th) / (n * phi))


def stack_factor(params: TechnologyParams, polarity: str):
    """Leakage reduction of two stacked off devices: 10^(-V_dd*sigma/n)."""
    *_, n, sigma = _device(params, polarity)
    return 10.0 ** (-(params.V_dd * sigma) / n)


# ----------------------------------------------------------------- variation

@dataclass(frozen=True)
class Spread:
    rel_sigma: float = 0.0
    kind: str = GAUSSIAN

    def __post_init__(self):
        if not 0.0 <= self.rel_sigma <= 0.5:
            raise ParameterError("relative deviation must be in [0, 0.5]")
        if self.kind not in (GAUSSIAN, UNIFORM):
            raise ParameterError(f"unknown distribution {self.kind!r}")


@dataclass(frozen=True)
class VariationSpec:
    nominal: TechnologyParams
    spreads: Mapping[str, Spread]
    sample_count: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ParameterError("sample_count must be >= 1")
        unknown = set(self.spreads) - set(TechnologyParams.names())
        if unknown:
            raise ParameterError(f"unknown parameters in variation spec: {sorted(unknown)}")

    @classmethod
    def uniform_sigma(cls, nominal: TechnologyParams, rel_sigma: float = 0.05, *,
                      sample_count: int = 100, seed: int = 0, kind: str = GAUSSIAN) -> "VariationSpec":
        """Same relative deviation on every process parameter; operating conditions fixed."""
        spreads = {name: Spread(0.0 if name in OPERATING else rel_sigma, kind)
                   for name in TechnologyParams.names()}
        return cls(nominal, spreads, sample_count, seed)

    def with_sigma_scaled(self, factor: float) -> "VariationSpec":
        spreads = {k: Spread(min(0.5, s.rel_sigma * factor), s.kind) for k, s in self.spreads.items()}
        return dataclasses.replace(self, spreads=spreads)


TRUNCATION = 3.0


def _draw(rng: np.random.Generator, kind: str) -> float:
    if kind == UNIFORM:
        return float(rng.uniform(-math.sqrt(3.0), math.sqrt(3.0)))
    while True:
        z = float(rng.standard_normal())
        if abs(z) <= TRUNCATION:
            return z


def draw_sample(spec: VariationSpec, index: int) -> TechnologyParams:
    """Sample ``index`` of the stream; independent of every other index."""
    nominal = spec.nominal.as_dict()
    for attempt in range(1000):
        rng = np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, index, attempt])
        values = {}
        for name in TechnologyParams.names():
            spread = spec.spreads.get(name, Spread())
            z = _draw(rng, spread.kind)
            factor = 1.0 + spread.rel_sigma * z
            while factor <= 0.0:
                factor = 1.0 + spread.rel_sigma * _draw(rng, spread.kind)
            values[name] = nominal[name] * factor
        if values["V_thn"] < values["V_dd"] and values["V_thp"] < values["V_dd"]:
            return TechnologyParams(**values)
    raise ParameterError("could not draw a conducting parameter set")


def sample_variations(spec: VariationSpec) -> list[TechnologyParams]:
    return [draw_sample(spec, i) for i in range(spec.sample_count)]


def dumps_variation(spec: VariationSpec) -> str:
    lines = ["# process variation: symbol = relative_sigma distribution",
             f"sample_count = {spec.sample_count}", f"seed = {spec.seed}"]
    for name in TechnologyParams.names():
        s = spec.spreads.get(name, Spread())
        lines.append(f"{name} = {s.rel_sigma!r} {s.kind}")
    return "\n".join(lines) + "\n"


def loads_variation(text: str, nominal: TechnologyParams) -> VariationSpec:
    spreads: dict[str, Spread] = {}
    count, seed = 100, 0
    for lineno, key, value in _kv_lines(text):
        if key == "sample_count":
            count = int(value)
        elif key == "seed":
            seed = int(value)
        elif key in UNITS:
            parts = value.split()
            try:
                sigma = float(parts[0])
            except (ValueError, IndexError):
                raise ParameterError(f"line {lineno}: bad deviation {value!r}") from None
            kind = parts[1].lower() if len(parts) > 1 else GAUSSIAN
            spreads[key] = Spread(sigma, kind)
        else:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
    return VariationSpec(nominal, spreads, count, seed)


def default_variation(nominal: TechnologyParams | None = None) -> VariationSpec:
    nominal = nominal or TechnologyParams.default()
    text = resources.files("htformal.data").joinpath("variation5.txt").read_text()
    return loads_variation(text, nominal)
