"""Network presets: 1D selective/self-sustained fields and the 2D tracker.

Weight values in the configs are mantissas as listed in the parameter sets.
The engine applies ``weight << 6``; recurrent 1D weights additionally carry
``recurrent_weight_exponent`` (Loihi's per-connection weight exponent), so
the stored mantissa is ``weight * 2**exponent``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .core import NetworkDef, NeuronParams, Synapses, poisson_spikes
from .events import BinnedInput, inject
from .topology import (InhibitionPoolSpec, KernelSpec, NetworkBuilder, PopulationLayout,
                       connect_direct_global_inhibition, connect_global_inhibition,
                       connect_lateral, connect_one_to_one, gaussian_fanout, kernel_weight)

INPUT_DRIVEN = "input_driven"
SELF_SUSTAINED = "self_sustained"


@dataclass
class Dnf1dConfig:
    n: int = 12
    regime: str = INPUT_DRIVEN
    v_threshold: int = 3000 * 64
    tau_v: int = 150
    tau_i: int = 10
    kernel_sigma: float = 1.5
    self_excitation: bool = False
    exc_weight: int = 200
    inh_weight: int = -160
    input_weight: int = 200
    input_rate: float = 60.0
    noise_rate: float = 2.0
    noise_weight: int = 200
    recurrent_weight_exponent: int = 2
    refractory: int = 0
    dt: float = 1e-3

    def __post_init__(self):
        if self.regime not in (INPUT_DRIVEN, SELF_SUSTAINED):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @classmethod
    def input_driven(cls, **kw) -> "Dnf1dConfig":
        return cls(**{"regime": INPUT_DRIVEN, "self_excitation": False,
                      "exc_weight": 200, "inh_weight": -160, **kw})

    @classmethod
    def self_sustained(cls, **kw) -> "Dnf1dConfig":
        return cls(**{"regime": SELF_SUSTAINED, "self_excitation": True,
                      "exc_weight": 150, "inh_weight": -75, **kw})

    @property
    def neuron(self) -> NeuronParams:
        return NeuronParams(self.v_threshold, self.tau_v, self.tau_i, self.refractory)

    @property
    def kernel(self) -> KernelSpec:
        scale = 2 ** self.recurrent_weight_exponent
        return KernelSpec(self.exc_weight * scale, self.kernel_sigma,
                          include_self=self.self_excitation)


@dataclass(frozen=True)
class InputBump:
    """Poisson input bump: Gaussian rate profile active on ``[start, stop)``.

    Channels whose rate falls below ``peak * exp(-1)`` are left silent, which
    for ``sigma=1`` keeps the centre and its two neighbours.
    """

    center: float
    start: int
    stop: int
    peak_rate: float = 60.0
    sigma: float = 1.0

    def rates(self, n: int) -> np.ndarray:
        d = np.arange(n) - self.center
        r = self.peak_rate * np.exp(-d ** 2 / (2 * self.sigma ** 2))
        r[np.abs(d) > self.sigma * math.sqrt(2) + 1e-9] = 0.0
        return r


def input_schedule(n: int, bumps: Sequence[InputBump], dt: float, seed: int) -> list:
    """Per-channel scripted spike steps for a set of bumps."""
    ss = np.random.SeedSequence(seed)
    per_bump = ss.spawn(len(bumps))
    trains = [[] for _ in range(n)]
    for bump, seq in zip(bumps, per_bump):
        seeds = seq.generate_state(n)
        for i, r in enumerate(bump.rates(n)):
            if r > 0 and bump.stop > bump.start:
                s = poisson_spikes(r, dt, bump.stop - bump.start, seed=int(seeds[i]))
                trains[i].append(s + bump.start)
    return [np.unique(np.concatenate(t)) if t else np.zeros(0, dtype=np.int64)
            for t in trains]


@dataclass
class Dnf1dNet:
    net: NetworkDef
    cfg: Dnf1dConfig
    layout: PopulationLayout
    field: range
    input_spikes: list  # per channel scripted steps


def build_dnf_1d(cfg: Dnf1dConfig, bumps: Sequence[InputBump] = (), seed: int = 0) -> Dnf1dNet:
    """Field with Gaussian lateral excitation and direct global inhibition.

    Input channels (one per neuron, ``input_weight``) replay Poisson trains
    drawn from ``bumps`` with ``seed``; noise generators fire at
    ``noise_rate`` on every neuron.
    """
    layout = PopulationLayout.line(cfg.n)
    b = NetworkBuilder(dt=cfg.dt)
    fld = b.add_population("field", cfg.n, cfg.neuron)
    scale = 2 ** cfg.recurrent_weight_exponent
    b.connect("field", "field", connect_lateral(layout, cfg.kernel))
    b.connect("field", "field", connect_direct_global_inhibition(layout, cfg.inh_weight * scale))
    if cfg.noise_rate > 0:
        b.add_generators("noise", [("poisson", cfg.noise_rate)] * cfg.n)
        b.connect("noise", "field", connect_one_to_one(layout, layout, cfg.noise_weight))
    trains = input_schedule(cfg.n, bumps, cfg.dt, seed)
    b.add_generators("input", [("scripted", t.tolist()) for t in trains])
    b.connect("input", "field", connect_one_to_one(layout, layout, cfg.input_weight))
    return Dnf1dNet(b.build(), cfg, layout, fld, trains)


@dataclass
class CueSpec:
    center: tuple = (32, 32)
    amplitude: int = 200
    sigma: float = 2.0
    duration: int = 100
    onset: int = 0

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("cue duration must be >= 1")
        self.center = tuple(int(c) for c in self.center)


@dataclass
class TrackerConfig:
    width: int = 64
    height: int = 64
    v_threshold: int = 640 * 64
    v_threshold_inh: int = 896 * 64
    tau_v: int = 20
    tau_i: int = 20
    input_sigma: float = 1.5
    exc_sigma: float = 2.0
    inh_sigma: float = 4.0
    exc_weight_l1: int = 152
    inh_weight_l1: int = -41
    exc_weight_l2: int = 230
    inh_weight_l2: int = -41
    weight_to_pool: int = 5
    pool_weight_l1: int = -20
    pool_weight_l2: int = -90
    weight_l1_to_l2: int = 740
    w_on: int = 70
    w_off: int = -50
    refractory: int = 12
    refractory_inh: int = 7
    p_connect: float = 0.6
    n_inh: int = 40
    self_connection_l1: bool = False
    self_connection_l2: bool = False
    dt: float = 1e-3
    pool_seed: int = 0
    cue: CueSpec = field(default_factory=CueSpec)

    @property
    def layout(self) -> PopulationLayout:
        return PopulationLayout.grid(self.width, self.height)

    def kernel(self, layer: int) -> KernelSpec:
        a_exc = self.exc_weight_l1 if layer == 1 else self.exc_weight_l2
        a_inh = self.inh_weight_l1 if layer == 1 else self.inh_weight_l2
        include_self = self.self_connection_l1 if layer == 1 else self.self_connection_l2
        return KernelSpec(a_exc, self.exc_sigma, -a_inh, self.inh_sigma,
                          include_self=include_self)

    @property
    def layer_neuron(self) -> NeuronParams:
        return NeuronParams(self.v_threshold, self.tau_v, self.tau_i, self.refractory)

    @property
    def pool_neuron(self) -> NeuronParams:
        return NeuronParams(self.v_threshold_inh, self.tau_v, self.tau_i, self.refractory_inh)


@dataclass
class TrackerNet:
    net: NetworkDef
    cfg: TrackerConfig
    layout: PopulationLayout
    layer1: range
    layer2: range
    pool1: range
    pool2: range


def apply_cue(builder: NetworkBuilder, layout: PopulationLayout, cue: CueSpec,
              target: str = "layer2"):
    """Schedule a Gaussian boost into ``target`` for ``[onset, onset + duration)``."""
    if not layout.contains(*cue.center):
        raise ValueError(f"cue centre {cue.center} is off the {layout.dims} grid")
    if cue.amplitude == 0:
        return None
    spec = KernelSpec(abs(cue.amplitude), cue.sigma, include_self=True)
    coords = layout.coords()
    d = np.sqrt(((coords - np.array(cue.center, dtype=float)) ** 2).sum(axis=1))
    w = np.array([kernel_weight(spec, float(di)) for di in d], dtype=np.int64)
    w = np.sign(cue.amplitude) * w
    keep = np.flatnonzero(w)
    steps = list(range(cue.onset, cue.onset + cue.duration))
    builder.add_generators("cue", [("scripted", steps)])
    builder.connect("cue", target, Synapses(np.zeros(len(keep)), keep, w[keep]))
    return builder._gen_groups["cue"]


def build_tracker(cfg: TrackerConfig, binned: BinnedInput | None = None,
                  cue: CueSpec | None = None) -> TrackerNet:
    """Two-layer tracker; camera input goes to layer 1, the cue to layer 2."""
    layout = cfg.layout
    b = NetworkBuilder(dt=cfg.dt)
    l1 = b.add_population("layer1", layout.size, cfg.layer_neuron)
    l2 = b.add_population("layer2", layout.size, cfg.layer_neuron)
    p1 = b.add_population("pool1", cfg.n_inh, cfg.pool_neuron)
    p2 = b.add_population("pool2", cfg.n_inh, cfg.pool_neuron)
    b.connect("layer1", "layer1", connect_lateral(layout, cfg.kernel(1)))
    b.connect("layer2", "layer2", connect_lateral(layout, cfg.kernel(2)))
    b.connect("layer1", "layer2", connect_one_to_one(layout, layout, cfg.weight_l1_to_l2))
    seeds = np.random.SeedSequence(cfg.pool_seed).generate_state(2)
    for layer, pool, w_back, s in (("layer1", "pool1", cfg.pool_weight_l1, seeds[0]),
                                  ("layer2", "pool2", cfg.pool_weight_l2, seeds[1])):
        spec = InhibitionPoolSpec(cfg.n_inh, cfg.p_connect, cfg.weight_to_pool, w_back,
                                  cfg.pool_neuron)
        ip = connect_global_inhibition(layout, spec, seed=int(s))
        b.connect(layer, pool, ip.to_pool)
        b.connect(pool, layer, ip.from_pool)
    if binned is not None:
        drive = inject(binned, layout, cfg.w_on, cfg.w_off, cfg.input_sigma)
        b.add_generators("on", drive.generator_specs(True))
        b.add_generators("off", drive.generator_specs(False))
        b.connect("on", "layer1", drive.on_fanout)
        b.connect("off", "layer1", drive.off_fanout)
    cue = cfg.cue if cue is None else cue
    apply_cue(b, layout, cue)
    return TrackerNet(b.build(), cfg, layout, l1, l2, p1, p2)


# --- flat key-value config files -------------------------------------------

_KINDS = {"dnf1d": Dnf1dConfig, "tracker": TrackerConfig}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _parse(text: str, typ):
    if typ in (bool, "bool"):
        low = text.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "yes", "1")
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    if typ == "tuple":
        return tuple(int(x) for x in text.split(","))
    return text


def _field_type(f):
    t = f.type if isinstance(f.type, str) else f.type.__name__
    return t


def dump_config(cfg) -> str:
    """Serialise a config as ``key = value`` lines (cue fields prefixed ``cue_``)."""
    kind = {v: k for k, v in _KINDS.items()}[type(cfg)]
    lines = [f"kind = {kind}"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, CueSpec):
            for cf in fields(v):
                lines.append(f"cue_{cf.name} = {_fmt(getattr(v, cf.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def load_config(text: str):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        k, v = (p.strip() for p in s.split("=", 1))
        pairs[k] = v
    kind = pairs.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"config needs kind = dnf1d|tracker, got {kind!r}")
    cls = _KINDS[kind]
    kw, cue_kw = {}, {}
    types = {f.name: _field_type(f) for f in fields(cls)}
    cue_types = {f.name: _field_type(f) for f in fields(CueSpec)}
    for k, v in pairs.items():
        if k.startswith("cue_") and cls is TrackerConfig:
            name = k[4:]
            if name not in cue_types:
                raise ValueError(f"unknown config key {k!r}")
            cue_kw[name] = _parse(v, cue_types[name])
        elif k in types and types[k] != "CueSpec":
            kw[k] = _parse(v, types[k])
        else:
            raise ValueError(f"unknown config key {k!r}")
    if cue_kw:
        kw["cue"] = CueSpec(**cue_kw)
    return cls(**kw)


def replace(cfg, **changes):
    return dataclasses.replace(cfg, **changes)
