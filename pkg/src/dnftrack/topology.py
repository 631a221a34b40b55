"""Synapse builders for 1D/2D neural fields.

All builders return :class:`~dnftrack.core.Synapses` in *local* ids of the
populations involved; :class:`NetworkBuilder` shifts them into the global
id space.  2D layouts are row-major: ``id = y * width + x``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GeneratorDef, NetworkDef, NetworkError, NeuronParams, Synapses, atomic_write


def round_half_away(x):
    """Round to nearest integer, ties away from zero (scalar or array)."""
    if np.ndim(x) == 0:
        return int(math.copysign(math.floor(abs(x) + 0.5), x))
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class PopulationLayout:
    """Grid of neurons: ``(n,)`` for 1D or ``(width, height)`` for 2D."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in (self.dims if np.ndim(self.dims) else (self.dims,)))
        if len(dims) not in (1, 2) or min(dims) < 1:
            raise NetworkError(f"invalid layout dims {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def line(cls, n: int) -> "PopulationLayout":
        return cls((n,))

    @classmethod
    def grid(cls, width: int, height: int) -> "PopulationLayout":
        return cls((width, height))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def width(self) -> int:
        return self.dims[0]

    @property
    def height(self) -> int:
        return self.dims[1] if self.ndim == 2 else 1

    def coords(self) -> np.ndarray:
        """``(size, ndim)`` float array of neuron coordinates, by id."""
        ids = np.arange(self.size)
        if self.ndim == 1:
            return ids[:, None].astype(float)
        return np.stack([ids % self.width, ids // self.width], axis=1).astype(float)

    def to_id(self, x, y=None):
        if self.ndim == 1:
            return x
        return y * self.width + x

    def to_coord(self, i):
        if self.ndim == 1:
            return (i,)
        return (i % self.width, i // self.width)

    def contains(self, *c) -> bool:
        return len(c) == self.ndim and all(0 <= ci < d for ci, d in zip(c, self.dims))


@dataclass(frozen=True)
class KernelSpec:
    """Difference-of-Gaussians lateral kernel in weight-mantissa units."""

    a_exc: float
    sigma_exc: float
    a_inh: float = 0.0
    sigma_inh: float = 0.0
    include_self: bool = True
    cutoff_radius: float | None = None

    def __post_init__(self):
        if self.sigma_exc <= 0:
            raise NetworkError("sigma_exc must be positive")
        if self.a_inh < 0:
            raise NetworkError("a_inh must be >= 0 (it is subtracted)")
        if self.a_inh > 0 and not self.sigma_inh > self.sigma_exc:
            raise NetworkError("Mexican hat needs sigma_inh > sigma_exc")
        if self.cutoff_radius is None:
            r = math.ceil(3 * max(self.sigma_exc, self.sigma_inh))
            object.__setattr__(self, "cutoff_radius", float(r))

    def raw(self, d):
        d2 = np.square(d)
        w = self.a_exc * np.exp(-d2 / (2 * self.sigma_exc ** 2))
        if self.a_inh > 0 and self.sigma_inh > 0:
            w = w - self.a_inh * np.exp(-d2 / (2 * self.sigma_inh ** 2))
        return w


def kernel_weight(spec: KernelSpec, d: float) -> int:
    """Integer weight at grid distance ``d``."""
    if d < 0:
        raise NetworkError("distance must be >= 0")
    if d > spec.cutoff_radius or (d == 0 and not spec.include_self):
        return 0
    return round_half_away(float(spec.raw(d)))


def _stencil(ndim: int, spec: KernelSpec):
    """Offsets within the cutoff and their integer weights (zeros removed)."""
    r = int(math.floor(spec.cutoff_radius))
    ax = np.arange(-r, r + 1)
    if ndim == 1:
        off = ax[:, None]
    else:
        gx, gy = np.meshgrid(ax, ax, indexing="xy")
        off = np.stack([gx.ravel(), gy.ravel()], axis=1)
    d = np.sqrt((off.astype(float) ** 2).sum(axis=1))
    w = round_half_away(spec.raw(d))
    w[d > spec.cutoff_radius] = 0
    if not spec.include_self:
        w[d == 0] = 0
    keep = w != 0
    return off[keep], w[keep]


def connect_lateral(layout: PopulationLayout, spec: KernelSpec) -> Synapses:
    """All-pairs kernel connectivity within the cutoff, truncated at edges."""
    off, w = _stencil(layout.ndim, spec)
    coords = layout.coords().astype(np.int64)
    src_parts, dst_parts, w_parts = [], [], []
    ids = np.arange(layout.size, dtype=np.int64)
    for o, wk in zip(off, w):
        tgt = coords + o
        ok = np.all((tgt >= 0) & (tgt < np.array(layout.dims)), axis=1)
        if not ok.any():
            continue
        t = tgt[ok]
        dst = t[:, 0] if layout.ndim == 1 else t[:, 1] * layout.width + t[:, 0]
        src_parts.append(ids[ok])
        dst_parts.append(dst)
        w_parts.append(np.full(ok.sum(), wk, dtype=np.int64))
    if not src_parts:
        return Synapses()
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    wt = np.concatenate(w_parts)
    order = np.lexsort((dst, src))
    return Synapses(src[order], dst[order], wt[order])


def weight_matrix(n_src: int, n_dst: int, syn: Synapses) -> np.ndarray:
    """Dense ``(n_src, n_dst)`` matrix, summing duplicate pairs."""
    m = np.zeros((n_src, n_dst), dtype=np.int64)
    np.add.at(m, (syn.src, syn.dst), syn.weight)
    return m


@dataclass(frozen=True)
class InhibitionPoolSpec:
    n_inh: int
    p_connect: float
    w_exc_to_inh: int
    w_inh_to_exc: int
    params: NeuronParams

    def __post_init__(self):
        if not 0 <= self.p_connect <= 1:
            raise NetworkError("p_connect must lie in [0, 1]")
        if self.w_inh_to_exc > 0:
            raise NetworkError("w_inh_to_exc must be <= 0")
        if self.n_inh < 0:
            raise NetworkError("n_inh must be >= 0")


@dataclass
class InhibitionPool:
    spec: InhibitionPoolSpec
    to_pool: Synapses    # layer id -> pool id
    from_pool: Synapses  # pool id -> layer id

    @property
    def n(self) -> int:
        return self.spec.n_inh


def connect_global_inhibition(layout: PopulationLayout, pool: InhibitionPoolSpec,
                              seed: int = 0) -> InhibitionPool:
    """Random bipartite coupling between a layer and an interneuron pool.

    Both directions are sampled independently with ``p_connect``.
    """
    rng = np.random.default_rng(seed)
    n, m = layout.size, pool.n_inh

    def sample(n_from, n_to, w):
        if pool.p_connect == 0 or n_from * n_to == 0:
            return Synapses()
        mask = rng.random((n_from, n_to)) < pool.p_connect
        s, d = np.nonzero(mask)
        return Synapses(s, d, np.full(len(s), w, dtype=np.int64))

    to_pool = sample(n, m, pool.w_exc_to_inh)
    from_pool = sample(m, n, pool.w_inh_to_exc)
    return InhibitionPool(pool, to_pool, from_pool)


def connect_one_to_one(src_layout: PopulationLayout, dst_layout: PopulationLayout,
                       weight: int) -> Synapses:
    if src_layout.dims != dst_layout.dims:
        raise NetworkError(
            f"one-to-one needs identical layouts, got {src_layout.dims} and {dst_layout.dims}")
    ids = np.arange(src_layout.size, dtype=np.int64)
    return Synapses(ids, ids, np.full(len(ids), weight, dtype=np.int64))


def connect_direct_global_inhibition(layout: PopulationLayout, weight: int,
                                     include_self: bool = False) -> Synapses:
    """All-to-all inhibition without interneurons; zero weight gives nothing."""
    if weight > 0:
        raise NetworkError(f"global inhibition weight must be <= 0, got {weight}")
    n = layout.size
    if weight == 0:
        return Synapses()
    s, d = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    s, d = s.ravel(), d.ravel()
    if not include_self:
        keep = s != d
        s, d = s[keep], d[keep]
    return Synapses(s, d, np.full(len(s), weight, dtype=np.int64))


def gaussian_fanout(layout: PopulationLayout, amplitude: float, sigma: float,
                    cutoff_radius: float | None = None) -> Synapses:
    """One source per grid cell fanning out with a Gaussian profile.

    Source ``i`` is the channel centred on cell ``i``.
    """
    spec = KernelSpec(a_exc=abs(amplitude), sigma_exc=sigma, include_self=True,
                      cutoff_radius=cutoff_radius)
    syn = connect_lateral(layout, spec)
    if amplitude < 0:
        syn = Synapses(syn.src, syn.dst, -syn.weight, syn.delay)
    return syn


@dataclass
class NetworkBuilder:
    """Accumulates populations, generators and synapse blocks into a NetworkDef.

    Generator ids are only known after all neurons are added, so generators
    get provisional keys and are renumbered in :meth:`build`.
    """

    dt: float = 1e-3
    _params: list = field(default_factory=list)
    _counts: list = field(default_factory=list)
    populations: dict = field(default_factory=dict)
    _gens: list = field(default_factory=list)        # (kind, payload)
    _gen_groups: dict = field(default_factory=dict)  # name -> range into _gens
    _blocks: list = field(default_factory=list)      # (Synapses, src_key, dst_pop)

    @property
    def n_neurons(self) -> int:
        return sum(self._counts)

    def add_population(self, name: str, n: int, params: NeuronParams) -> range:
        if name in self.populations:
            raise NetworkError(f"duplicate population {name!r}")
        start = self.n_neurons
        self._params.append(params)
        self._counts.append(n)
        self.populations[name] = range(start, start + n)
        return self.populations[name]

    def add_generators(self, name: str, gens: list) -> range:
        """``gens`` is a list of ``("poisson", rate)`` / ``("scripted", times)``."""
        if name in self._gen_groups:
            raise NetworkError(f"duplicate generator group {name!r}")
        start = len(self._gens)
        self._gens.extend(gens)
        self._gen_groups[name] = range(start, start + len(gens))
        return self._gen_groups[name]

    def connect(self, src: str, dst: str, syn: Synapses):
        """Add local-id synapses from population/generator group ``src`` to ``dst``."""
        if dst not in self.populations:
            raise NetworkError(f"unknown destination population {dst!r}")
        if src not in self.populations and src not in self._gen_groups:
            raise NetworkError(f"unknown source {src!r}")
        self._blocks.append((syn.nonzero(), src, dst))

    def build(self) -> NetworkDef:
        n = self.n_neurons
        gen_defs = []
        for k, (kind, payload) in enumerate(self._gens):
            if kind == "poisson":
                gen_defs.append(GeneratorDef.poisson(n + k, payload))
            else:
                gen_defs.append(GeneratorDef.scripted(n + k, payload))
        blocks = []
        for syn, src, dst in self._blocks:
            if src in self.populations:
                s_off = self.populations[src].start
            else:
                s_off = n + self._gen_groups[src].start
            blocks.append(syn.shifted(s_off, self.populations[dst].start))
        thr = np.repeat([p.v_threshold for p in self._params], self._counts)
        tv = np.repeat([p.tau_v for p in self._params], self._counts)
        ti = np.repeat([p.tau_i for p in self._params], self._counts)
        rf = np.repeat([p.refractory for p in self._params], self._counts)
        bs = np.repeat([p.bias for p in self._params], self._counts)
        pops = dict(self.populations)
        for name, r in self._gen_groups.items():
            pops["gen:" + name] = range(n + r.start, n + r.stop)
        return NetworkDef.from_arrays(thr, tv, ti, rf, bs, Synapses.concat(blocks),
                                      gen_defs, dt=self.dt, populations=pops)


def write_connectivity_csv(path, syn: Synapses):
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "weight", "delay"])
        w.writerows(zip(syn.src.tolist(), syn.dst.tolist(), syn.weight.tolist(),
                        syn.delay.tolist()))
    atomic_write(path, _w)
