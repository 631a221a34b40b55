"""Fixed-point leaky integrate-and-fire engine.

Compartments follow the Loihi-style integer update: a synaptic current ``u``
and a membrane voltage ``v`` both decay multiplicatively with 12-bit
precision, synaptic weights are applied as ``weight << 6``, and thresholds
are stored already scaled.

Source ids form a single space: neurons occupy ``[0, n_neurons)`` and spike
generators follow at ``[n_neurons, n_neurons + n_generators)``.  A synapse
may start at either kind of source but must end on a neuron.

A spike emitted by a *neuron* at step ``t`` over a synapse of delay ``d``
arrives at step ``t + 1 + d``.  A *generator* (or external) spike at step
``t`` arrives at step ``t + d``, so input reaches the network in the step
it is emitted.
"""
from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import sparse

DECAY_BITS = 12
DECAY_ONE = 1 << DECAY_BITS
WEIGHT_SHIFT = 6


class NetworkError(ValueError):
    """Raised for structurally invalid networks or inputs."""


class UnknownSourceError(NetworkError):
    def __init__(self, ids):
        self.ids = sorted(int(i) for i in ids)
        super().__init__(f"unknown source id(s): {self.ids}")


def decay_delta(tau: int) -> int:
    """12-bit decay increment ``round(4096 / tau)``, ties away from zero."""
    if tau < 1:
        raise NetworkError(f"time constant must be >= 1, got {tau}")
    # exact integer version of floor(4096 / tau + 0.5)
    return (2 * DECAY_ONE + tau) // (2 * tau)


def decay(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``trunc(x * (4096 - delta) / 4096)`` in exact integer arithmetic."""
    prod = np.abs(x) * (DECAY_ONE - delta)
    return np.sign(x) * (prod >> DECAY_BITS)


@dataclass(frozen=True)
class NeuronParams:
    v_threshold: int
    tau_v: int
    tau_i: int
    refractory: int = 0
    bias: int = 0

    def __post_init__(self):
        if self.v_threshold <= 0:
            raise NetworkError(f"v_threshold must be positive, got {self.v_threshold}")
        if self.tau_v < 1 or self.tau_i < 1:
            raise NetworkError("tau_v and tau_i must be >= 1")
        if self.refractory < 0:
            raise NetworkError("refractory must be >= 0")


class Synapse(NamedTuple):
    src: int
    dst: int
    weight: int
    delay: int = 0


class SpikeRecord(NamedTuple):
    t: int
    neuron: int


class Synapses:
    """Columnar block of synapses.

    Builders emit these instead of lists of :class:`Synapse` so that
    million-synapse layers stay cheap.  Iterating yields :class:`Synapse`.
    """

    __slots__ = ("src", "dst", "weight", "delay")

    def __init__(self, src=(), dst=(), weight=(), delay=None):
        self.src = np.asarray(src, dtype=np.int64).ravel()
        self.dst = np.asarray(dst, dtype=np.int64).ravel()
        self.weight = np.asarray(weight, dtype=np.int64).ravel()
        if delay is None:
            self.delay = np.zeros_like(self.src)
        else:
            self.delay = np.broadcast_to(
                np.asarray(delay, dtype=np.int64), self.src.shape).copy()
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise NetworkError("synapse columns differ in length")
        if np.any(self.delay < 0):
            raise NetworkError("synaptic delay must be >= 0")

    @classmethod
    def from_list(cls, syns: Iterable[Synapse]) -> "Synapses":
        rows = [tuple(s) if len(s) == 4 else (*s, 0) for s in syns]
        if not rows:
            return cls()
        a = np.array(rows, dtype=np.int64)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3])

    @classmethod
    def concat(cls, blocks: Sequence["Synapses"]) -> "Synapses":
        blocks = [b for b in blocks if len(b)]
        if not blocks:
            return cls()
        return cls(np.concatenate([b.src for b in blocks]),
                   np.concatenate([b.dst for b in blocks]),
                   np.concatenate([b.weight for b in blocks]),
                   np.concatenate([b.delay for b in blocks]))

    def shifted(self, src_offset: int = 0, dst_offset: int = 0) -> "Synapses":
        return Synapses(self.src + src_offset, self.dst + dst_offset,
                        self.weight, self.delay)

    def nonzero(self) -> "Synapses":
        keep = self.weight != 0
        return Synapses(self.src[keep], self.dst[keep], self.weight[keep],
                        self.delay[keep])

    def __len__(self):
        return len(self.src)

    def __iter__(self) -> Iterator[Synapse]:
        for s, d, w, dl in zip(self.src.tolist(), self.dst.tolist(),
                               self.weight.tolist(), self.delay.tolist()):
            yield Synapse(s, d, w, dl)

    def __repr__(self):
        return f"Synapses(n={len(self)})"


@dataclass(frozen=True)
class GeneratorDef:
    """Spike source.

    ``mode`` is ``"poisson"`` (uses ``rate`` in Hz and the network ``dt``)
    or ``"scripted"`` (fires exactly at ``spike_times``).
    """

    id: int
    mode: str
    rate: float = 0.0
    spike_times: tuple = ()

    def __post_init__(self):
        if self.mode == "poisson":
            if not self.rate >= 0:
                raise NetworkError(f"generator {self.id}: poisson rate must be >= 0")
        elif self.mode == "scripted":
            times = np.asarray(self.spike_times, dtype=np.int64)
            if np.any(np.diff(times) <= 0):
                raise NetworkError(
                    f"generator {self.id}: scripted times must be strictly increasing")
            if len(times) and times[0] < 0:
                raise NetworkError(f"generator {self.id}: negative spike time")
            object.__setattr__(self, "spike_times", tuple(times.tolist()))
        else:
            raise NetworkError(f"unknown generator mode {self.mode!r}")

    @classmethod
    def poisson(cls, id: int, rate: float) -> "GeneratorDef":
        return cls(id, "poisson", rate=float(rate))

    @classmethod
    def scripted(cls, id: int, spike_times: Iterable[int]) -> "GeneratorDef":
        return cls(id, "scripted", spike_times=tuple(spike_times))


class NetworkDef:
    """Immutable network: per-neuron parameters, synapses and generators.

    Parameters are held as per-neuron arrays; :attr:`neurons` rebuilds the
    :class:`NeuronParams` view on demand.
    """

    def __init__(self, neurons: Sequence[NeuronParams], synapses, generators=(),
                 dt: float = 1e-3, populations: Mapping[str, range] | None = None):
        neurons = list(neurons)
        self.n_neurons = len(neurons)
        self.v_threshold = np.array([p.v_threshold for p in neurons], dtype=np.int64)
        self.tau_v = np.array([p.tau_v for p in neurons], dtype=np.int64)
        self.tau_i = np.array([p.tau_i for p in neurons], dtype=np.int64)
        self.refractory = np.array([p.refractory for p in neurons], dtype=np.int64)
        self.bias = np.array([p.bias for p in neurons], dtype=np.int64)
        self._init_common(synapses, generators, dt, populations)

    @classmethod
    def from_arrays(cls, v_threshold, tau_v, tau_i, refractory, bias, synapses,
                    generators=(), dt=1e-3, populations=None) -> "NetworkDef":
        self = cls.__new__(cls)
        self.v_threshold = np.asarray(v_threshold, dtype=np.int64).copy()
        self.n_neurons = len(self.v_threshold)
        shape = self.v_threshold.shape

        def col(x):
            return np.broadcast_to(np.asarray(x, dtype=np.int64), shape).copy()

        self.tau_v, self.tau_i = col(tau_v), col(tau_i)
        self.refractory, self.bias = col(refractory), col(bias)
        if np.any(self.v_threshold <= 0) or np.any(self.tau_v < 1) or np.any(self.tau_i < 1):
            raise NetworkError("invalid neuron parameters")
        self._init_common(synapses, generators, dt, populations)
        return self

    def _init_common(self, synapses, generators, dt, populations):
        if not dt > 0:
            raise NetworkError("dt must be positive")
        self.dt = float(dt)
        if not isinstance(synapses, Synapses):
            synapses = Synapses.from_list(synapses)
        self.synapses = synapses
        self.generators = tuple(generators)
        self.populations = dict(populations or {})
        n, g = self.n_neurons, len(self.generators)
        for k, gen in enumerate(self.generators):
            if gen.id != n + k:
                raise NetworkError(
                    f"generator ids must be consecutive from {n}; got {gen.id} at slot {k}")
        s = self.synapses
        if len(s):
            if s.src.min() < 0 or s.src.max() >= n + g:
                bad = s.src[(s.src < 0) | (s.src >= n + g)]
                raise UnknownSourceError(np.unique(bad))
            if s.dst.min() < 0 or s.dst.max() >= n:
                bad = s.dst[(s.dst < 0) | (s.dst >= n)]
                raise NetworkError(f"synapse targets must be neurons; bad ids {np.unique(bad)[:10]}")
        for a in (self.v_threshold, self.tau_v, self.tau_i, self.refractory, self.bias):
            a.setflags(write=False)

    @property
    def n_sources(self) -> int:
        return self.n_neurons + len(self.generators)

    @property
    def neurons(self) -> list[NeuronParams]:
        return [NeuronParams(*row) for row in zip(
            self.v_threshold.tolist(), self.tau_v.tolist(), self.tau_i.tolist(),
            self.refractory.tolist(), self.bias.tolist())]

    def __repr__(self):
        return (f"NetworkDef(neurons={self.n_neurons}, synapses={len(self.synapses)}, "
                f"generators={len(self.generators)})")


@dataclass
class NetworkState:
    u: np.ndarray
    v: np.ndarray
    refrac_remaining: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "NetworkState":
        z = np.zeros(n, dtype=np.int64)
        return cls(z.copy(), z.copy(), z.copy(), 0)

    def copy(self) -> "NetworkState":
        return NetworkState(self.u.copy(), self.v.copy(),
                            self.refrac_remaining.copy(), self.t)


class SpikeLog:
    """Time-ordered spike log stored as two integer columns."""

    __slots__ = ("t", "neuron")

    def __init__(self, t=(), neuron=()):
        self.t = np.asarray(t, dtype=np.int64).ravel()
        self.neuron = np.asarray(neuron, dtype=np.int64).ravel()

    def __len__(self):
        return len(self.t)

    def __iter__(self) -> Iterator[SpikeRecord]:
        for t, n in zip(self.t.tolist(), self.neuron.tolist()):
            yield SpikeRecord(t, n)

    def __eq__(self, other):
        if not isinstance(other, SpikeLog):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.neuron, other.neuron)

    def __repr__(self):
        return f"SpikeLog(n={len(self)})"

    def select(self, ids) -> "SpikeLog":
        """Spikes of neurons in ``ids`` (a range or array)."""
        if isinstance(ids, range):
            keep = (self.neuron >= ids.start) & (self.neuron < ids.stop)
        else:
            keep = np.isin(self.neuron, np.asarray(ids))
        return SpikeLog(self.t[keep], self.neuron[keep])

    def relabel(self, offset: int) -> "SpikeLog":
        return SpikeLog(self.t, self.neuron - offset)

    def counts(self, n: int) -> np.ndarray:
        return np.bincount(self.neuron, minlength=n)

    def times_of(self, neuron: int) -> np.ndarray:
        return self.t[self.neuron == neuron]

    def to_records(self) -> list[SpikeRecord]:
        return list(self)


@dataclass
class RunResult:
    spikes: SpikeLog
    probes: dict = field(default_factory=dict)  # neuron id -> (u trace, v trace)
    state: NetworkState | None = None


class _FanOut:
    """Per-delay CSR fan-out tables indexed by source id."""

    def __init__(self, net: NetworkDef):
        s = net.synapses
        self.n = net.n_neurons
        self.delays = np.unique(s.delay) if len(s) else np.zeros(0, dtype=np.int64)
        self.tables = []
        for d in self.delays.tolist():
            m = s.delay == d
            mat = sparse.csr_matrix(
                (s.weight[m] << WEIGHT_SHIFT, (s.src[m], s.dst[m])),
                shape=(net.n_sources, net.n_neurons), dtype=np.int64)
            mat.sum_duplicates()
            self.tables.append((int(d), mat.indptr.astype(np.int64),
                                mat.indices.astype(np.int64), mat.data.astype(np.int64)))
        self.max_delay = int(self.delays.max()) if len(self.delays) else 0

    def gather(self, table, sources: np.ndarray) -> np.ndarray | None:
        _, indptr, indices, data = table
        starts = indptr[sources]
        lengths = indptr[sources + 1] - starts
        total = int(lengths.sum())
        if total == 0:
            return None
        # flat positions of every outgoing synapse of the given sources
        offsets = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
        pos = offsets + np.arange(total)
        out = np.zeros(self.n, dtype=np.int64)
        np.add.at(out, indices[pos], data[pos])
        return out


class Simulator:
    """Stateful single-run simulator for a :class:`NetworkDef`.

    ``seed`` drives the Poisson generators only; everything else is exact
    integer arithmetic, so a fixed (net, seed, inputs) triple reproduces
    bit-identical spike logs.
    """

    def __init__(self, net: NetworkDef, seed: int = 0, state: NetworkState | None = None):
        self.net = net
        self.state = state.copy() if state is not None else NetworkState.zeros(net.n_neurons)
        n = net.n_neurons
        self._dv = np.array([decay_delta(int(t)) for t in net.tau_v], dtype=np.int64) \
            if n else np.zeros(0, dtype=np.int64)
        self._du = np.array([decay_delta(int(t)) for t in net.tau_i], dtype=np.int64) \
            if n else np.zeros(0, dtype=np.int64)
        self._fan = _FanOut(net)
        self._ring = np.zeros((self._fan.max_delay + 2, n), dtype=np.int64)

        poisson = [g for g in net.generators if g.mode == "poisson"]
        self._pois_ids = np.array([g.id for g in poisson], dtype=np.int64)
        p = np.array([g.rate * net.dt for g in poisson], dtype=float)
        if np.any(p > 1):
            raise NetworkError("poisson rate * dt exceeds 1 for some generator")
        self._pois_p = p
        self._rng = np.random.default_rng(seed)

        ids, times = [], []
        for g in net.generators:
            if g.mode == "scripted" and g.spike_times:
                times.append(np.asarray(g.spike_times, dtype=np.int64))
                ids.append(np.full(len(g.spike_times), g.id, dtype=np.int64))
        if times:
            times, ids = np.concatenate(times), np.concatenate(ids)
            order = np.argsort(times, kind="stable")
            self._scr_t, self._scr_id = times[order], ids[order]
        else:
            self._scr_t = self._scr_id = np.zeros(0, dtype=np.int64)
        self._scr_pos = int(np.searchsorted(self._scr_t, self.state.t))

    def _generator_spikes(self, t: int) -> np.ndarray:
        parts = []
        if len(self._pois_ids):
            parts.append(self._pois_ids[self._rng.random(len(self._pois_ids)) < self._pois_p])
        end = self._scr_pos
        while end < len(self._scr_t) and self._scr_t[end] == t:
            end += 1
        if end > self._scr_pos:
            parts.append(self._scr_id[self._scr_pos:end])
            self._scr_pos = end
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(parts) if len(parts) > 1 else parts[0]

    def _deliver(self, sources: np.ndarray, base: int):
        if not len(sources):
            return
        L = len(self._ring)
        for table in self._fan.tables:
            add = self._fan.gather(table, sources)
            if add is not None:
                self._ring[(base + table[0]) % L] += add

    def step(self, external_spikes: Iterable[int] = ()) -> np.ndarray:
        """Advance one timestep; return the ids of neurons that spiked."""
        net, st = self.net, self.state
        t = st.t
        ext = np.unique(np.fromiter(external_spikes, dtype=np.int64))
        if len(ext) and (ext[0] < 0 or ext[-1] >= net.n_sources):
            raise UnknownSourceError(ext[(ext < 0) | (ext >= net.n_sources)])
        src = self._generator_spikes(t)
        if len(ext):
            src = np.union1d(src, ext)
        self._deliver(src, t)

        L = len(self._ring)
        slot = t % L
        drive = self._ring[slot].copy()
        self._ring[slot] = 0

        st.u = decay(st.u, self._du) + drive
        refr = st.refrac_remaining > 0
        v = decay(st.v, self._dv) + st.u + net.bias
        v[refr] = 0
        st.refrac_remaining = np.where(refr, st.refrac_remaining - 1, st.refrac_remaining)
        fired = (~refr) & (v >= net.v_threshold)
        emitted = np.flatnonzero(fired)
        v[emitted] = 0
        st.refrac_remaining[emitted] = net.refractory[emitted]
        st.v = v
        self._deliver(emitted, t + 1)
        st.t = t + 1
        return emitted


def step(net: NetworkDef, state: NetworkState, external_spikes: Iterable[int] = (),
         seed: int = 0) -> tuple[NetworkState, np.ndarray]:
    """Functional single step from ``state`` (no pending delayed spikes).

    Convenience for inspection; multi-step runs should hold a
    :class:`Simulator` so delayed spikes stay queued.
    """
    sim = Simulator(net, seed=seed, state=state)
    emitted = sim.step(external_spikes)
    return sim.state, emitted


def run(net: NetworkDef, n_steps: int, seed: int = 0, probe: Sequence[int] = (),
        external: Mapping[int, Iterable[int]] | None = None) -> RunResult:
    """Run ``n_steps`` from rest and return the spike log.

    ``probe`` lists neurons whose per-step ``u``/``v`` traces are kept.
    ``external`` maps a step index to source ids spiking at that step.
    """
    if n_steps < 0:
        raise NetworkError("n_steps must be >= 0")
    sim = Simulator(net, seed=seed)
    probe = np.asarray(list(probe), dtype=np.int64)
    if len(probe) and (probe.min() < 0 or probe.max() >= net.n_neurons):
        raise UnknownSourceError(probe[(probe < 0) | (probe >= net.n_neurons)])
    us = np.zeros((n_steps, len(probe)), dtype=np.int64)
    vs = np.zeros((n_steps, len(probe)), dtype=np.int64)
    ts, ns = [], []
    external = external or {}
    for k in range(n_steps):
        emitted = sim.step(external.get(k, ()))
        if len(emitted):
            ts.append(np.full(len(emitted), k, dtype=np.int64))
            ns.append(emitted)
        if len(probe):
            us[k] = sim.state.u[probe]
            vs[k] = sim.state.v[probe]
    log = SpikeLog(np.concatenate(ts), np.concatenate(ns)) if ts else SpikeLog()
    probes = {int(p): (us[:, i], vs[:, i]) for i, p in enumerate(probe)}
    return RunResult(log, probes, sim.state)


def poisson_spikes(rate: float, dt: float, n_steps: int, seed: int = 0) -> np.ndarray:
    """Bernoulli-per-step approximation of a Poisson train; returns step ids."""
    if rate < 0 or dt <= 0:
        raise NetworkError("rate must be >= 0 and dt > 0")
    p = rate * dt
    if p > 1:
        raise NetworkError(f"rate*dt = {p} exceeds 1")
    if rate == 0 or n_steps <= 0:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return np.flatnonzero(rng.random(n_steps) < p).astype(np.int64)


def atomic_write(path, write_fn, mode="w"):
    """Write via a temp file in the same directory, then rename into place."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_spikes_csv(path, log: SpikeLog):
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "neuron"])
        w.writerows(zip(log.t.tolist(), log.neuron.tolist()))
    atomic_write(path, _w)


def read_spikes_csv(path) -> SpikeLog:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["t", "neuron"]:
            raise ValueError(f"{path}: expected header t,neuron, got {header}")
        rows = [(int(a), int(b)) for a, b in r]
    if not rows:
        return SpikeLog()
    a = np.array(rows, dtype=np.int64)
    return SpikeLog(a[:, 0], a[:, 1])


def write_probes_csv(path, probes: Mapping[int, tuple]):
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "neuron", "u", "v"])
        for nid in sorted(probes):
            u, v = probes[nid]
            for k, (uu, vv) in enumerate(zip(u.tolist(), v.tolist())):
                w.writerow([k, nid, uu, vv])
    atomic_write(path, _w)
