"""Event-camera ingest: parsing, downsampling, binning and injection."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import Synapses, atomic_write
from .topology import PopulationLayout, gaussian_fanout

DAVIS_DIMS = (240, 180)
GRID_DIMS = (64, 64)
BINARY_MAGIC = b"EVT1"
_RECORD = np.dtype([("t_us", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


class EventFormatError(ValueError):
    def __init__(self, msg, line=None, event=None):
        self.line = line
        self.event = event
        super().__init__(msg)


class EventStream:
    """Time-sorted columns ``t`` (s), ``x``, ``y`` and ``p`` (1 = on, 0 = off)."""

    __slots__ = ("t", "x", "y", "p", "sensor_dims")

    def __init__(self, t=(), x=(), y=(), p=(), sensor_dims=DAVIS_DIMS, sort=True):
        t = np.asarray(t, dtype=np.float64).ravel()
        x = np.asarray(x, dtype=np.int64).ravel()
        y = np.asarray(y, dtype=np.int64).ravel()
        p = np.asarray(p, dtype=np.int8).ravel()
        if sort and len(t) and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            t, x, y, p = t[order], x[order], y[order], p[order]
        self.t, self.x, self.y, self.p = t, x, y, p
        self.sensor_dims = tuple(sensor_dims)

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield CameraEvent(*row)

    def window(self, t0: float, t1: float, rebase: bool = True) -> "EventStream":
        """Events with ``t0 <= t < t1``, optionally shifted to start at 0."""
        m = (self.t >= t0) & (self.t < t1)
        t = self.t[m] - (t0 if rebase else 0.0)
        return EventStream(t, self.x[m], self.y[m], self.p[m], self.sensor_dims, sort=False)

    def validate(self):
        w, h = self.sensor_dims
        bad = (self.x < 0) | (self.x >= w) | (self.y < 0) | (self.y >= h)
        bad |= ~np.isin(self.p, (0, 1)) | ~(self.t >= 0)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            ev = CameraEvent(float(self.t[k]), int(self.x[k]), int(self.y[k]), int(self.p[k]))
            raise EventFormatError(f"event out of range for sensor {w}x{h}: {ev}", event=ev)


@dataclass(frozen=True)
class CameraEvent:
    t: float
    x: int
    y: int
    polarity: int  # 1 on, 0 off

    @property
    def on(self) -> bool:
        return self.polarity == 1


def parse_events(text, sensor_dims=DAVIS_DIMS) -> EventStream:
    """Parse ``t x y p`` lines (seconds, pixels, 0/1).

    ``text`` may be a string or a text file object; blank lines and lines
    starting with ``#`` are skipped.
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    w, h = sensor_dims
    ts, xs, ys, ps = [], [], [], []
    for lineno, line in enumerate(text, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        try:
            if len(parts) != 4:
                raise ValueError
            t, x, y, p = float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise EventFormatError(f"line {lineno}: malformed event {s!r}", line=lineno) from None
        if p not in (0, 1) or not t >= 0:
            raise EventFormatError(f"line {lineno}: malformed event {s!r}", line=lineno)
        if not (0 <= x < w and 0 <= y < h):
            ev = CameraEvent(t, x, y, p)
            raise EventFormatError(
                f"line {lineno}: event {ev} outside sensor {w}x{h}", line=lineno, event=ev)
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)
    return EventStream(ts, xs, ys, ps, sensor_dims)


def read_events(path, sensor_dims=DAVIS_DIMS) -> EventStream:
    """Load a text or ``EVT1`` binary event file (detected by magic)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        with open(path, "rb") as fh:
            return decode_binary(fh.read(), sensor_dims)
    with open(path) as fh:
        return parse_events(fh, sensor_dims)


def read_events_window(path, t0: float, t1: float, sensor_dims=DAVIS_DIMS) -> EventStream:
    """Events with ``t0 <= t < t1`` from a time-sorted text file, rebased to ``t0``.

    Stops reading at the first event past ``t1``, so excerpts near the start
    of long recordings load quickly.
    """
    def lines():
        with open(path) as fh:
            for line in fh:
                head = line.split(None, 1)
                if head and not head[0].startswith("#"):
                    try:
                        t = float(head[0])
                    except ValueError:
                        yield line  # let the parser report it
                        continue
                    if t >= t1:
                        return
                    if t < t0:
                        yield "\n"  # keeps parser line numbers aligned
                        continue
                yield line
    with open(path, "rb") as fh:
        binary = fh.read(4) == BINARY_MAGIC
    ev = read_events(path, sensor_dims) if binary else parse_events(lines(), sensor_dims)
    return ev.window(t0, t1, rebase=True)


def encode_binary(ev: EventStream) -> bytes:
    rec = np.empty(len(ev), dtype=_RECORD)
    rec["t_us"] = np.rint(ev.t * 1e6).astype(np.uint64)
    rec["x"], rec["y"], rec["p"] = ev.x, ev.y, ev.p
    return BINARY_MAGIC + rec.tobytes()


def decode_binary(buf: bytes, sensor_dims=DAVIS_DIMS) -> EventStream:
    if buf[:4] != BINARY_MAGIC:
        raise EventFormatError("missing EVT1 magic header")
    body = buf[4:]
    if len(body) % _RECORD.itemsize:
        raise EventFormatError(
            f"truncated binary event file: {len(body)} bytes is not a multiple of "
            f"{_RECORD.itemsize}")
    rec = np.frombuffer(body, dtype=_RECORD)
    ev = EventStream(rec["t_us"].astype(np.float64) * 1e-6, rec["x"], rec["y"], rec["p"],
                     sensor_dims)
    ev.validate()
    return ev


def write_events(path, ev: EventStream, binary: bool = False):
    if binary:
        atomic_write(path, lambda fh: fh.write(encode_binary(ev)), mode="wb")
        return

    def _w(fh):
        for t, x, y, p in zip(ev.t.tolist(), ev.x.tolist(), ev.y.tolist(), ev.p.tolist()):
            fh.write(f"{t:.6f} {x} {y} {p}\n")
    atomic_write(path, _w)


def downsample(x, y, from_dims=DAVIS_DIMS, to_dims=GRID_DIMS):
    """Map sensor pixels to grid cells with ``floor(x * W' / W)`` per axis."""
    x = np.asarray(x)
    y = np.asarray(y)
    (w, h), (gw, gh) = from_dims, to_dims
    if np.any((x < 0) | (x >= w) | (y < 0) | (y >= h)):
        raise EventFormatError(f"pixel outside {w}x{h}")
    gx = (x.astype(np.int64) * gw) // w
    gy = (y.astype(np.int64) * gh) // h
    if gx.ndim == 0:
        return int(gx), int(gy)
    return gx, gy


@dataclass
class BinnedInput:
    """Deduplicated per-step input spikes on the network grid.

    ``step``, ``cell`` and ``polarity`` are parallel arrays sorted by step;
    ``cell`` is the row-major grid id.
    """

    step: np.ndarray
    cell: np.ndarray
    polarity: np.ndarray
    n_steps: int
    dt: float
    grid_dims: tuple = GRID_DIMS
    n_input: int = 0
    n_duplicates: int = 0
    n_dropped: int = 0

    @property
    def n_kept(self) -> int:
        return len(self.step)

    def spikes_at(self, k: int, on: bool = True) -> np.ndarray:
        lo, hi = np.searchsorted(self.step, [k, k + 1])
        sel = self.polarity[lo:hi] == (1 if on else 0)
        return np.sort(self.cell[lo:hi][sel])

    def on_spikes(self, k):
        return self.spikes_at(k, True)

    def off_spikes(self, k):
        return self.spikes_at(k, False)

    def times_by_channel(self, on: bool):
        """``{cell: sorted steps}`` for one polarity."""
        m = self.polarity == (1 if on else 0)
        cells, steps = self.cell[m], self.step[m]
        order = np.lexsort((steps, cells))
        cells, steps = cells[order], steps[order]
        bounds = np.flatnonzero(np.diff(cells)) + 1
        out = {}
        for c_chunk, s_chunk in zip(np.split(cells, bounds), np.split(steps, bounds)):
            if len(c_chunk):
                out[int(c_chunk[0])] = s_chunk
        return out


def bin_events(events: EventStream, dt: float, n_steps: int, grid_dims=GRID_DIMS,
               from_dims=None) -> BinnedInput:
    """Bin into half-open ``[k dt, (k+1) dt)`` steps, keeping one event per
    (cell, polarity, step)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    from_dims = from_dims or events.sensor_dims
    n_in = len(events)
    if n_in == 0:
        z = np.zeros(0, dtype=np.int64)
        return BinnedInput(z, z.copy(), z.astype(np.int8), n_steps, dt, tuple(grid_dims))
    gx, gy = downsample(events.x, events.y, from_dims, grid_dims)
    cell = gy * grid_dims[0] + gx
    step = np.floor(events.t / dt).astype(np.int64)
    # float guard: a timestamp of exactly k*dt must land in bin k
    step += (events.t >= (step + 1) * dt).astype(np.int64)
    step -= (events.t < step * dt).astype(np.int64)
    in_horizon = step < n_steps
    n_dropped = int((~in_horizon).sum())
    step, cell, pol = step[in_horizon], cell[in_horizon], events.p[in_horizon].astype(np.int64)
    ncell = grid_dims[0] * grid_dims[1]
    key = (step * ncell + cell) * 2 + pol
    uniq = np.unique(key)
    n_dup = len(key) - len(uniq)
    pol_u = (uniq % 2).astype(np.int8)
    cell_u = (uniq // 2) % ncell
    step_u = (uniq // 2) // ncell
    return BinnedInput(step_u, cell_u, pol_u, n_steps, dt, tuple(grid_dims),
                       n_input=n_in, n_duplicates=int(n_dup), n_dropped=n_dropped)


@dataclass
class InputDrive:
    """Input channels (one per cell and polarity) and their fan-out.

    ``on_fanout``/``off_fanout`` map channel id (= grid cell) to layer
    neuron; ``on_times``/``off_times`` hold each channel's spike steps.
    """

    on_fanout: Synapses
    off_fanout: Synapses
    on_times: dict
    off_times: dict
    n_cells: int

    def drive(self, k: int, binned: BinnedInput) -> np.ndarray:
        """Summed weight mantissa arriving at each layer neuron in step ``k``."""
        out = np.zeros(self.n_cells, dtype=np.int64)
        for cells, fan in ((binned.on_spikes(k), self.on_fanout),
                           (binned.off_spikes(k), self.off_fanout)):
            if len(cells):
                m = np.isin(fan.src, cells)
                np.add.at(out, fan.dst[m], fan.weight[m])
        return out

    def generator_specs(self, on: bool):
        """Scripted generator list for :meth:`NetworkBuilder.add_generators`."""
        times = self.on_times if on else self.off_times
        return [("scripted", times.get(c, np.zeros(0, dtype=np.int64)).tolist())
                for c in range(self.n_cells)]


def inject(binned: BinnedInput, layout: PopulationLayout, w_on: int = 70, w_off: int = -50,
           input_sigma: float = 1.5) -> InputDrive:
    """Gaussian fan-out from per-cell on/off channels into ``layout``."""
    if tuple(layout.dims) != tuple(binned.grid_dims):
        raise ValueError(f"layout {layout.dims} does not match binned grid {binned.grid_dims}")
    return InputDrive(gaussian_fanout(layout, w_on, input_sigma),
                      gaussian_fanout(layout, w_off, input_sigma),
                      binned.times_by_channel(True), binned.times_by_channel(False),
                      layout.size)


def write_binned_csv(path, binned: BinnedInput):
    gw = binned.grid_dims[0]

    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "gx", "gy", "polarity"])
        for s, c, p in zip(binned.step.tolist(), binned.cell.tolist(),
                           binned.polarity.tolist()):
            w.writerow([s, c % gw, c // gw, "on" if p else "off"])
    atomic_write(path, _w)

