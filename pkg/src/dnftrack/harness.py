"""Experiment runners: 1D scenarios, 2D tracking, ground truth and benchmarks.

Every runner returns an in-memory result and, when ``out_dir`` is given,
writes its artifacts there atomically.
"""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import Simulator, SpikeLog, atomic_write, run, write_spikes_csv
from .events import EventStream, bin_events, read_events_window
from .models import (CueSpec, Dnf1dConfig, InputBump, TrackerConfig, apply_cue,
                     build_dnf_1d, build_tracker)
from .readout import (DAVIS, ErrorReport, Trajectory, cell_center_to_davis,
                      extract_trajectory, rect_filter_steps, trajectory_error,
                      upsample_trajectory, write_error_report, write_trajectory_csv)
from .topology import (InhibitionPoolSpec, NetworkBuilder, PopulationLayout,
                       connect_global_inhibition, connect_lateral)

LOIHI_STEP_US = 20.0  # reported hardware figure, printed for context only


@dataclass
class ExperimentConfig:
    """Paths and run length for one CLI experiment."""

    kind: str
    n_steps: int = 1000
    dt: float | None = None
    seed: int = 0
    out: str | None = None
    events: str | None = None
    frames: str | None = None
    model: object = None
    start_s: float = 0.0

    def validate(self):
        if self.kind not in ("dnf1d", "tracker", "bench", "synth", "decode"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        for name in ("events", "frames"):
            p = getattr(self, name)
            if p is not None and not os.path.exists(p):
                raise FileNotFoundError(f"{name} path does not exist: {p}")


# --- 1D scenarios ----------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    bumps: tuple
    n_steps: int
    doc: str


def scenario(name: str, n: int = 12) -> Scenario:
    """Named input schedules for the 1D field (steps of 1 ms).

    bimodal
        two equal bumps at ``n//4`` and ``n-1-n//4`` over ``[0, 1000)``
    staggered
        bump A from step 0, bump B from step 300, both until 1000
    moving
        one bump stepping one neuron every 125 steps from 2 to 9
    removal
        one bump at the centre for ``[0, 500)``, then 1000 silent steps
    none
        no input
    """
    a, b = n // 4, n - 1 - n // 4
    if name == "bimodal":
        return Scenario(name, (InputBump(a, 0, 1000), InputBump(b, 0, 1000)), 1000,
                        "two simultaneous equal bumps")
    if name == "staggered":
        return Scenario(name, (InputBump(a, 0, 1000), InputBump(b, 300, 1000)), 1000,
                        "second bump switched on 300 steps after the first")
    if name == "moving":
        bumps = tuple(InputBump(min(2 + k, n - 1), 125 * k, 125 * (k + 1)) for k in range(8))
        return Scenario(name, bumps, 1000, "bump moving one neuron per 125 steps")
    if name == "removal":
        return Scenario(name, (InputBump(n // 2, 0, 500),), 1500, "input removed at step 500")
    if name == "none":
        return Scenario(name, (), 1000, "no input")
    raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


SCENARIOS = ("bimodal", "staggered", "moving", "removal", "none")


@dataclass
class Dnf1dResult:
    scenario: Scenario
    cfg: Dnf1dConfig
    spikes: SpikeLog        # field-local ids
    input_spikes: SpikeLog  # channel ids
    popvec: Trajectory      # x only; samples without activity are dropped
    n_steps: int


def _seeds(seed: int, k: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(k)]


def run_dnf1d(cfg: Dnf1dConfig, scenario_name: str = "bimodal", seed: int = 0,
              n_steps: int | None = None, out_dir=None) -> Dnf1dResult:
    """Run one named scenario; ``seed`` fixes both input trains and noise."""
    sc = scenario(scenario_name, cfg.n)
    if cfg.input_rate != 60.0:
        sc = Scenario(sc.name, tuple(InputBump(b.center, b.start, b.stop, cfg.input_rate,
                                               b.sigma) for b in sc.bumps), sc.n_steps, sc.doc)
    n_steps = sc.n_steps if n_steps is None else n_steps
    s_in, s_run = _seeds(seed, 2)
    dn = build_dnf_1d(cfg, sc.bumps, seed=s_in)
    res = run(dn.net, n_steps, seed=s_run)
    spikes = res.spikes.select(dn.field).relabel(dn.field.start)
    it = [np.asarray(t)[np.asarray(t) < n_steps] for t in dn.input_spikes]
    if any(len(t) for t in it):
        ts = np.concatenate(it)
        ch = np.concatenate([np.full(len(t), i) for i, t in enumerate(it)])
        o = np.lexsort((ch, ts))
        inp = SpikeLog(ts[o], ch[o])
    else:
        inp = SpikeLog()
    times = np.arange(n_steps) * cfg.dt
    pv = extract_trajectory(spikes, dn.layout, times, cfg.dt)
    out = Dnf1dResult(sc, cfg, spikes, inp, pv, n_steps)
    if out_dir is not None:
        d = Path(out_dir)
        write_spikes_csv(d / "input_spikes.csv", inp)
        write_spikes_csv(d / "output_spikes.csv", spikes)
        _write_popvec_csv(d / "population_vector.csv", pv)
    return out


def _write_popvec_csv(path, pv: Trajectory):
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x"])
        w.writerows(zip(pv.t.tolist(), pv.x.tolist()))
    atomic_write(path, _w)


# --- heatmaps --------------------------------------------------------------

def write_pgm(path, img: np.ndarray):
    """8-bit binary PGM."""
    img = np.asarray(img, dtype=np.uint8)
    atomic_write(path, lambda fh: Image.fromarray(img, mode="L").save(fh, format="PPM"),
                 mode="wb")


def rate_heatmaps(log: SpikeLog, layout: PopulationLayout, steps, window_steps: int,
                  dt: float) -> np.ndarray:
    """``(len(steps), H, W)`` rectangular-filter rates in Hz."""
    out = np.zeros((len(steps), layout.height, layout.width))
    for i, k in enumerate(steps):
        c = rect_filter_steps(log, layout.size, int(k), window_steps)
        out[i] = c.reshape(layout.height, layout.width) / (window_steps * dt)
    return out


def to_gray(maps: np.ndarray) -> np.ndarray:
    """Linear map to 0..255 with one maximum for the whole stack."""
    peak = maps.max() if maps.size else 0.0
    if peak <= 0:
        return np.zeros(maps.shape, dtype=np.uint8)
    return np.rint(maps / peak * 255).astype(np.uint8)


# --- tracker ---------------------------------------------------------------

@dataclass
class TrackerResult:
    cfg: TrackerConfig
    spikes: SpikeLog
    layer1: SpikeLog  # layer-local ids
    layer2: SpikeLog
    trajectory: Trajectory        # grid64
    trajectory_davis: Trajectory
    error: ErrorReport | None
    snapshot_steps: np.ndarray
    n_steps: int
    n_events: int


def run_tracker(cfg: TrackerConfig, events: EventStream, n_steps: int,
                cue: CueSpec | None = None, ground_truth: Trajectory | None = None,
                seed: int = 0, out_dir=None, snapshot_every: int = 100,
                window_s: float = 0.05) -> TrackerResult:
    """Bin ``events``, run the two-layer tracker and decode layer 2.

    The trajectory is sampled at every step.  With ``ground_truth`` (DAVIS
    pixels) an error report with offset search is produced.
    """
    dt = cfg.dt
    binned = bin_events(events, dt, n_steps, grid_dims=(cfg.width, cfg.height))
    tn = build_tracker(cfg, binned, cue)
    res = run(tn.net, n_steps, seed=seed)
    l1 = res.spikes.select(tn.layer1).relabel(tn.layer1.start)
    l2 = res.spikes.select(tn.layer2).relabel(tn.layer2.start)
    traj = extract_trajectory(l2, tn.layout, np.arange(n_steps) * dt, dt)
    if (cfg.width, cfg.height) == (64, 64):
        davis = upsample_trajectory(traj)
    else:
        w, h = events.sensor_dims
        davis = Trajectory(traj.t, traj.x * w / cfg.width, traj.y * h / cfg.height, DAVIS)
    err = None
    if ground_truth is not None and len(davis) >= 2:
        err = trajectory_error(davis, ground_truth)
    snaps = np.arange(snapshot_every, n_steps + 1, snapshot_every) - 1
    out = TrackerResult(cfg, res.spikes, l1, l2, traj, davis, err, snaps, n_steps, len(events))
    if out_dir is not None:
        d = Path(out_dir)
        write_trajectory_csv(d / "trajectory.csv", davis)
        write_trajectory_csv(d / "trajectory_grid.csv", traj)
        write_spikes_csv(d / "layer2_spikes.csv", l2)
        if err is not None:
            write_error_report(d / "error.txt", err)
        win = max(1, int(round(window_s / dt)))
        for name, log in (("layer1", l1), ("layer2", l2)):
            gray = to_gray(rate_heatmaps(log, tn.layout, snaps, win, dt))
            for k, img in zip(snaps.tolist(), gray):
                write_pgm(d / "heatmaps" / f"{name}_{k + 1:06d}.pgm", img)
    return out


def cue_from_davis(x: float, y: float, **kw) -> CueSpec:
    """Cue centred on the grid cell containing DAVIS pixel ``(x, y)``."""
    gx = min(int(x * 64 // 240), 63)
    gy = min(int(y * 64 // 180), 63)
    return CueSpec((gx, gy), **kw)


# --- frame ground truth ----------------------------------------------------

def read_frame_index(frames_dir) -> list[tuple[float, Path]]:
    """Frame timestamps and paths from ``images.txt`` (``t relative/path`` lines)."""
    d = Path(frames_dir)
    idx = d / "images.txt"
    if not idx.exists():
        raise FileNotFoundError(f"{idx} not found")
    out = []
    with open(idx) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise ValueError(f"{idx} line {lineno}: expected 't path', got {s!r}")
            out.append((float(parts[0]), d / parts[1]))
    return out


def load_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def extract_ground_truth(frames, start_xy, threshold: float = 128.0, min_area: int = 10,
                         dark: bool = True) -> Trajectory:
    """Centroid of the thresholded component nearest the previous position.

    ``frames`` yields ``(t, gray image)``; ``start_xy`` seeds the search in
    DAVIS pixels.  Frames with no component are skipped.
    """
    prev = np.asarray(start_xy, dtype=float)
    ts, xs, ys = [], [], []
    for t, img in frames:
        mask = img < threshold if dark else img > threshold
        lab, n = ndimage.label(mask)
        if n == 0:
            continue
        idx = np.arange(1, n + 1)
        area = ndimage.sum(mask, lab, idx)
        idx = idx[area >= min_area]
        if not len(idx):
            continue
        cy, cx = np.array(ndimage.center_of_mass(mask, lab, idx)).T.reshape(2, -1)
        k = int(np.argmin((cx - prev[0]) ** 2 + (cy - prev[1]) ** 2))
        prev = np.array([cx[k], cy[k]])
        ts.append(t)
        xs.append(cx[k])
        ys.append(cy[k])
    return Trajectory(ts, xs, ys, DAVIS)


@dataclass
class Excerpt:
    events: EventStream
    frames: list  # (t rebased, path)
    start_s: float
    duration_s: float


def load_excerpt(events_path, frames_dir=None, start_s: float = 0.0,
                 duration_s: float = 6.5) -> Excerpt:
    """Window of a recording (events plus optional frames), rebased to 0."""
    ev = read_events_window(events_path, start_s, start_s + duration_s)
    frames = []
    if frames_dir is not None:
        frames = [(t - start_s, p) for t, p in read_frame_index(frames_dir)
                  if start_s <= t < start_s + duration_s]
    return Excerpt(ev, frames, start_s, duration_s)


def frame_ground_truth(excerpt: Excerpt, start_xy, threshold: float = 128.0) -> Trajectory:
    return extract_ground_truth(((t, load_frame(p)) for t, p in excerpt.frames), start_xy,
                                threshold)


# --- benchmark -------------------------------------------------------------

@dataclass
class BenchRow:
    n_neurons: int
    n_synapses: int
    us_per_step: float
    steps: int
    spikes_per_step: float


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)

    def fit_exponent(self) -> float:
        """Slope of log(time) against log(synapse count)."""
        if len(self.rows) < 2:
            raise ValueError("need at least two sizes to fit")
        s = np.log([r.n_synapses for r in self.rows])
        t = np.log([r.us_per_step for r in self.rows])
        return float(np.polyfit(s, t, 1)[0])

    def table(self) -> str:
        lines = [f"{'neurons':>8} {'synapses':>10} {'us/step':>10} {'spikes/step':>12} "
                 f"{'steps':>6}"]
        for r in self.rows:
            lines.append(f"{r.n_neurons:>8} {r.n_synapses:>10} {r.us_per_step:>10.1f} "
                         f"{r.spikes_per_step:>12.2f} {r.steps:>6}")
        if len(self.rows) >= 2:
            lines.append(f"fit exponent (time vs synapses): {self.fit_exponent():.3f}")
        lines.append(f"context: Loihi hardware reported ~{LOIHI_STEP_US:.0f} us/step; "
                     "not a target for this CPU simulator")
        return "\n".join(lines)

    def write_csv(self, path):
        def _w(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_neurons", "n_synapses", "us_per_step", "steps", "spikes_per_step"])
            for r in self.rows:
                w.writerow([r.n_neurons, r.n_synapses, repr(r.us_per_step), r.steps,
                            repr(r.spikes_per_step)])
        atomic_write(path, _w)


def build_bump_field(side: int, cfg: TrackerConfig | None = None, cue_steps: int = 50):
    """Single self-sustained 2D field (selective-layer weights, self-coupled)
    with its inhibition pool, seeded by a central cue."""
    cfg = cfg or TrackerConfig(self_connection_l2=True)
    layout = PopulationLayout.grid(side, side)
    b = NetworkBuilder(dt=cfg.dt)
    b.add_population("field", layout.size, cfg.layer_neuron)
    b.add_population("pool", cfg.n_inh, cfg.pool_neuron)
    b.connect("field", "field", connect_lateral(layout, cfg.kernel(2)))
    spec = InhibitionPoolSpec(cfg.n_inh, cfg.p_connect, cfg.weight_to_pool,
                              cfg.pool_weight_l2, cfg.pool_neuron)
    ip = connect_global_inhibition(layout, spec, seed=cfg.pool_seed)
    b.connect("field", "pool", ip.to_pool)
    b.connect("pool", "field", ip.from_pool)
    apply_cue(b, layout, CueSpec((side // 2, side // 2), duration=cue_steps), target="field")
    return b.build()


def bench_step_time(sizes, steps: int = 1000, warmup: int = 100, seed: int = 0,
                    progress=None) -> BenchResult:
    """Median wall time per step of a bump network per size (``n`` → ``√n × √n``)."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    out = BenchResult()
    for n in sizes:
        side = max(1, int(round(math.sqrt(n))))
        net = build_bump_field(side)
        sim = Simulator(net, seed=seed)
        for _ in range(warmup):
            sim.step()
        dts = np.empty(steps)
        n_sp = 0
        for k in range(steps):
            t0 = time.perf_counter()
            n_sp += len(sim.step())
            dts[k] = time.perf_counter() - t0
        row = BenchRow(net.n_neurons, len(net.synapses), float(np.median(dts) * 1e6), steps,
                       n_sp / steps)
        out.rows.append(row)
        if progress:
            progress(row)
    return out
