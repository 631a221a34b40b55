"""Spike-log decoding: firing rates, population vectors and trajectories."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import SpikeLog, atomic_write
from .topology import PopulationLayout

GRID64 = "grid64"
DAVIS = "davis240x180"
FRAME_BOUNDS = {GRID64: (64.0, 64.0), DAVIS: (240.0, 180.0)}
UPSAMPLE = (240 / 64, 180 / 64)


class NoEstimate(Exception):
    """Raised when rates carry no position information (all zero)."""


def instantaneous_rate(spike_times, t: float, timeout: float = 0.1) -> float:
    """``1 / ISI`` of the last two spikes at or before ``t`` (seconds).

    Zero with fewer than two spikes or when the last spike is older than
    ``timeout``.
    """
    st = np.asarray(spike_times, dtype=float)
    k = int(np.searchsorted(st, t, side="right"))
    if k < 2:
        return 0.0
    last, prev = st[k - 1], st[k - 2]
    if t - last > timeout or last <= prev:
        return 0.0
    return 1.0 / (last - prev)


def instantaneous_rates(log: SpikeLog, n: int, t: float, dt: float,
                        timeout: float = 0.1) -> np.ndarray:
    """ISI rates of neurons ``0..n-1`` at time ``t``; ``log`` times are steps."""
    return isi_rate_matrix(log, n, np.array([t]), dt, timeout)[0]


def isi_rate_matrix(log: SpikeLog, n: int, times, dt: float, timeout: float = 0.1) -> np.ndarray:
    """``(len(times), n)`` ISI rates; vectorised over neurons with spikes."""
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(times), n))
    if not len(log):
        return out
    order = np.lexsort((log.t, log.neuron))
    nrn, st = log.neuron[order], log.t[order].astype(float) * dt
    bounds = np.flatnonzero(np.diff(nrn)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(nrn)]])
    for a, b in zip(starts.tolist(), ends.tolist()):
        i = int(nrn[a])
        if i >= n or b - a < 2:
            continue
        s = st[a:b]
        k = np.searchsorted(s, times + 1e-12 * dt, side="right")
        ok = k >= 2
        kk = np.where(ok, k, 2)
        last, prev = s[kk - 1], s[kk - 2]
        ok &= (times - last) <= timeout + 1e-12
        ok &= last > prev
        out[ok, i] = 1.0 / (last[ok] - prev[ok])
    return out


def population_vector(rates, layout: PopulationLayout) -> np.ndarray:
    """Rate-weighted mean of neuron coordinates; raises :class:`NoEstimate`."""
    rates = np.asarray(rates, dtype=float)
    total = rates.sum()
    if not total > 0:
        raise NoEstimate("all rates are zero")
    return (rates[:, None] * layout.coords()).sum(axis=0) / total


def rect_filter_rates(log: SpikeLog, n: int, t: float, dt: float,
                      window: float = 0.05) -> np.ndarray:
    """Per-neuron spike count in ``[t - window, t]`` divided by ``window``."""
    if not window > 0:
        raise ValueError("window must be positive")
    ts = log.t.astype(float) * dt
    m = (ts >= t - window - 1e-12) & (ts <= t + 1e-12)
    return np.bincount(log.neuron[m], minlength=n)[:n] / window


def rect_filter_steps(log: SpikeLog, n: int, step: int, window_steps: int) -> np.ndarray:
    """Counts over the half-open step window ``(step - window_steps, step]``."""
    m = (log.t > step - window_steps) & (log.t <= step)
    return np.bincount(log.neuron[m], minlength=n)[:n]


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    frame: str = GRID64

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if not (len(self.t) == len(self.x) == len(self.y)):
            raise ValueError("trajectory columns differ in length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.frame not in FRAME_BOUNDS:
            raise ValueError(f"unknown frame {self.frame!r}")

    def __len__(self):
        return len(self.t)

    def xy(self) -> np.ndarray:
        return np.stack([self.x, self.y], axis=1)

    def at(self, t) -> np.ndarray:
        """Linear interpolation; NaN outside ``[t[0], t[-1]]``."""
        t = np.asarray(t, dtype=float)
        if not len(self.t):
            return np.full(t.shape + (2,), np.nan)
        x = np.interp(t, self.t, self.x)
        y = np.interp(t, self.t, self.y)
        out = np.stack([x, y], axis=-1)
        eps = 1e-9
        out[(t < self.t[0] - eps) | (t > self.t[-1] + eps)] = np.nan
        return out

    def in_bounds(self) -> bool:
        w, h = FRAME_BOUNDS[self.frame]
        return bool(np.all((self.x >= 0) & (self.x <= w) & (self.y >= 0) & (self.y <= h)))


def extract_trajectory(log: SpikeLog, layout: PopulationLayout, sample_times, dt: float,
                       timeout: float = 0.1) -> Trajectory:
    """Population vector of ISI rates at each sample time (seconds).

    ``log`` must be relabelled to local ids of ``layout``.  Samples without an
    estimate are dropped.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) <= 0):
        raise ValueError("sample times must be increasing")
    R = isi_rate_matrix(log, layout.size, sample_times, dt, timeout)
    tot = R.sum(axis=1)
    ok = tot > 0
    pos = (R[ok] @ layout.coords()) / tot[ok, None]
    if layout.ndim == 1:
        return Trajectory(sample_times[ok], pos[:, 0], np.zeros(ok.sum()), GRID64)
    return Trajectory(sample_times[ok], pos[:, 0], pos[:, 1], GRID64)


def upsample_trajectory(traj: Trajectory) -> Trajectory:
    if traj.frame != GRID64:
        raise ValueError(f"expected a {GRID64} trajectory, got {traj.frame}")
    return Trajectory(traj.t, traj.x * UPSAMPLE[0], traj.y * UPSAMPLE[1], DAVIS)


def cell_center_to_davis(gx, gy):
    """DAVIS-pixel position of a grid cell for the floor downsampling map."""
    return (np.asarray(gx) + 0.5) * UPSAMPLE[0], (np.asarray(gy) + 0.5) * UPSAMPLE[1]


def davis_to_grid(traj: Trajectory) -> Trajectory:
    """Continuous grid coordinates of DAVIS positions; inverse of :func:`cell_center_to_davis`."""
    if traj.frame != DAVIS:
        raise ValueError(f"expected a {DAVIS} trajectory, got {traj.frame}")
    return Trajectory(traj.t, traj.x / UPSAMPLE[0] - 0.5, traj.y / UPSAMPLE[1] - 0.5, GRID64)


@dataclass
class ErrorReport:
    mean_px: float
    best_offset_s: float
    n_frames: int
    max_px: float = float("nan")  # worst frame at the best offset

    def summary(self) -> str:
        return (f"mean_px {self.mean_px:.4f}\n"
                f"best_offset_s {self.best_offset_s:.4f}\n"
                f"n_frames {self.n_frames}\n"
                f"max_px {self.max_px:.4f}\n")


def trajectory_error(traj: Trajectory, ground_truth: Trajectory, offset_range: float = 0.05,
                     offset_step: float = 0.001) -> ErrorReport:
    """Minimum over offsets of the mean distance between ``traj`` sampled at
    ``frame time + offset`` and the ground-truth frames.

    A positive offset means ``traj`` lags the ground truth.  Ties go to the
    offset of smallest magnitude.
    """
    if traj.frame != ground_truth.frame:
        raise ValueError(f"frames differ: {traj.frame} vs {ground_truth.frame}")
    k = int(round(offset_range / offset_step))
    offsets = np.arange(-k, k + 1) * offset_step
    gt = ground_truth.xy()
    best = None
    for off in sorted(offsets, key=lambda o: (abs(o), o)):
        p = traj.at(ground_truth.t + off)
        ok = ~np.isnan(p[:, 0])
        if not ok.any():
            continue
        d = p[ok] - gt[ok]
        dist = np.hypot(d[:, 0], d[:, 1])
        d = dist.mean()
        if best is None or d < best[0] - 1e-12:
            best = (float(d), float(off), int(ok.sum()), float(dist.max()))
    if best is None:
        raise ValueError("trajectories have no overlapping time support")
    return ErrorReport(*best)


def write_trajectory_csv(path, traj: Trajectory):
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "frame"])
        for t, x, y in zip(traj.t.tolist(), traj.x.tolist(), traj.y.tolist()):
            w.writerow([repr(t), repr(x), repr(y), traj.frame])
    atomic_write(path, _w)


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        rows = list(r)
    if not rows:
        return Trajectory([], [], [], GRID64)
    frame = rows[0].get("frame", GRID64)
    return Trajectory([float(r["t"]) for r in rows], [float(r["x"]) for r in rows],
                      [float(r["y"]) for r in rows], frame)


def write_error_report(path, rep: ErrorReport):
    atomic_write(path, lambda fh: fh.write(rep.summary()))
