"""Synthetic event scenes with analytic ground truth.

Objects are discs moving on circular orbits or straight lines.  Each
sub-step, pixels newly covered by a disc emit events of the object's
contrast polarity and uncovered pixels emit the opposite polarity; every
such crossing yields ``Poisson(events_per_crossing)`` events with uniform
timestamps inside the sub-step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import atomic_write
from .events import DAVIS_DIMS, EventStream
from .readout import Trajectory


@dataclass(frozen=True)
class SceneObject:
    """A disc. Circular motion if ``orbit_radius > 0``, else linear.

    ``contrast`` is +1 for an object brighter than the background (its
    leading edge emits on-events) and -1 for a darker one.
    """

    radius: float = 6.0
    center: tuple = (120.0, 90.0)
    orbit_radius: float = 0.0
    angular_velocity: float = 0.0  # rad/s
    phase: float = 0.0
    velocity: tuple = (0.0, 0.0)  # px/s
    contrast: int = 1

    def position(self, t):
        t = np.asarray(t, dtype=float)
        if self.orbit_radius > 0:
            a = self.phase + self.angular_velocity * t
            return (self.center[0] + self.orbit_radius * np.cos(a),
                    self.center[1] + self.orbit_radius * np.sin(a))
        return (self.center[0] + self.velocity[0] * t, self.center[1] + self.velocity[1] * t)


@dataclass
class SyntheticSceneSpec:
    objects: list = field(default_factory=list)
    duration: float = 1.0
    sensor_dims: tuple = DAVIS_DIMS
    events_per_crossing: float = 1.0
    substep: float = 2.5e-4
    frame_rate: float = 200.0

    def __post_init__(self):
        if not self.objects:
            raise ValueError("scene needs at least one object")
        for o in self.objects:
            vals = (o.angular_velocity, o.velocity[0], o.velocity[1], o.orbit_radius)
            if not all(math.isfinite(v) for v in vals):
                raise ValueError("object velocities must be finite")

    @classmethod
    def dot(cls, **kw) -> "SyntheticSceneSpec":
        obj_kw = {k: kw.pop(k) for k in list(kw) if k in SceneObject.__dataclass_fields__}
        return cls(objects=[SceneObject(**obj_kw)], **kw)

    @classmethod
    def ring_of_dots(cls, n_dots: int = 5, center=(120.0, 90.0), orbit_radius: float = 55.0,
                     dot_radius: float = 7.0, angular_velocity: float = 2 * math.pi / 4.0,
                     contrast: int = 1, **kw) -> "SyntheticSceneSpec":
        objs = [SceneObject(dot_radius, tuple(center), orbit_radius, angular_velocity,
                            2 * math.pi * k / n_dots, contrast=contrast)
                for k in range(n_dots)]
        return cls(objects=objs, **kw)


def _occupancy(obj: SceneObject, t: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    cx, cy = obj.position(t)
    # pixel centres at integer + 0.5
    return (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2 <= obj.radius ** 2


def gen_synthetic_events(spec: SyntheticSceneSpec, seed: int = 0) -> EventStream:
    rng = np.random.default_rng(seed)
    w, h = spec.sensor_dims
    n_sub = int(round(spec.duration / spec.substep))
    ts, xs_out, ys_out, ps = [], [], [], []
    for obj in spec.objects:
        pad = obj.radius + 2
        # bounding box of the whole path, clipped to the sensor
        tt = np.linspace(0, spec.duration, max(n_sub + 1, 2))
        px, py = obj.position(tt)
        px, py = np.broadcast_to(px, tt.shape), np.broadcast_to(py, tt.shape)
        x0, x1 = max(int(np.floor(px.min() - pad)), 0), min(int(np.ceil(px.max() + pad)), w)
        y0, y1 = max(int(np.floor(py.min() - pad)), 0), min(int(np.ceil(py.max() + pad)), h)
        if x0 >= x1 or y0 >= y1:
            continue
        for k in range(n_sub):
            t_a = k * spec.substep
            ca, cb = obj.position(t_a), obj.position(t_a + spec.substep)
            if ca == cb:
                continue
            lx0 = max(int(min(ca[0], cb[0]) - pad), x0)
            lx1 = min(int(max(ca[0], cb[0]) + pad) + 1, x1)
            ly0 = max(int(min(ca[1], cb[1]) - pad), y0)
            ly1 = min(int(max(ca[1], cb[1]) + pad) + 1, y1)
            if lx0 >= lx1 or ly0 >= ly1:
                continue
            gx, gy = np.meshgrid(np.arange(lx0, lx1), np.arange(ly0, ly1), indexing="xy")
            before = _occupancy(obj, t_a, gx, gy)
            after = _occupancy(obj, t_a + spec.substep, gx, gy)
            for mask, pol in ((after & ~before, obj.contrast > 0),
                              (before & ~after, obj.contrast < 0)):
                if not mask.any():
                    continue
                cx, cy = gx[mask], gy[mask]
                counts = rng.poisson(spec.events_per_crossing, size=len(cx))
                tot = int(counts.sum())
                if not tot:
                    continue
                ts.append(t_a + rng.random(tot) * spec.substep)
                xs_out.append(np.repeat(cx, counts))
                ys_out.append(np.repeat(cy, counts))
                ps.append(np.full(tot, 1 if pol else 0, dtype=np.int8))
    if not ts:
        return EventStream(sensor_dims=spec.sensor_dims)
    return EventStream(np.concatenate(ts), np.concatenate(xs_out), np.concatenate(ys_out),
                       np.concatenate(ps), spec.sensor_dims)


def ground_truth(spec: SyntheticSceneSpec, obj: int = 0, frame_rate: float | None = None,
                 t0: float = 0.0) -> Trajectory:
    """Analytic centre of object ``obj`` at frame timestamps, DAVIS pixels."""
    rate = frame_rate or spec.frame_rate
    n = int(math.floor(spec.duration * rate + 1e-9)) + 1
    t = t0 + np.arange(n) / rate
    x, y = spec.objects[obj].position(t - t0)
    x = np.broadcast_to(x, t.shape).astype(float)
    y = np.broadcast_to(y, t.shape).astype(float)
    return Trajectory(t, x, y, "davis240x180")


def write_objects_csv(path, spec: SyntheticSceneSpec, frame_rate: float | None = None):
    def _w(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "object", "x", "y"])
        for k in range(len(spec.objects)):
            gt = ground_truth(spec, k, frame_rate)
            for t, x, y in zip(gt.t.tolist(), gt.x.tolist(), gt.y.tolist()):
                w.writerow([repr(t), k, repr(x), repr(y)])
    atomic_write(path, _w)


def read_objects_csv(path, obj: int = 0) -> Trajectory:
    """Ground truth of one object from a :func:`write_objects_csv` file."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if int(r["object"]) == obj]
    if not rows:
        raise ValueError(f"{path}: no rows for object {obj}")
    return Trajectory([float(r["t"]) for r in rows], [float(r["x"]) for r in rows],
                      [float(r["y"]) for r in rows], "davis240x180")
