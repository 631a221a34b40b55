"""Command-line entry point: ``dnftrack {dnf1d,tracker,synth,bench,decode}``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .core import NetworkError, atomic_write, read_spikes_csv
from .events import EventFormatError, write_events
from .models import Dnf1dConfig, TrackerConfig, dump_config, load_config, replace
from .readout import (Trajectory, extract_trajectory, trajectory_error,
                      upsample_trajectory, write_error_report, write_trajectory_csv)
from .synth import (SyntheticSceneSpec, gen_synthetic_events, read_objects_csv,
                    write_objects_csv)


def _load_model(path, want):
    if path is None:
        return None
    cfg = load_config(Path(path).read_text())
    if not isinstance(cfg, want):
        raise ValueError(f"{path}: config kind does not match this command")
    return cfg


def _dt(args, default: float) -> float:
    if args.dt_us is None:
        return default
    if args.dt_us <= 0:
        raise ValueError("--dt-us must be positive")
    return args.dt_us * 1e-6


def _pair(text: str) -> tuple:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return a, b


def _write_text(path, text: str):
    atomic_write(path, lambda fh: fh.write(text))


def _out(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_dnf1d(args) -> int:
    cfg = _load_model(args.config, Dnf1dConfig)
    if cfg is None:
        cfg = (Dnf1dConfig.self_sustained() if args.regime == "self_sustained"
               else Dnf1dConfig.input_driven())
    cfg = replace(cfg, dt=_dt(args, cfg.dt))
    out = _out(args)
    res = harness.run_dnf1d(cfg, args.scenario, seed=args.seed, n_steps=args.steps,
                            out_dir=out)
    _write_text(out / "config.txt", dump_config(cfg))
    print(f"{args.scenario}: {len(res.spikes)} output spikes over {res.n_steps} steps")
    return 0


def cmd_tracker(args) -> int:
    cfg = _load_model(args.config, TrackerConfig) or TrackerConfig()
    cfg = replace(cfg, dt=_dt(args, cfg.dt))
    n_steps = args.steps or 6500
    harness.ExperimentConfig("tracker", n_steps, cfg.dt, args.seed, args.out, args.events,
                             args.frames, cfg, args.start_s).validate()
    gt = None
    if args.gt is not None:
        gt = read_objects_csv(args.gt, args.gt_object)
        keep = gt.t >= args.start_s - 1e-12
        gt = Trajectory(gt.t[keep] - args.start_s, gt.x[keep], gt.y[keep], gt.frame)
        if args.cue is None and len(gt):
            # cue the tracked object where it starts
            c = harness.cue_from_davis(gt.x[0], gt.y[0])
            cfg = replace(cfg, cue=replace(cfg.cue, center=c.center))
    if args.cue is not None:
        cfg = replace(cfg, cue=replace(cfg.cue, center=tuple(int(v) for v in args.cue)))
    duration = n_steps * cfg.dt
    ex = harness.load_excerpt(args.events, args.frames, args.start_s, duration)
    if gt is None and args.frames is not None:
        start = harness.cell_center_to_davis(*cfg.cue.center)
        gt = harness.frame_ground_truth(ex, start, args.gt_threshold)
    out = _out(args)
    res = harness.run_tracker(cfg, ex.events, n_steps, seed=args.seed, ground_truth=gt,
                              out_dir=out)
    if gt is not None and args.frames is not None:
        write_trajectory_csv(out / "ground_truth.csv", gt)
    _write_text(out / "config.txt", dump_config(cfg))
    print(f"{res.n_events} events, {len(res.layer2)} layer-2 spikes, "
          f"{len(res.trajectory)} trajectory samples")
    if res.error is not None:
        print(res.error.summary(), end="")
    return 0


def cmd_synth(args) -> int:
    dt = _dt(args, 5e-4)
    n_steps = args.steps or 3000
    duration = n_steps * dt
    omega = 2 * math.pi / args.period_s if args.period_s else 0.0
    if args.scene == "ring":
        spec = SyntheticSceneSpec.ring_of_dots(duration=duration, angular_velocity=omega,
                                               events_per_crossing=args.epc)
    else:
        spec = SyntheticSceneSpec.dot(radius=7.0, center=(120.0, 90.0), orbit_radius=50.0,
                                      angular_velocity=omega, duration=duration,
                                      events_per_crossing=args.epc)
    ev = gen_synthetic_events(spec, seed=args.seed)
    out = _out(args)
    write_events(out / ("events.bin" if args.binary else "events.txt"), ev, binary=args.binary)
    write_objects_csv(out / "objects.csv", spec)
    x0, y0 = spec.objects[0].position(0.0)
    cue = harness.cue_from_davis(float(x0), float(y0))
    print(f"{len(ev)} events over {duration:g} s; object 0 starts in cell "
          f"{cue.center[0]},{cue.center[1]}")
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    res = harness.bench_step_time(sizes, steps=args.steps or 1000, seed=args.seed,
                                  progress=lambda r: print(
                                      f"  n={r.n_neurons}: {r.us_per_step:.1f} us/step",
                                      file=sys.stderr))
    out = _out(args)
    res.write_csv(out / "bench.csv")
    print(res.table())
    return 0


def cmd_decode(args) -> int:
    cfg = _load_model(args.config, TrackerConfig) or TrackerConfig()
    dt = _dt(args, cfg.dt)
    log = read_spikes_csv(args.spikes)
    if len(log) and log.neuron.max() >= cfg.layout.size:
        raise ValueError(f"spike ids exceed the {cfg.width}x{cfg.height} layer")
    n_steps = args.steps or (int(log.t.max()) + 1 if len(log) else 1)
    traj = upsample_trajectory(extract_trajectory(log, cfg.layout, np.arange(n_steps) * dt, dt))
    out = _out(args)
    write_trajectory_csv(out / "trajectory.csv", traj)
    print(f"{len(traj)} trajectory samples")
    if args.gt is not None:
        rep = trajectory_error(traj, read_objects_csv(args.gt, args.gt_object))
        write_error_report(out / "error.txt", rep)
        print(rep.summary(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnftrack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, steps_help="number of timesteps"):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--steps", type=int, help=steps_help)
        sp.add_argument("--dt-us", type=float, help="microseconds per timestep")

    sp = sub.add_parser("dnf1d", help="1D field scenarios")
    common(sp)
    sp.add_argument("--scenario", default="bimodal", choices=harness.SCENARIOS)
    sp.add_argument("--regime", default="input_driven",
                    choices=("input_driven", "self_sustained"))
    sp.set_defaults(func=cmd_dnf1d)

    sp = sub.add_parser("tracker", help="two-layer tracking on an event file")
    common(sp, "number of timesteps (default 6500)")
    sp.add_argument("--events", required=True, help="text or EVT1 binary event file")
    sp.add_argument("--frames", help="directory with images.txt and frames")
    sp.add_argument("--gt", help="objects.csv ground truth (from synth)")
    sp.add_argument("--gt-object", type=int, default=0)
    sp.add_argument("--gt-threshold", type=float, default=128.0)
    sp.add_argument("--start-s", type=float, default=0.0,
                    help="excerpt start within the recording; results depend on it")
    sp.add_argument("--cue", type=_pair, help="cue grid cell 'gx,gy'")
    sp.set_defaults(func=cmd_tracker)

    sp = sub.add_parser("synth", help="synthetic event scene with ground truth")
    common(sp, "scene length in timesteps (default 3000)")
    sp.add_argument("--scene", default="ring", choices=("ring", "dot"))
    sp.add_argument("--period-s", type=float, default=4.0, help="rotation period")
    sp.add_argument("--epc", type=float, default=3.0, help="events per edge crossing")
    sp.add_argument("--binary", action="store_true", help="write EVT1 binary events")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("bench", help="step-time benchmark")
    common(sp, "measured steps per size (default 1000)")
    sp.add_argument("--sizes", default="1024,4096,9216,16384")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("decode", help="layer spike CSV to trajectory")
    common(sp, "number of samples (default: last spike + 1)")
    sp.add_argument("--spikes", required=True, help="t,neuron CSV of layer-local ids")
    sp.add_argument("--gt", help="objects.csv ground truth")
    sp.add_argument("--gt-object", type=int, default=0)
    sp.set_defaults(func=cmd_decode)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "steps", None) is not None and args.steps < 1:
        print("error: --steps must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError, EventFormatError, NetworkError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
