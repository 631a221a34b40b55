"""Time one simulated step of a self-sustained 2D bump as the field grows.

    python3 demos/step_time.py [sizes]      # e.g. 1024,4096,9216,16384
"""
import sys

from dnftrack.harness import bench_step_time

if __name__ == "__main__":
    sizes = [int(s) for s in (sys.argv[1] if len(sys.argv) > 1 else "1024,4096,9216,16384")
             .split(",")]
    res = bench_step_time(sizes, progress=lambda r: print(f"  measured n={r.n_neurons}"))
    print(res.table())
