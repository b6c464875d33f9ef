"""Time the compiled kernels against the plain numpy fallback.

The backend is fixed at import time, so each backend runs in its own
subprocess with ``AFSSHLAB_DISABLE_NUMBA`` set accordingly.

    python benchmarks/bench_kernels.py [--trajectories 4] [--t-max-ps 0.5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from afsshlab._accel import backend_name
from afsshlab.model import STANDARD_PARAMS as P
from afsshlab.surface_hopping import SimConfig, run_ensemble
from afsshlab.surface_hopping import kernels as K

n_traj, t_max = int(sys.argv[1]), float(sys.argv[2])
out = {"backend": backend_name()}

# warm-up compiles the kernels; not timed
run_ensemble(P, SimConfig(n_trajectories=1, t_max_ps=0.01, output_stride=4))

c = np.array([0.6, 0.8j])
t0 = time.perf_counter()
for _ in range(2000):
    K.electronic_step(c, -300.0, -301.0, 1e-3, 1.1e-3, 0.25, 20, 5308.8375, 1)
out["electronic_step_us"] = (time.perf_counter() - t0) / 2000 * 1e6

cfg = SimConfig(n_trajectories=n_traj, t_max_ps=t_max, output_stride=400)
t0 = time.perf_counter()
run_ensemble(P, cfg)
elapsed = time.perf_counter() - t0
out["trajectory_ps_ms"] = elapsed / (n_traj * t_max) * 1e3
out["step_us"] = elapsed / (n_traj * cfg.n_steps) * 1e6
print(json.dumps(out))
"""


def measure(disable: bool, n_traj: int, t_max: float) -> dict:
    env = {**os.environ, "AFSSHLAB_DISABLE_NUMBA": "1" if disable else "0"}
    proc = subprocess.run([sys.executable, "-c", WORKER, str(n_traj), str(t_max)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trajectories", type=int, default=4)
    ap.add_argument("--t-max-ps", type=float, default=0.5)
    args = ap.parse_args(argv)

    compiled = measure(False, args.trajectories, args.t_max_ps)
    # the interpreted path is roughly two orders slower; keep its workload small
    plain = measure(True, 1, min(args.t_max_ps, 0.05))
    print(f"{'quantity':<26}{compiled['backend']:>14}{plain['backend']:>14}{'speed-up':>10}")
    for key, label in (("electronic_step_us", "TDSE step (us)"), ("step_us", "full MD step (us)"),
                       ("trajectory_ps_ms", "trajectory-ps (ms)")):
        a, b = compiled[key], plain[key]
        print(f"{label:<26}{a:>14.2f}{b:>14.2f}{b / a:>10.0f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
