"""Expensive ensemble runs shared by the acceptance tests, cached on disk.

Each case is keyed by its name, its configuration and a digest of the source
files its dynamics depend on, so editing a propagator invalidates exactly the
cases that use it.  Set ``AFSSHLAB_ACCEPTANCE_CACHE`` to relocate it.

Run ``python tests/acceptance_runs.py [case ...]`` to fill the cache ahead of
a test session.
"""

from __future__ import annotations

import hashlib
import os
import pickle
import sys
import time
from pathlib import Path

import afsshlab
from afsshlab.heom import HEOMConfig, propagate_heom
from afsshlab.model import STANDARD_PARAMS
from afsshlab.surface_hopping import DecoherenceConfig, SimConfig, estimate_decoherence_time, run_ensemble

PKG_DIR = Path(afsshlab.__file__).resolve().parent
COMMON_SOURCES = ("units.py", "model.py", "_accel.py")
TRAJECTORY_SOURCES = COMMON_SOURCES + ("surface_hopping/core.py", "surface_hopping/kernels.py")
HIERARCHY_SOURCES = COMMON_SOURCES + ("heom.py",)
CACHE_DIR = Path(os.environ.get("AFSSHLAB_ACCEPTANCE_CACHE", Path.home() / ".cache" / "afsshlab" / "acceptance"))

P = STANDARD_PARAMS

AFSSH_TRAJ = 2000
FSSH_TRAJ = 2000
HORIZON_PS = 150.0
# FSSH relaxes on the golden-rule time scale; each horizon covers at least 5/k_total
FSSH_HORIZON_PS = {150.0: 500.0, 300.0: 400.0, 600.0: 150.0}
SELF_CONSISTENCY_TRAJ = 100_000


def _afssh():
    cfg = SimConfig(n_trajectories=AFSSH_TRAJ, dt_fs=0.25, t_max_ps=HORIZON_PS, output_stride=4000,
                    decoherence=DecoherenceConfig("afssh"), hop_log_capacity=4096)
    return P, cfg


def _fssh(temperature):
    cfg = SimConfig(n_trajectories=FSSH_TRAJ, dt_fs=0.2, t_max_ps=FSSH_HORIZON_PS[temperature], output_stride=5000,
                    decoherence=DecoherenceConfig("none"), hop_log_capacity=0)
    return P.with_(temperature=temperature), cfg


def _self_consistency(surface):
    cfg = SimConfig(n_trajectories=SELF_CONSISTENCY_TRAJ, dt_fs=0.1, t_max_ps=1.0, output_stride=50,
                    decoherence=DecoherenceConfig("none"), initial_surface=surface, hop_log_capacity=0)
    return P, cfg


TAU_POINTS = {"standard": P, "lambda5": P.with_(lam=5.0), "T50": P.with_(temperature=50.0)}


def _tau(name):
    return TAU_POINTS[name], SimConfig()


def _heom():
    return P, HEOMConfig(L=8, K=0, dt=0.05, t_max=400_000.0, output_every=200.0)


CASES = {
    "afssh_standard": (_afssh, lambda p, c: run_ensemble(p, c)),
    "fssh_T150": (lambda: _fssh(150.0), lambda p, c: run_ensemble(p, c)),
    "fssh_T300": (lambda: _fssh(300.0), lambda p, c: run_ensemble(p, c)),
    "fssh_T600": (lambda: _fssh(600.0), lambda p, c: run_ensemble(p, c)),
    "tau_standard": (lambda: _tau("standard"), lambda p, c: _tau_run(p, c)),
    "tau_lambda5": (lambda: _tau("lambda5"), lambda p, c: _tau_run(p, c)),
    "tau_T50": (lambda: _tau("T50"), lambda p, c: _tau_run(p, c)),
    "self_consistency_lower": (lambda: _self_consistency("lower"), lambda p, c: run_ensemble(p, c)),
    "self_consistency_upper": (lambda: _self_consistency("upper"), lambda p, c: run_ensemble(p, c)),
    "heom_standard": (_heom, lambda p, c: propagate_heom(p, c)),
}


def _tau_run(params, cfg):
    tau, info = estimate_decoherence_time(params, cfg.n_trajectories, cfg.t_max_ps, cfg, return_details=True)
    return {"tau": tau, "stderr_fs": info["stderr_fs"], "mean_collapses": info["mean_collapses"]}


def source_digest(sources) -> str:
    h = hashlib.sha256()
    for rel in sources:
        h.update(rel.encode())
        h.update((PKG_DIR / rel).read_bytes())
    return h.hexdigest()


def cache_path(name: str) -> Path:
    params, cfg = CASES[name][0]()
    sources = HIERARCHY_SOURCES if name.startswith("heom") else TRAJECTORY_SOURCES
    key = hashlib.sha256(f"{name}|{params!r}|{cfg!r}|{source_digest(sources)}".encode()).hexdigest()[:16]
    return CACHE_DIR / f"{name}-{key}.pkl"


def load(name: str):
    """Return ``(result, seconds)`` for a case, computing and caching on a miss."""
    path = cache_path(name)
    if path.is_file():
        with path.open("rb") as fh:
            return pickle.load(fh)
    params, cfg = CASES[name][0]()
    t0 = time.perf_counter()
    result = CASES[name][1](params, cfg)
    payload = (result, time.perf_counter() - t0)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        pickle.dump(payload, fh)
    tmp.replace(path)
    return payload


if __name__ == "__main__":
    for name in sys.argv[1:] or list(CASES):
        _, seconds = load(name)
        print(f"{name}: {seconds:.0f} s", flush=True)
