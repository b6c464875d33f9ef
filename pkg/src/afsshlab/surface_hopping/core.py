"""Trajectory ensembles for FSSH and A-FSSH on the discretized spin-boson bath."""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import AdiabaticInfo, DiscretizedBath, SpinBosonParams, adiabatize, build_bath, sample_thermal
from ..units import HBAR
from . import kernels as K

__all__ = [
    "DecoherenceConfig",
    "SimConfig",
    "TrajectoryState",
    "EnsembleResult",
    "TrajectoryAbort",
    "initial_state",
    "propagate_electronic",
    "propagate_nuclear",
    "hop_probability",
    "attempt_hop",
    "apply_decoherence",
    "diabatic_populations",
    "run_ensemble",
    "estimate_decoherence_time",
    "write_population_csv",
    "POPULATION_COLUMNS",
]

POPULATION_COLUMNS = ("time_fs", "P_D", "P_A", "P_ad1", "P_ad2", "c1sq", "c2sq")
DECOHERENCE_MODES = ("none", "constant_tau", "afssh")
INITIAL_SURFACES = ("donor", "donor_diabat", "lower", "upper")


class TrajectoryAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoherenceConfig:
    """``mode`` is ``none``, ``constant_tau`` (needs ``tau`` in fs) or ``afssh``.

    ``moment_weight`` picks how the inactive-state momentum moment is driven:
    ``population`` scales the force difference by ``|c_n|^2`` (the diagonal
    limit of the full moment equations), ``half_plus`` by ``(|c_n|^2 + 1)/2``.
    """

    mode: str = "afssh"
    tau: float | None = None
    moment_weight: str = "population"
    reset: bool = False

    def __post_init__(self):
        if self.mode == "afssh_moments":
            object.__setattr__(self, "mode", "afssh")
        if self.mode not in DECOHERENCE_MODES:
            raise ValueError(f"decoherence mode must be one of {DECOHERENCE_MODES}, got {self.mode!r}")
        if self.mode == "constant_tau" and not (self.tau is not None and self.tau > 0):
            raise ValueError("constant_tau needs tau > 0")
        if self.moment_weight not in ("population", "half_plus"):
            raise ValueError("moment_weight must be 'population' or 'half_plus'")

    @property
    def code(self) -> int:
        return {"none": K.DECO_NONE, "constant_tau": K.DECO_TAU, "afssh": K.DECO_AFSSH}[self.mode]


@dataclass(frozen=True)
class SimConfig:
    n_trajectories: int = 1000
    dt_fs: float = 0.25
    t_max_ps: float = 10.0
    output_stride: int = 400  # nuclear steps between recorded frames
    decoherence: DecoherenceConfig = field(default_factory=DecoherenceConfig)
    master_seed: int = 12345
    n_modes: int = 300
    n_sub: int = 20
    integrator: str = "split"  # "split" or "verlet"
    initial_surface: str = "donor"  # "donor", "donor_diabat", "lower" or "upper"
    threads: int = 1
    hop_log_capacity: int = 4096
    collapse_log_capacity: int = 0

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.dt_fs <= 0 or self.t_max_ps <= 0 or self.output_stride < 1 or self.n_sub < 1:
            raise ValueError("dt_fs, t_max_ps, output_stride and n_sub must be positive")
        if self.integrator not in ("split", "verlet"):
            raise ValueError("integrator must be 'split' or 'verlet'")
        if self.initial_surface not in INITIAL_SURFACES:
            raise ValueError(f"initial_surface must be one of {INITIAL_SURFACES}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max_ps * 1000.0 / self.dt_fs))

    def with_(self, **changes) -> "SimConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class TrajectoryState:
    """Nuclear phase space, adiabatic amplitudes, active surface and A-FSSH moments.

    The moments are kept as projections on the coupling direction g-hat: the
    force difference between the adiabats is always parallel to g, so moments
    that start at zero never develop other components.
    """

    x: np.ndarray
    p: np.ndarray
    c: np.ndarray
    active: int
    moment_r: float = 0.0
    moment_p: float = 0.0
    time: float = 0.0
    n_collapses: int = 0
    hops: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.c = np.asarray(self.c, dtype=complex)
        if self.c.shape != (2,) or self.active not in (0, 1):
            raise ValueError("amplitudes must have two entries and active must be 0 or 1")

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.c) ** 2))


class _BathArrays:
    """Per-mode constants used by the kernels."""

    def __init__(self, params: SpinBosonParams, bath: DiscretizedBath, dt: float):
        self.g = np.ascontiguousarray(bath.coupling, dtype=float)
        self.gnorm = float(np.linalg.norm(self.g))
        self.mass = float(bath.mass)
        w = bath.omega
        self.mw2 = self.mass * w**2
        self.xc = -self.g / (2.0 * self.mw2)
        # rotation coefficients for the split integrator
        self.cosw = np.cos(w * dt)
        self.sinw = np.sin(w * dt) / (self.mass * w)
        self.momega = self.mass * w * np.sin(w * dt)
        self.offset = params.delta_g + params.lam
        self.vc = float(params.vc)


def _coord(bath: DiscretizedBath, x) -> float:
    return float(np.dot(bath.coupling, x))


def _donor_adiabat(info: AdiabaticInfo) -> int:
    return int(np.argmax(np.abs(info.rotation[0, :])))


def initial_state(params: SpinBosonParams, bath: DiscretizedBath, surface: str = "donor", rng_seed=None) -> TrajectoryState:
    """Thermal sample around the donor (or chosen) minimum plus initial amplitudes.

    ``donor``: unit amplitude on whichever adiabat is donor-like.
    ``donor_diabat``: the electronic state is the donor diabat written in the
    local adiabatic basis, with the active surface drawn from those weights,
    so the mixed population estimator starts at P_D = 1 on average.
    ``upper``/``lower``: unit amplitude on that adiabat, sampled around the
    minimum of the diabat it resembles.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    c = np.zeros(2, complex)
    if surface in ("donor", "donor_diabat"):
        ps = sample_thermal(params, bath, "donor", rng)
        info = adiabatize(params, bath, ps.x)
        if surface == "donor_diabat":
            c[:] = info.rotation[0, :]
            active = int(rng.random() >= abs(c[0]) ** 2)
        else:
            active = _donor_adiabat(info)
            c[active] = 1.0
    elif surface in ("lower", "upper"):
        active = 0 if surface == "lower" else 1
        # in the inverted regime the donor diabat is the upper adiabat near its minimum
        upper_is_donor = params.delta_g + params.lam < 0
        centre = "donor" if (active == 1) == upper_is_donor else "acceptor"
        ps = sample_thermal(params, bath, centre, rng)
        c[active] = 1.0
    else:
        raise ValueError(f"unknown initial surface {surface!r}")
    return TrajectoryState(ps.x, ps.p, c, active)


# -- single-step operations (thin wrappers over the kernels) ----------------


def propagate_electronic(c, v_dot_d, energies_lower, energies_upper, dt: float, n_sub: int = 20, active: int = 0, hbar: float = HBAR):
    """Integrate the two-state TDSE over one nuclear step.

    ``v_dot_d``, ``energies_lower`` and ``energies_upper`` are (start, end)
    pairs; values in between are linear interpolants.  Returns the new
    amplitudes and the hop probability accumulated for ``active``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = np.array(c, dtype=complex)
    norm0 = float(np.sum(np.abs(c) ** 2))
    gap0 = energies_upper[0] - energies_lower[0]
    gap1 = energies_upper[1] - energies_lower[1]
    prob = K.electronic_step(c, float(gap0), float(gap1), float(v_dot_d[0]), float(v_dot_d[1]), float(dt), int(n_sub), float(hbar), int(active))
    # the mean energy was dropped inside the kernel; restore its phase
    mean = 0.25 * (energies_lower[0] + energies_upper[0] + energies_lower[1] + energies_upper[1])
    c *= np.exp(-1j * mean * dt / hbar)
    drift = abs(float(np.sum(np.abs(c) ** 2)) - norm0)
    if drift > 1e-6:
        raise TrajectoryAbort(f"norm drift {drift:.3e} in one step")
    return c, prob


def propagate_nuclear(state: TrajectoryState, params: SpinBosonParams, bath: DiscretizedBath, dt: float, integrator: str = "verlet") -> TrajectoryState:
    """One step on the active adiabat; ``verlet`` or the harmonic ``split`` scheme."""
    arr = _BathArrays(params, bath, dt)
    scheme = K.SCHEME_SPLIT if integrator == "split" else K.SCHEME_VERLET
    sgn = 1.0 if state.active == 0 else -1.0
    K.nuclear_step(state.x, state.p, arr.g, arr.mw2, arr.xc, arr.cosw, arr.sinw, arr.momega, arr.mass,
                   arr.offset, arr.vc, sgn, float(dt), scheme, _coord(bath, state.x))
    state.time += dt
    return state


def hop_probability(c, active: int, v_dot_d: float, dt: float) -> float:
    """Fewest-switches probability out of ``active`` for a single step.

    Uses the population flux ``d|c_b|^2/dt`` implied by the TDSE convention
    of :func:`propagate_electronic` (coupling ``d_12 = <lower|grad upper>``).
    """
    c = np.asarray(c, dtype=complex)
    if active == 0:
        flux = 2.0 * v_dot_d * (np.conj(c[1]) * c[0]).real
    else:
        flux = -2.0 * v_dot_d * (np.conj(c[0]) * c[1]).real
    pop = abs(c[active]) ** 2
    if pop < 1e-12:
        return 0.0
    return float(min(1.0, max(0.0, flux * dt / pop)))


def attempt_hop(state: TrajectoryState, target: int, params: SpinBosonParams, bath: DiscretizedBath) -> str:
    """Rescale momentum along g to hop, or apply the force-direction reversal test."""
    if target == state.active:
        raise ValueError("target must differ from the active surface")
    arr = _BathArrays(params, bath, 1.0)
    outcome, d_e, kpar = K.rescale_or_reflect(state.x, state.p, arr.g, arr.gnorm, arr.mw2, arr.mass,
                                              arr.offset, arr.vc, _coord(bath, state.x), state.active, target)
    state.hops.append((state.time, _coord(bath, state.x), state.active, target, int(outcome), d_e))
    if outcome == K.OUTCOME_HOPPED:
        state.active = target
        state.moment_r = state.moment_p = 0.0
        return "hopped"
    return "frustrated"


def apply_decoherence(state: TrajectoryState, dt: float, config: DecoherenceConfig, params: SpinBosonParams,
                      bath: DiscretizedBath, uniform: float | None = None, rng=None) -> bool:
    """Advance moments and draw a collapse; returns True when the state collapsed."""
    if config.mode == "none":
        return False
    u = uniform if uniform is not None else (rng or np.random.default_rng()).random()
    if config.mode == "constant_tau":
        hit = u < dt / config.tau
    else:
        arr = _BathArrays(params, bath, dt)
        delta, root = K.gap_terms(arr.offset, arr.vc, _coord(bath, state.x))
        mom = np.array([state.moment_r, state.moment_p])
        weight = K.WEIGHT_POPULATION if config.moment_weight == "population" else K.WEIGHT_HALF_PLUS
        dforce = K.moment_step(mom, delta, root, arr.gnorm, state.c, state.active, arr.mass, dt, weight)
        state.moment_r, state.moment_p = float(mom[0]), float(mom[1])
        rate = max(0.0, dforce * state.moment_r / (2.0 * HBAR))
        hit = u < rate * dt
        if config.reset and not hit and dforce * state.moment_r < 0 and u < -dforce * state.moment_r / (2.0 * HBAR) * dt:
            state.moment_r = state.moment_p = 0.0
    if hit:
        K.collapse(state.c, state.active)
        state.moment_r = state.moment_p = 0.0
        state.n_collapses += 1
    return bool(hit)


def diabatic_populations(rotation, c, active):
    """Mixed estimator P_L = |U_La|^2 + 2 Re(c_1 c_2* U_L1 U_L2), averaged over the leading axis.

    ``rotation`` is (..., 2, 2) with adiabats in columns, ``c`` (..., 2),
    ``active`` (...).  Returns ``(P_D, P_A)``.
    """
    rotation = np.asarray(rotation, dtype=float)
    c = np.asarray(c, dtype=complex)
    active = np.asarray(active, dtype=int)
    u_act = np.take_along_axis(rotation, active[..., None, None], axis=-1)[..., 0]
    coh = 2.0 * (c[..., 0] * np.conj(c[..., 1])).real
    pops = u_act**2 + coh[..., None] * rotation[..., :, 0] * rotation[..., :, 1]
    if pops.ndim > 1:
        pops = pops.reshape(-1, 2).mean(axis=0)
    return float(pops[0]), float(pops[1])


def _rotation_from_gap(delta, vc):
    theta = 0.5 * np.arctan2(2.0 * vc, delta)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([-s, -c], -1)], -2)


# -- ensembles -----------------------------------------------------------------


@dataclass
class EnsembleResult:
    time: np.ndarray
    P_D: np.ndarray
    P_A: np.ndarray
    P_ad1: np.ndarray  # fraction of trajectories on the lower adiabat
    P_ad2: np.ndarray
    c1sq: np.ndarray  # <|c_lower|^2>
    c2sq: np.ndarray
    n_trajectories: int
    seed: int
    hop_log: np.ndarray  # rows: time, X, from, to, outcome, dE, kinetic along g
    collapse_counts: np.ndarray  # per trajectory
    collapse_times: list
    counters: np.ndarray  # per trajectory, kernels.N_COUNTERS columns
    energy_drift: np.ndarray  # per trajectory max |E - E0| between hops, cm^-1
    n_aborted: int = 0
    config: SimConfig | None = None
    params: SpinBosonParams | None = None
    backend: str = ""
    block_P_D: np.ndarray | None = None  # (n_blocks, n_frames) block-mean donor population

    def hop_summary(self) -> dict:
        tot = self.counters.sum(axis=0)
        return {
            "hops": int(tot[K.N_HOPS]),
            "frustrated": int(tot[K.N_FRUSTRATED]),
            "up_proposed": int(tot[K.N_UP_PROPOSED]),
            "up_accepted": int(tot[K.N_UP_ACCEPTED]),
            "down_proposed": int(tot[K.N_DOWN_PROPOSED]),
            "collapses": int(tot[K.N_COLLAPSES]),
        }

    def as_table(self) -> np.ndarray:
        return np.column_stack([self.time, self.P_D, self.P_A, self.P_ad1, self.P_ad2, self.c1sq, self.c2sq])


def _trajectory_seed(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(index)])))


def _run_one(index, params, bath, arr, cfg: SimConfig, n_rec):
    rng = _trajectory_seed(cfg.master_seed, index)
    st = initial_state(params, bath, cfg.initial_surface, rng)
    uniforms = rng.random((cfg.n_steps, 2))
    rec_active = np.zeros(n_rec, np.int64)
    rec_c = np.zeros((n_rec, 2), complex)
    rec_gap = np.zeros(n_rec)
    rec_energy = np.zeros(n_rec)
    hop_log = np.zeros((cfg.hop_log_capacity, K.HOP_COLUMNS))
    col_log = np.zeros(cfg.collapse_log_capacity)
    counters = np.zeros(K.N_COUNTERS, np.int64)
    mom = np.zeros(2)
    tau = float(cfg.decoherence.tau or 1.0)
    weight = K.WEIGHT_POPULATION if cfg.decoherence.moment_weight == "population" else K.WEIGHT_HALF_PLUS
    scheme = K.SCHEME_SPLIT if cfg.integrator == "split" else K.SCHEME_VERLET
    K.run_trajectory(
        st.x, st.p, st.c, st.active, mom, arr.g, arr.gnorm, arr.mw2, arr.xc, arr.cosw, arr.sinw, arr.momega,
        arr.mass, HBAR, arr.offset, arr.vc, cfg.dt_fs, cfg.n_steps, cfg.output_stride, cfg.n_sub, scheme,
        cfg.decoherence.code, tau, weight, cfg.decoherence.reset, uniforms, rec_active, rec_c, rec_gap, rec_energy, hop_log, col_log, counters,
    )
    n_hop = int(counters[K.N_HOP_LOGGED])
    hops = np.column_stack([np.full(n_hop, index, float), hop_log[:n_hop]])
    return rec_active, rec_c, rec_gap, rec_energy, hops, col_log[: counters[K.N_COLLAPSE_LOGGED]].copy(), counters


def _energy_drift(energy, active):
    """Largest |E - E_segment_start| over stretches without a surface change."""
    worst = 0.0
    start = 0
    for i in range(1, energy.size + 1):
        if i == energy.size or active[i] != active[i - 1]:
            seg = energy[start:i]
            worst = max(worst, float(np.max(np.abs(seg - seg[0]))))
            start = i
    return worst


def _frame_populations(act, cc, gap, vc):
    """Per-frame diabatic populations from the mixed estimator for one trajectory."""
    rot = _rotation_from_gap(gap, vc)
    u_act = np.take_along_axis(rot, act[:, None, None], axis=-1)[..., 0]
    coh = 2.0 * (cc[:, 0] * np.conj(cc[:, 1])).real
    return u_act**2 + coh[:, None] * rot[..., :, 0] * rot[..., :, 1]


def run_ensemble(params: SpinBosonParams, config: SimConfig, bath: DiscretizedBath | None = None, progress=None,
                 n_blocks: int = 20) -> EnsembleResult:
    """Independent trajectories reduced in index order (schedule-independent).

    Traces are accumulated on the fly, so memory does not grow with the
    trajectory count; ``block_P_D`` keeps ``n_blocks`` contiguous-index block
    means for bootstrap error bars.
    """
    from .._accel import backend_name

    bath = bath or build_bath(params, config.n_modes)
    arr = _BathArrays(params, bath, config.dt_fs)
    n_rec = config.n_steps // config.output_stride + 1
    n = config.n_trajectories
    n_blocks = max(1, min(int(n_blocks), n))

    def job(i):
        out = _run_one(i, params, bath, arr, config, n_rec)
        if progress is not None:
            progress(i)
        return out

    pops_sum = np.zeros((n_rec, 2))
    lower_sum = np.zeros(n_rec)
    c2_sum = np.zeros((n_rec, 2))
    block_sum = np.zeros((n_blocks, n_rec))
    block_n = np.zeros(n_blocks)
    hop_rows, collapse_times, counters, drift, aborted = [], [], [], [], []

    def reduce(i, r):
        act, cc, gap, energy, hops, ctimes, cnt = r
        if cnt[K.ABORT_STEP] >= 0:
            aborted.append(i)
            return
        pops = _frame_populations(act, cc, gap, params.vc)
        pops_sum[:] += pops
        lower_sum[:] += act == 0
        c2_sum[:] += np.abs(cc) ** 2
        b = i * n_blocks // n
        block_sum[b] += pops[:, 0]
        block_n[b] += 1
        if hops.size:
            hop_rows.append(hops)
        collapse_times.append(ctimes)
        counters.append(cnt)
        drift.append(_energy_drift(energy, act))

    threads = max(1, int(config.threads or 1))
    chunk = 64 * threads
    with ThreadPoolExecutor(max_workers=threads) if threads > 1 else _Serial() as pool:
        for lo in range(0, n, chunk):
            idx = range(lo, min(n, lo + chunk))
            for i, r in zip(idx, pool.map(job, idx)):
                reduce(i, r)

    if aborted:
        if len(aborted) >= max(1, 0.001 * n):
            raise TrajectoryAbort(f"{len(aborted)} of {n} trajectories lost amplitude norm (first: {aborted[0]})")
        warnings.warn(f"excluding {len(aborted)} aborted trajectories", RuntimeWarning)
    kept = n - len(aborted)
    pops = pops_sum / kept
    c2 = c2_sum / kept
    p_lower = lower_sum / kept
    hop_log = np.concatenate(hop_rows) if hop_rows else np.zeros((0, K.HOP_COLUMNS + 1))
    counters = np.stack(counters)
    time = np.arange(n_rec) * config.output_stride * config.dt_fs
    return EnsembleResult(
        time=time,
        P_D=pops[:, 0],
        P_A=pops[:, 1],
        P_ad1=p_lower,
        P_ad2=1.0 - p_lower,
        c1sq=c2[:, 0],
        c2sq=c2[:, 1],
        n_trajectories=kept,
        seed=config.master_seed,
        hop_log=hop_log,
        collapse_counts=counters[:, K.N_COLLAPSES].copy(),
        collapse_times=collapse_times,
        counters=counters,
        energy_drift=np.array(drift),
        n_aborted=len(aborted),
        config=config,
        params=params,
        backend=backend_name(),
        block_P_D=block_sum / np.maximum(block_n, 1)[:, None],
    )


class _Serial:
    """Stand-in for an executor when running on the calling thread."""

    def map(self, fn, items):
        return map(fn, items)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def estimate_decoherence_time(params: SpinBosonParams, n_traj: int = 1000, horizon_ps: float = 10.0,
                              config: SimConfig | None = None, return_details: bool = False):
    """tau = horizon / mean collapses per trajectory under A-FSSH."""
    base = config or SimConfig()
    if base.decoherence.mode != "afssh":
        raise ValueError("decoherence time is measured with afssh decoherence")
    cfg = base.with_(n_trajectories=int(n_traj), t_max_ps=float(horizon_ps),
                     output_stride=max(1, int(round(horizon_ps * 1000.0 / base.dt_fs))))
    res = run_ensemble(params, cfg)
    counts = res.collapse_counts.astype(float)
    mean = counts.mean()
    if mean == 0:
        raise RuntimeError("no decoherence events; increase horizon")
    tau = horizon_ps * 1000.0 / mean
    if return_details:
        # delta-method error from the spread of per-trajectory counts
        err = tau * counts.std(ddof=1) / (mean * math.sqrt(counts.size)) if counts.size > 1 else math.nan
        return tau, {"stderr_fs": err, "mean_collapses": mean, "result": res}
    return tau


def write_population_csv(path, result, columns=POPULATION_COLUMNS):
    """Population trace with the shared column layout; missing columns are left blank."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        cols = []
        for name in columns:
            val = result.time if name == "time_fs" else getattr(result, name, None)
            cols.append(val)
        for i in range(len(result.time)):
            w.writerow(["" if col is None or not np.isfinite(col[i]) else repr(float(col[i])) for col in cols])
    return path
