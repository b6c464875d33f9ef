"""Command-line driver: runs, sweeps, decoherence-time campaigns, theory tables, fits, comparisons.

Every command writes into ``--out`` and leaves a ``manifest.json`` listing
the config snapshot, seeds, timestamps and the files it produced.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    FitError,
    MethodRates,
    boltzmann_population,
    build_comparison,
    detailed_balance_deviation,
    fit_rates,
    write_comparison_csv,
    write_comparison_json,
)
from .heom import HEOMConfig, HEOMError, propagate_heom
from .model import (
    EXTRA_PARAM_KEYS,
    PARAM_FILE_KEYS,
    STANDARD_PARAMS,
    SpinBosonParams,
    params_from_mapping,
    params_to_mapping,
    parse_key_values,
)
from .rate_theory import (
    FGRQuadrature,
    QuadratureError,
    compute_rate_set,
    fgr_diabatic_rate,
    fgr_integrands,
    marcus_rate,
)
from .surface_hopping import (
    POPULATION_COLUMNS,
    DecoherenceConfig,
    SimConfig,
    TrajectoryAbort,
    estimate_decoherence_time,
    run_ensemble,
    write_population_csv,
)

log = logging.getLogger("afsshlab")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

RUN_KEYS = {
    "n_trajectories": int,
    "dt_fs": float,
    "t_max_ps": float,
    "output_stride": int,
    "decoherence": str,
    "tau_fs": float,
    "master_seed": int,
    "moment_weight": str,
    "n_sub": int,
    "integrator": str,
    "heom_dt": float,
    "heom_L": int,
    "heom_K": int,
    "heom_t_max_fs": float,
    "heom_output_fs": float,
}

# trajectory counts, steps and horizons per method
PRESETS = {
    "paper": {
        "afssh": {"n_trajectories": 5000, "dt_fs": 0.25, "t_max_ps": 150.0},
        "fssh": {"n_trajectories": 10000, "dt_fs": 0.2, "t_max_ps": 400.0},
        "heom": {"heom_t_max_fs": 400000.0, "heom_output_fs": 200.0},
        "tau": {"n_trajectories": 1000, "t_max_ps": 10.0},
    },
    "desk": {
        "afssh": {"n_trajectories": 2000, "dt_fs": 0.25, "t_max_ps": 150.0},
        "fssh": {"n_trajectories": 2000, "dt_fs": 0.2, "t_max_ps": 400.0},
        "heom": {"heom_t_max_fs": 400000.0, "heom_output_fs": 200.0},
        "tau": {"n_trajectories": 1000, "t_max_ps": 10.0},
    },
}

# parameter ranges covered by the reference study
AXIS_RANGES = {"delta_g": (-400.0, -250.0), "lambda": (5.0, 20.0), "temperature": (50.0, 600.0)}
AXIS_ATTR = {"delta_g": "delta_g", "lambda": "lam", "temperature": "temperature"}


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------------


@dataclass
class Settings:
    params: SpinBosonParams
    n_modes: int
    seed: int
    run: dict
    preset: str
    threads: int
    snapshot: dict = field(default_factory=dict)


def load_settings(args) -> Settings:
    mapping = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            mapping = parse_key_values(path.read_text())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    known = set(PARAM_FILE_KEYS) | set(EXTRA_PARAM_KEYS) | set(RUN_KEYS)
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    try:
        params, extras = params_from_mapping({k: v for k, v in mapping.items() if k not in RUN_KEYS})
        run = {k: RUN_KEYS[k](v) for k, v in mapping.items() if k in RUN_KEYS}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    seed = args.seed if args.seed is not None else run.get("master_seed", extras.get("seed", 12345))
    n_modes = int(extras.get("n_modes", 300))
    if n_modes < 1:
        raise ConfigError("n_modes must be positive")
    threads = max(1, int(args.threads or 1))
    snapshot = {**params_to_mapping(params), "n_modes": n_modes, "seed": int(seed), **run}
    return Settings(params, n_modes, int(seed), run, args.preset, threads, snapshot)


def sim_config(settings: Settings, method: str, overrides: dict | None = None) -> SimConfig:
    merged = {**PRESETS[settings.preset][method], **settings.run, **(overrides or {})}
    mode = "none" if method == "fssh" else merged.get("decoherence", "afssh")
    if method == "fssh" and merged.get("decoherence", "none") != "none":
        raise ConfigError("fssh runs without decoherence; use 'run afssh' for decoherence modes")
    try:
        deco = DecoherenceConfig(mode, merged.get("tau_fs"), merged.get("moment_weight", "population"))
        dt = merged["dt_fs"]
        stride = merged.get("output_stride", max(1, int(round(1000.0 / dt))))
        return SimConfig(
            n_trajectories=merged["n_trajectories"],
            dt_fs=dt,
            t_max_ps=merged["t_max_ps"],
            output_stride=stride,
            decoherence=deco,
            master_seed=settings.seed,
            n_modes=settings.n_modes,
            n_sub=merged.get("n_sub", 20),
            integrator=merged.get("integrator", "split"),
            threads=settings.threads,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


def heom_config(settings: Settings) -> HEOMConfig:
    merged = {**PRESETS[settings.preset]["heom"], **settings.run}
    return HEOMConfig(
        L=merged.get("heom_L", 8),
        K=merged.get("heom_K", 0),
        dt=merged.get("heom_dt", 0.05),
        t_max=merged["heom_t_max_fs"],
        output_every=merged["heom_output_fs"],
    )


# -- manifests ------------------------------------------------------------------------


class Manifest:
    def __init__(self, out: Path, command: str, settings: Settings | None, argv):
        self.out = out
        self.data = {
            "artifact_version": __version__,
            "command": command,
            "argv": list(argv),
            "config": settings.snapshot if settings else {},
            "preset": settings.preset if settings else None,
            "seeds": {"master_seed": settings.seed} if settings else {},
            "started": datetime.now(timezone.utc).isoformat(),
            "files": [],
            "checks": {},
            "status": "running",
        }

    def add(self, path: Path, kind: str):
        self.data["files"].append({"path": str(Path(path).relative_to(self.out)), "kind": kind})

    def check(self, name: str, value):
        self.data["checks"][name] = value

    def write(self, status: str):
        self.data["status"] = status
        self.data["finished"] = datetime.now(timezone.utc).isoformat()
        path = self.out / "manifest.json"
        path.write_text(json.dumps(_jsonable(self.data), indent=2))
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2))
    return path


# -- single runs ------------------------------------------------------------------------


def execute_method(method: str, params: SpinBosonParams, settings: Settings, out: Path, manifest: Manifest,
                   overrides: dict | None = None):
    """Run one method at one parameter point; returns the population table source and a fit (or None)."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if method == "heom":
        cfg = heom_config(settings)
        res = propagate_heom(params, cfg)
        manifest.check("heom", {"dt_fs": cfg.dt, "L": cfg.L, "K": cfg.K, "n_ado": res.n_ado,
                                "max_trace_error": res.max_trace_error,
                                "max_hermiticity_error": res.max_hermiticity_error})
    else:
        cfg = sim_config(settings, method, overrides)
        res = run_ensemble(params, cfg)
        manifest.check(method, {
            "n_trajectories": res.n_trajectories,
            "n_aborted": res.n_aborted,
            "max_energy_drift_cm1": float(res.energy_drift.max()) if res.energy_drift.size else 0.0,
            "hops": res.hop_summary(),
            "backend": res.backend,
            "dt_fs": cfg.dt_fs,
            "preset_note": f"{settings.preset} preset: {cfg.n_trajectories} trajectories",
        })
    manifest.check(f"{method}_seconds", time.perf_counter() - t0)
    csv_path = write_population_csv(out / f"{method}_populations.csv", res)
    manifest.add(csv_path, "population_trace")
    fit = None
    if method != "fssh":
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                fit = fit_rates(res.time, res.P_D, provenance={"method": method})
            payload = {**fit.to_dict(), **detailed_balance_deviation(fit, params),
                       "warnings": [str(w.message) for w in caught]}
            manifest.add(_write_json(out / f"{method}_fit.json", payload), "rate_fit")
        except FitError as exc:
            manifest.check(f"{method}_fit_error", str(exc))
    return res, fit


def cmd_run(args, settings: Settings, out: Path, manifest: Manifest) -> int:
    overrides = {}
    if args.trajectories:
        overrides["n_trajectories"] = args.trajectories
    if args.t_max_ps:
        overrides["t_max_ps"] = args.t_max_ps
    if args.method == "heom" and args.t_max_ps:
        settings.run["heom_t_max_fs"] = args.t_max_ps * 1000.0
    execute_method(args.method, settings.params, settings, out, manifest, overrides)
    return EXIT_OK


# -- sweeps -------------------------------------------------------------------------------


def _axis_values(args) -> list[float]:
    if args.values:
        vals = [float(v) for v in args.values.split(",") if v.strip()]
    elif args.range:
        start, stop, step = args.range
        if step == 0 or (stop - start) / step < 0:
            raise ConfigError("range step must move from start towards stop")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [start + i * step for i in range(n)]
    else:
        raise ConfigError("sweep needs --values or --range")
    if not vals:
        raise ConfigError("no points")
    lo, hi = AXIS_RANGES[args.axis]
    outside = [v for v in vals if not (lo - 1e-9 <= v <= hi + 1e-9)]
    if outside and not args.allow_out_of_range:
        raise ConfigError(f"values {outside} outside the {args.axis} range [{lo}, {hi}]; pass --allow-out-of-range")
    return vals


def read_tau_table(path) -> dict:
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (float(row["delta_g_cm1"]), float(row["lambda_cm1"]), float(row["temperature_k"]))
            table[key] = float(row["tau_fs"])
    return table


def _tau_key(p: SpinBosonParams):
    return (float(p.delta_g), float(p.lam), float(p.temperature))


def cmd_sweep(args, settings: Settings, out: Path, manifest: Manifest) -> int:
    values = _axis_values(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = sorted(set(methods) - {"afssh", "fssh", "heom", "theory"})
    if bad:
        raise ConfigError(f"unknown methods: {', '.join(bad)}")
    taus = read_tau_table(args.tau_file) if args.tau_file else {}
    points, failures = [], []
    for value in values:
        params = settings.params.with_(**{AXIS_ATTR[args.axis]: value})
        point_dir = out / f"{args.axis}_{value:g}"
        point_manifest = Manifest(point_dir, f"sweep-point {args.axis}={value:g}", settings, [])
        point_manifest.data["config"] = {**settings.snapshot, **params_to_mapping(params)}
        rates = {}
        for method in methods:
            try:
                if method == "theory":
                    tau = taus.get(_tau_key(params))
                    rs = compute_rate_set(params, tau=tau, n_modes=settings.n_modes)
                    point_dir.mkdir(parents=True, exist_ok=True)
                    point_manifest.add(_write_json(point_dir / "rates.json", rs.to_dict()), "rate_set")
                    rates["marcus"] = (rs.k_marcus_f, rs.k_marcus_b)
                    rates["fgr"] = (rs.k_fgr_diabatic_f, rs.k_fgr_diabatic_b)
                    rates["fgr_high_t"] = (rs.k_fgr_highT_f, rs.k_fgr_highT_b)
                    rates["fgr_small_lambda"] = (rs.k_fgr_small_lambda_f, rs.k_fgr_small_lambda_b)
                    rates["fgr_mqc"] = (rs.k_fgr_mqc_f, rs.k_fgr_mqc_b)
                    if rs.afssh is not None:
                        rates["afssh_analytic"] = (rs.afssh.k_f, rs.afssh.k_b)
                else:
                    _, fit = execute_method(method, params, settings, point_dir, point_manifest)
                    if fit is not None:
                        rates["fssh_adhoc" if method == "fssh" else method] = fit
            except (TrajectoryAbort, HEOMError, QuadratureError, FitError) as exc:
                failures.append({"point": value, "method": method, "error": str(exc)})
                point_manifest.check(f"{method}_error", str(exc))
        point_manifest.write("partial" if any(f["point"] == value for f in failures) else "ok")
        manifest.add(point_dir / "manifest.json", "point_manifest")
        points.append((params, rates))
    rows = build_comparison(points)
    manifest.add(write_comparison_csv(rows, out / "comparison.csv"), "comparison_table")
    manifest.add(write_comparison_json(rows, out / "comparison.json", {"axis": args.axis, "values": values,
                                                                      "methods": methods}), "comparison_json")
    manifest.check("failures", failures)
    return EXIT_PARTIAL if failures else EXIT_OK


# -- decoherence-time campaign ---------------------------------------------------------------


def cmd_tau(args, settings: Settings, out: Path, manifest: Manifest) -> int:
    if args.axis:
        if not args.values and not args.range:
            raise ConfigError("no points")
        points = [settings.params.with_(**{AXIS_ATTR[args.axis]: v}) for v in _axis_values(args)]
    else:
        points = [settings.params]
    base = {**PRESETS[settings.preset]["tau"], **settings.run}
    n_traj = args.trajectories or base["n_trajectories"]
    horizon = args.t_max_ps or base["t_max_ps"]
    cfg = sim_config(settings, "afssh", {"n_trajectories": n_traj, "t_max_ps": horizon, "decoherence": "afssh"})
    path = out / "tau_table.csv"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in points:
        tau, info = estimate_decoherence_time(p, n_traj, horizon, cfg, return_details=True)
        rows.append((p.delta_g, p.lam, p.temperature, tau, info["stderr_fs"]))
        log.info("tau at dG=%g lam=%g T=%g: %.2f fs", p.delta_g, p.lam, p.temperature, tau)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_g_cm1", "lambda_cm1", "temperature_k", "tau_fs", "tau_stderr_fs"])
        w.writerows(rows)
    manifest.add(path, "tau_table")
    manifest.check("tau", {"n_trajectories": n_traj, "horizon_ps": horizon})
    return EXIT_OK


# -- theory --------------------------------------------------------------------------------


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def cmd_theory(args, settings: Settings, out: Path, manifest: Manifest) -> int:
    p = settings.params
    out.mkdir(parents=True, exist_ok=True)
    q = FGRQuadrature()
    rs = compute_rate_set(p, tau=args.tau_fs, n_modes=settings.n_modes, quadrature=q)
    payload = {**rs.to_dict(), "boltzmann_P_D": boltzmann_population(p), "barrier_cm1": p.barrier()}
    manifest.add(_write_json(out / "rates.json", payload), "rate_set")

    t = np.arange(0.0, args.integrand_t_max + 0.5 * args.integrand_dt, args.integrand_dt)
    cols = {"time_fs": t}
    for variant in ("exact", "high_t", "short_time"):
        i1, i2 = fgr_integrands(p, t, "forward", variant, q)
        cols[f"I1_{variant}_re"], cols[f"I1_{variant}_im"] = i1.real, i1.imag
        cols[f"I2_{variant}_re"], cols[f"I2_{variant}_im"] = i2.real, i2.imag
    manifest.add(_write_columns(out / "integrands.csv", cols), "integrands")

    if args.vc_sweep:
        vcs = np.array([float(v) for v in args.vc_sweep.split(",")])
        k_m = np.array([marcus_rate(p.with_(vc=v)) for v in vcs])
        k_f = np.array([fgr_diabatic_rate(p.with_(vc=v), "forward", "exact", q) for v in vcs])
        manifest.add(_write_columns(out / "vc_sweep.csv", {"vc_cm1": vcs, "k_marcus": k_m, "k_fgr": k_f}), "vc_sweep")
        slopes = {"marcus": _loglog_slope(vcs, k_m), "fgr": _loglog_slope(vcs, k_f)}
        manifest.check("vc_loglog_slopes", slopes)
    if args.lambda_sweep:
        lams = np.array([float(v) for v in args.lambda_sweep.split(",")])
        cols = {"lambda_cm1": lams,
                "k_marcus": [marcus_rate(p.with_(lam=v)) for v in lams],
                "k_fgr": [fgr_diabatic_rate(p.with_(lam=v), "forward", "exact", q) for v in lams],
                "k_fgr_high_t": [fgr_diabatic_rate(p.with_(lam=v), "forward", "high_t", q) for v in lams]}
        manifest.add(_write_columns(out / "lambda_sweep.csv", cols), "lambda_sweep")
    return EXIT_OK


def _write_columns(path: Path, cols: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(cols)
    arrays = [np.asarray(cols[n], dtype=float) for n in names]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(arrays[0].size):
            w.writerow([repr(float(a[i])) for a in arrays])
    return path


# -- fit and compare ------------------------------------------------------------------------------


def _read_trace(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "time_fs" not in rows[0] or "P_D" not in rows[0]:
        raise ConfigError(f"{path} is not a population trace (needs time_fs and P_D columns)")
    return np.array([float(r["time_fs"]) for r in rows]), np.array([float(r["P_D"]) for r in rows])


def _trace_method(path: Path) -> str | None:
    name = path.name
    for m in ("fssh", "afssh", "heom"):
        if name.startswith(m + "_"):
            return m
    return None


def cmd_fit(args, settings: Settings, out: Path, manifest: Manifest) -> int:
    path = Path(args.trace)
    if not path.is_file():
        raise ConfigError(f"trace not found: {path}")
    method = _trace_method(path)
    if method == "fssh":
        if not args.adhoc_fssh_fit:
            raise ConfigError("FSSH traces are not single-exponential; pass --adhoc-fssh-fit to fit anyway")
        warnings.warn("fitting an FSSH trace with a single exponential gives ad hoc rates", UserWarning)
    t, pd = _read_trace(path)
    window = tuple(args.window) if args.window else None
    fit = fit_rates(t, pd, window, provenance={"trace": str(path), "method": method})
    payload = {**fit.to_dict(), **detailed_balance_deviation(fit, settings.params), "adhoc": method == "fssh"}
    manifest.add(_write_json(out / "fit.json", payload), "rate_fit")
    print(json.dumps(_jsonable({k: payload[k] for k in ("k_total", "k_f", "k_b", "P_inf", "residual")})))
    return EXIT_OK


def cmd_compare(args, settings: Settings, out: Path, manifest: Manifest) -> int:
    """Collect fits and rate sets from run directories into one comparison table."""
    points = {}
    for d in args.runs:
        d = Path(d)
        man_path = d / "manifest.json"
        if not man_path.is_file():
            raise ConfigError(f"no manifest in {d}")
        man = json.loads(man_path.read_text())
        params, _ = params_from_mapping({k: v for k, v in man["config"].items() if k in PARAM_FILE_KEYS})
        key = tuple(params_to_mapping(params).values())
        entry = points.setdefault(key, (params, {}))[1]
        for f in man["files"]:
            path = d / f["path"]
            if f["kind"] == "rate_fit":
                fit = json.loads(path.read_text())
                method = fit.get("provenance", {}).get("method") or "afssh"
                entry["fssh_adhoc" if method == "fssh" else method] = MethodRates(fit["k_f"], fit["k_b"], fit["residual"])
            elif f["kind"] == "rate_set":
                rs = json.loads(path.read_text())
                entry["marcus"] = (rs["k_marcus_f"], rs["k_marcus_b"])
                entry["fgr"] = (rs["k_fgr_diabatic_f"], rs["k_fgr_diabatic_b"])
                entry["fgr_high_t"] = (rs["k_fgr_highT_f"], rs["k_fgr_highT_b"])
                entry["fgr_small_lambda"] = (rs["k_fgr_small_lambda_f"], rs["k_fgr_small_lambda_b"])
                entry["fgr_mqc"] = (rs["k_fgr_mqc_f"], rs["k_fgr_mqc_b"])
                if rs.get("afssh"):
                    entry["afssh_analytic"] = (rs["afssh"]["k_f"], rs["afssh"]["k_b"])
    if not points:
        raise ConfigError("no run directories given")
    rows = build_comparison(points.values())
    manifest.add(write_comparison_csv(rows, out / "comparison.csv"), "comparison_table")
    manifest.add(write_comparison_json(rows, out / "comparison.json", {"runs": list(args.runs)}), "comparison_json")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afsshlab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value file with model and run settings")
    ap.add_argument("--seed", type=int, help="master seed for trajectory streams")
    ap.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    ap.add_argument("--out", default="afsshlab_out", help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one simulation at the configured parameter point")
    p.add_argument("method", choices=["fssh", "afssh", "heom"])
    p.add_argument("--trajectories", type=int)
    p.add_argument("--t-max-ps", type=float)

    def axis_args(p, required):
        p.add_argument("--axis", choices=sorted(AXIS_RANGES), required=required)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--values", help="comma-separated axis values")
        g.add_argument("--range", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
        p.add_argument("--allow-out-of-range", action="store_true")

    p = sub.add_parser("sweep", help="methods across one parameter axis plus a comparison table")
    axis_args(p, True)
    p.add_argument("--methods", default="afssh,heom,theory")
    p.add_argument("--tau-file", help="tau table from the 'tau' command, used by the analytic AFSSH rates")

    p = sub.add_parser("tau", help="decoherence times from collapse counts")
    axis_args(p, False)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--t-max-ps", type=float)

    p = sub.add_parser("theory", help="analytic and golden-rule rates plus integrand tables")
    p.add_argument("--tau-fs", type=float, help="collapse time for the analytic AFSSH rates")
    p.add_argument("--vc-sweep", help="comma-separated coupling values")
    p.add_argument("--lambda-sweep", help="comma-separated reorganization energies")
    p.add_argument("--integrand-t-max", type=float, default=1000.0)
    p.add_argument("--integrand-dt", type=float, default=1.0)

    p = sub.add_parser("fit", help="two-state rate fit of a population trace")
    p.add_argument("trace")
    p.add_argument("--window", nargs=2, type=float, metavar=("T_LO", "T_HI"))
    p.add_argument("--adhoc-fssh-fit", action="store_true")

    p = sub.add_parser("compare", help="merge run directories into a comparison table")
    p.add_argument("runs", nargs="+")
    return ap


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "tau": cmd_tau, "theory": cmd_theory, "fit": cmd_fit,
            "compare": cmd_compare}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    manifest = None
    try:
        settings = load_settings(args)
        out.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(out, args.command, settings, argv)
        code = COMMANDS[args.command](args, settings, out, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except (TrajectoryAbort, HEOMError, QuadratureError, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except RuntimeError as exc:
        if "no decoherence events" not in str(exc):
            raise
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    if manifest is not None:
        manifest.write({EXIT_OK: "ok", EXIT_PARTIAL: "partial"}.get(code, "failed"))
    return code


if __name__ == "__main__":
    sys.exit(main())
