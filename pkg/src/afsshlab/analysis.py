"""Rate extraction and cross-method diagnostics for population traces."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.special import expit

from .model import SpinBosonParams, params_to_mapping
from .units import KB

__all__ = [
    "FitError",
    "RateFit",
    "MethodRates",
    "ComparisonRow",
    "fit_rates",
    "single_exponential_residual",
    "bootstrap_fit",
    "boltzmann_population",
    "effective_temperature",
    "detailed_balance_deviation",
    "surface_profiles",
    "hop_energies",
    "hop_statistics",
    "early_slope",
    "build_comparison",
    "write_comparison_csv",
    "write_comparison_json",
    "METHOD_ORDER",
]


class FitError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class RateFit:
    """Two-state kinetics fitted to P_D(t) = P_inf + (P_start - P_inf) exp(-k t)."""

    k_total: float
    k_f: float
    k_b: float
    P_inf: float
    residual: float  # RMS over the fit window
    window: tuple
    P_start: float  # model intercept at t = 0
    tail_mean: float
    provenance: dict = field(default_factory=dict)
    covers: float = math.nan  # window length times k_total

    def model(self, t):
        t = np.asarray(t, dtype=float)
        return self.P_inf + (self.P_start - self.P_inf) * np.exp(-self.k_total * t)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _model(theta, t):
    p_inf, p_start, k = theta
    return p_inf + (p_start - p_inf) * np.exp(-k * t)


def _initial_guess(t, y, tail_fraction=0.1):
    n_tail = max(2, int(round(tail_fraction * t.size)))
    tail = float(np.mean(y[-n_tail:]))
    dev = y - tail
    # log-linear slope on the part of the trace that is still clearly above the tail
    ok = dev > 0.05 * max(abs(dev[0]), 1e-12)
    k0 = math.nan
    if np.count_nonzero(ok) >= 2 and dev[0] > 0:
        slope = np.polyfit(t[ok], np.log(dev[ok]), 1)[0]
        k0 = -slope
    if not np.isfinite(k0) or k0 <= 0:
        k0 = 1.0 / max(t[-1] - t[0], 1e-12)
    return tail, k0


def fit_rates(time, P_D, window=None, provenance: dict | None = None, fixed_start: float | None = None,
              max_nfev: int = 2000) -> RateFit:
    """Bounded nonlinear least squares of the two-state relaxation law.

    ``window`` is ``(t_lo, t_hi)`` in the units of ``time``; the default skips the
    first 5% of the trace.  The intercept ``P_start`` is a free parameter unless
    ``fixed_start`` is given, so short transients before the window do not bias
    the rate.  ``k_b = k P_inf`` and ``k_f = k - k_b``.
    """
    t = np.asarray(time, dtype=float)
    y = np.asarray(P_D, dtype=float)
    if t.shape != y.shape or t.ndim != 1 or t.size < 4:
        raise ValueError("time and P_D must be 1-D arrays of equal length (>= 4 points)")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if window is None:
        window = (t[0] + 0.05 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    m = (t >= lo) & (t <= hi)
    if np.count_nonzero(m) < 4:
        raise ValueError("fit window holds fewer than 4 points")
    tw, yw = t[m], y[m]
    tail, k0 = _initial_guess(tw, yw)
    p_start0 = float(np.clip(y[0], 0.0, 1.0))
    # scale k so the optimizer sees O(1) numbers
    scale = k0
    if fixed_start is None:
        fun = lambda th: _model((th[0], th[1], th[2] * scale), tw) - yw
        x0 = [np.clip(tail, 0, 1), p_start0, 1.0]
        bounds = ([0.0, 0.0, 0.0], [1.0, 1.0, np.inf])
    else:
        fun = lambda th: _model((th[0], fixed_start, th[1] * scale), tw) - yw
        x0 = [np.clip(tail, 0, 1), 1.0]
        bounds = ([0.0, 0.0], [1.0, np.inf])
    sol = least_squares(fun, x0, bounds=bounds, method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=max_nfev)
    th = sol.x
    if fixed_start is None:
        p_inf, p_start, k = float(th[0]), float(th[1]), float(th[2] * scale)
    else:
        p_inf, p_start, k = float(th[0]), float(fixed_start), float(th[1] * scale)
    if sol.status <= 0 or not np.all(np.isfinite(th)):
        raise FitError(f"least squares did not converge: {sol.message}", best=(p_inf, p_start, k))
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    covers = (hi - lo) * k
    if covers < 1.0:
        warnings.warn(f"fit window spans only {covers:.2f} relaxation times", RuntimeWarning)
    k_b = k * p_inf
    n_tail = max(2, int(round(0.1 * tw.size)))
    return RateFit(
        k_total=k,
        k_f=k - k_b,
        k_b=k_b,
        P_inf=p_inf,
        residual=rms,
        window=(float(lo), float(hi)),
        P_start=p_start,
        tail_mean=float(np.mean(yw[-n_tail:])),
        provenance=dict(provenance or {}),
        covers=covers,
    )


def single_exponential_residual(time, P_D, window=None) -> float:
    """RMS misfit of the best two-state relaxation law; large values flag non-exponential decay."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_rates(time, P_D, window).residual


def bootstrap_fit(time, block_traces, n_boot: int = 200, window=None, seed: int = 0) -> dict:
    """Resample trajectory blocks with replacement and refit; returns standard errors."""
    blocks = np.asarray(block_traces, dtype=float)
    if blocks.ndim != 2 or blocks.shape[0] < 2:
        raise ValueError("need at least two block traces")
    rng = np.random.default_rng(seed)
    ks, pis = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(n_boot):
            pick = rng.integers(0, blocks.shape[0], blocks.shape[0])
            try:
                f = fit_rates(time, blocks[pick].mean(axis=0), window)
            except FitError:
                continue
            ks.append(f.k_total)
            pis.append(f.P_inf)
    ks, pis = np.array(ks), np.array(pis)
    return {"k_total_std": float(ks.std(ddof=1)), "P_inf_std": float(pis.std(ddof=1)), "n": int(ks.size)}


# -- equilibrium references --------------------------------------------------


def boltzmann_population(params: SpinBosonParams) -> float:
    """Equilibrium donor population exp(-b|dG|) / (1 + exp(-b|dG|))."""
    if params.temperature == 0:
        return 0.0 if params.delta_g != 0 else 0.5
    return float(expit(-params.abs_dg / params.kT))


def effective_temperature(p_inf: float, abs_dg: float) -> float:
    """Temperature whose Boltzmann donor population equals ``p_inf``; NaN when undefined."""
    if not (0.0 < p_inf < 0.5) or abs_dg <= 0:
        return math.nan
    return abs_dg / (KB * math.log((1.0 - p_inf) / p_inf))


def detailed_balance_deviation(fit: RateFit, params: SpinBosonParams) -> dict:
    p_eq = boltzmann_population(params)
    t_eff = effective_temperature(fit.P_inf, params.abs_dg)
    return {
        "pop_error": fit.P_inf - p_eq,
        "boltzmann": p_eq,
        "effective_temperature": t_eff,
        "temperature_ratio": t_eff / params.temperature if np.isfinite(t_eff) else math.nan,
        "defined": bool(np.isfinite(t_eff)),
    }


# -- hop locations -------------------------------------------------------------


def surface_profiles(params: SpinBosonParams, coord):
    """Adiabatic free-energy profiles (lower, upper) along X = g.x.

    With X Gaussian-distributed on each diabat, the diabats are parabolas
    X^2/(4 lam) and dG + (X + 2 lam)^2/(4 lam); the adiabats follow from the
    same 2x2 diagonalization as the full model.
    """
    x = np.asarray(coord, dtype=float)
    lam = params.lam
    g_d = x**2 / (4.0 * lam)
    g_a = params.delta_g + (x + 2.0 * lam) ** 2 / (4.0 * lam)
    root = np.sqrt((g_a - g_d) ** 2 + 4.0 * params.vc**2)
    mean = 0.5 * (g_d + g_a)
    return mean - 0.5 * root, mean + 0.5 * root


def _profile_minimum(params: SpinBosonParams, surface: int) -> float:
    f = lambda x: float(surface_profiles(params, x)[surface])
    lam = params.lam
    span = 20.0 * lam + 10.0 * math.sqrt(lam * params.kT) + 2.0 * abs(params.delta_g)
    grid = np.linspace(-span, span, 20001)
    vals = surface_profiles(params, grid)[surface]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return min(float(vals[i]), float(res.fun))


def hop_energies(hop_log, params: SpinBosonParams, successful_only: bool = True) -> np.ndarray:
    """Source-surface energy above its minimum for each logged hop.

    ``hop_log`` rows follow :class:`EnsembleResult.hop_log`:
    (trajectory, time, X, from, to, outcome, dE, kinetic along g).
    """
    log = np.asarray(hop_log, dtype=float)
    if log.size == 0:
        return np.zeros(0)
    if successful_only:
        log = log[log[:, 5] == 0]
    out = np.empty(log.shape[0])
    for s in (0, 1):
        m = log[:, 3] == s
        if np.any(m):
            out[m] = surface_profiles(params, log[m, 2])[s] - _profile_minimum(params, s)
    return out


def hop_statistics(hop_log=None, params: SpinBosonParams | None = None, n_kT: float = 4.0, energies=None,
                   bins: int = 40, successful_only: bool = True) -> dict:
    """Fraction of hops within ``n_kT`` kB T of the source-surface minimum, plus histograms."""
    if params is None:
        raise ValueError("params are required")
    if energies is None:
        energies = hop_energies(hop_log, params, successful_only)
        coords = np.asarray(hop_log, float)
        if coords.size and successful_only:
            coords = coords[coords[:, 5] == 0]
        coords = coords[:, 2] if coords.size else np.zeros(0)
    else:
        energies = np.asarray(energies, dtype=float)
        coords = np.zeros(0)
    if energies.size == 0:
        raise ValueError("no hops recorded")
    limit = n_kT * params.kT
    inside = int(np.count_nonzero(energies <= limit))
    frac = inside / energies.size
    e_hist, e_edges = np.histogram(energies / params.kT, bins=bins)
    out = {
        "n_hops": int(energies.size),
        "fraction_within": frac,
        "binomial_error": math.sqrt(frac * (1 - frac) / energies.size),
        "n_kT": n_kT,
        "energy_hist": e_hist,
        "energy_edges_kT": e_edges,
    }
    if coords.size:
        out["position_hist"], out["position_edges"] = np.histogram(coords, bins=bins)
    return out


def early_slope(time, values, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of ``values`` over ``[t_lo, t_hi]``."""
    t = np.asarray(time, dtype=float)
    v = np.asarray(values, dtype=float)
    m = (t >= t_lo) & (t <= t_hi)
    if np.count_nonzero(m) < 2:
        raise ValueError("need at least two points in the slope window")
    return float(np.polyfit(t[m], v[m], 1)[0])


# -- comparison tables ------------------------------------------------------------

METHOD_ORDER = (
    "afssh",
    "fssh_adhoc",
    "heom",
    "marcus",
    "fgr",
    "fgr_high_t",
    "fgr_small_lambda",
    "fgr_mqc",
    "afssh_analytic",
)
METHOD_FIELDS = ("k_f", "k_b", "k", "P_inf", "residual")
RATIO_COLUMNS = ("afssh_over_heom", "fgr_over_marcus", "analytic_over_afssh")


@dataclass
class MethodRates:
    k_f: float
    k_b: float
    residual: float | None = None

    @property
    def k(self) -> float:
        return self.k_f + self.k_b

    @property
    def P_inf(self) -> float:
        return self.k_b / self.k if self.k > 0 else math.nan

    @classmethod
    def coerce(cls, obj) -> "MethodRates":
        if isinstance(obj, MethodRates):
            return obj
        if isinstance(obj, RateFit):
            return cls(obj.k_f, obj.k_b, obj.residual)
        if isinstance(obj, dict):
            return cls(float(obj["k_f"]), float(obj["k_b"]), obj.get("residual"))
        k_f, k_b = obj
        return cls(float(k_f), float(k_b))


@dataclass
class ComparisonRow:
    params: dict
    methods: dict  # name -> MethodRates
    boltzmann: float
    ratios: dict

    def flat(self) -> dict:
        row = dict(self.params)
        for name in METHOD_ORDER:
            mr = self.methods.get(name)
            for f in METHOD_FIELDS:
                val = getattr(mr, f) if mr is not None else None
                row[f"{name}_{f}"] = val
        row["boltzmann_P_D"] = self.boltzmann
        row.update(self.ratios)
        return row


def _ratio(a: MethodRates | None, b: MethodRates | None, attr: str = "k") -> float | None:
    if a is None or b is None:
        return None
    x, y = getattr(a, attr), getattr(b, attr)
    if not (x > 0 and y > 0):
        return None
    return x / y


def build_comparison(points) -> list[ComparisonRow]:
    """``points``: iterable of ``(params, {method: RateFit | MethodRates | (k_f, k_b) | dict})``."""
    rows = []
    for params, methods in points:
        mr = {name: MethodRates.coerce(v) for name, v in methods.items() if v is not None}
        ratios = {
            "afssh_over_heom": _ratio(mr.get("afssh"), mr.get("heom")),
            "fgr_over_marcus": _ratio(mr.get("fgr"), mr.get("marcus"), "k_f"),
            "analytic_over_afssh": _ratio(mr.get("afssh_analytic"), mr.get("afssh")),
        }
        rows.append(ComparisonRow(params_to_mapping(params), mr, boltzmann_population(params), ratios))
    return rows


def _columns(rows):
    cols = list(rows[0].params.keys()) if rows else []
    cols += [f"{m}_{f}" for m in METHOD_ORDER for f in METHOD_FIELDS]
    cols += ["boltzmann_P_D", *RATIO_COLUMNS]
    return cols


def write_comparison_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = _columns(rows)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            flat = r.flat()
            w.writerow(["" if flat.get(c) is None or (isinstance(flat.get(c), float) and math.isnan(flat[c])) else flat[c] for c in cols])
    return path


def write_comparison_json(rows, path, provenance: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    payload = {
        "provenance": provenance or {},
        "rows": [
            {
                "params": r.params,
                "methods": {k: {f: clean(getattr(v, f)) for f in METHOD_FIELDS} for k, v in r.methods.items()},
                "boltzmann_P_D": r.boltzmann,
                "ratios": r.ratios,
            }
            for r in rows
        ],
    }
    path.write_text(json.dumps(payload, indent=2))
    return path
