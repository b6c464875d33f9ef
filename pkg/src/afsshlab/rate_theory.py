"""Analytic and quadrature rate constants for the two-state transfer problem.

All rates are in fs^-1.  ``direction="forward"`` is donor -> acceptor (downhill
for ``delta_g < 0``), ``"backward"`` is acceptor -> donor.  The formulas are
written in terms of ``|delta_g|`` with explicit direction tags, so the
detailed-balance factor always appears as ``exp(-beta |dG|)`` on the backward
rate.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import polygamma

from .heom import check_matsubara_resonance
from .model import DiscretizedBath, SpinBosonParams, build_bath, drude_spectral_density
from .units import HBAR

__all__ = [
    "QuadratureError",
    "FGRQuadrature",
    "FGRResult",
    "AFSSHRates",
    "RateSet",
    "harmonic_qcf",
    "marcus_rate",
    "fgr_integrands",
    "lineshape_matsubara",
    "fgr_diabatic_rate",
    "fgr_high_temperature",
    "fgr_small_lambda",
    "fgr_mqc_rate",
    "fgr_mqc_lambda0",
    "hop_kinetics",
    "afssh_analytic_rates",
    "short_time_kinetic_model",
    "compute_rate_set",
]

DIRECTIONS = ("forward", "backward")
VARIANTS = ("exact", "high_t", "short_time")


class QuadratureError(RuntimeError):
    """Raised when a time integrand has not decayed within the allowed window."""


def _check_direction(direction: str):
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def harmonic_qcf(x):
    """x / (1 - exp(-x)), equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(np.abs(x) < 1e-12, 1.0 + 0.5 * x, x / -np.expm1(-x))
    return out[()] if out.ndim == 0 else out


def marcus_rate(params: SpinBosonParams, direction: str = "forward") -> float:
    """Classical Marcus rate (V^2/hbar) sqrt(pi / (lam kT)) exp(-(dG + lam)^2 / (4 lam kT))."""
    _check_direction(direction)
    dg = params.delta_g if direction == "forward" else -params.delta_g
    lam, kT = params.lam, params.kT
    return params.vc**2 / HBAR * math.sqrt(math.pi / (lam * kT)) * math.exp(-((dg + lam) ** 2) / (4 * lam * kT))


def fgr_small_lambda(params: SpinBosonParams, direction: str = "forward") -> float:
    """Weak-reorganization golden rule with the harmonic quantum correction factor."""
    _check_direction(direction)
    dg = params.abs_dg
    if dg == 0:
        raise ValueError("closed form requires delta_g != 0")
    jw = float(drude_spectral_density(dg, params.lam, params.eta))
    x = params.beta * dg
    k_f = 2.0 * params.kT * params.vc**2 / (HBAR * dg**3) * jw * harmonic_qcf(x)
    return float(k_f if direction == "forward" else k_f * math.exp(-x))


# -- diabatic golden rule by quadrature -------------------------------------


@dataclass(frozen=True)
class FGRQuadrature:
    """Quadrature controls for the nested frequency/time integrals."""

    omega_max_factor: float = 200.0  # upper frequency cutoff in units of eta
    n_omega: int = 8000
    dt: float = 0.5  # fs
    envelope_tol: float = 1e-4
    block: int = 256  # time points evaluated per batch
    t_cap: float = 2.0e5  # fs, hard limit on the explicit time window
    asymptotic_tail: bool = True
    asymptotic_decades: float = 30.0  # explicit window spans at least this many 1/eta
    integrate_floor: float = 1e-15  # keep summing until the envelope drops this far
    inner: str = "matsubara"  # "matsubara" (closed-form Drude sum) or "grid" (tangent-mapped frequencies)
    n_matsubara: int = 2000

    def __post_init__(self):
        if self.n_omega < 16 or self.dt <= 0 or self.omega_max_factor <= 1:
            raise ValueError("invalid quadrature settings")
        if self.inner not in ("matsubara", "grid"):
            raise ValueError("inner must be 'matsubara' or 'grid'")


@dataclass
class FGRResult:
    rate: float
    t: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    tail: complex
    envelope_end: float
    settings: FGRQuadrature


def _theta_grid(params: SpinBosonParams, q: FGRQuadrature):
    theta_max = math.atan(q.omega_max_factor)
    theta = np.linspace(0.0, theta_max, q.n_omega)
    wts = np.full(theta.size, theta[1] - theta[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return theta, wts


def lineshape_matsubara(params: SpinBosonParams, t, n_terms: int = 2000, classical: bool = False):
    """Golden-rule exponent I1(t) for the Drude bath, summed in closed form.

    ``I1 = (1/hbar) int dw J/(pi w^2) [coth(beta hbar w/2)(1 - cos wt) - i sin wt]``.
    Each exponential term of the bath correlation integrates twice analytically;
    terms beyond ``n_terms`` are added through their asymptotic 1/k^2 and 1/k^3
    sums.  ``classical=True`` keeps only the Drude term with coth -> 2/(beta hbar w).
    """
    t = np.asarray(t, dtype=float)
    lam = params.lam / HBAR
    eta = params.eta / HBAR
    beta = HBAR / params.kT
    if classical:
        c0 = 2.0 * lam / beta - 1j * lam * eta
    else:
        check_matsubara_resonance(beta, eta)
        c0 = lam * eta * (1.0 / math.tan(0.5 * beta * eta) - 1j)
    x = eta * t
    g = c0 / eta**2 * (np.expm1(-x) + x)
    if not classical:
        nu = 2.0 * math.pi / beta
        positive = t[t > 0]
        if positive.size:
            # enough terms that exp(-gamma_K t) is negligible at the smallest time
            n_terms = max(int(n_terms), int(math.ceil(40.0 / (nu * positive.min()))))
        gk = nu * np.arange(1, n_terms + 1)
        ck = 4.0 * lam * eta * gk / (beta * (gk**2 - eta**2))
        g = g + np.sum(
            (ck / gk**2) * (np.expm1(-np.multiply.outer(t, gk)) + np.multiply.outer(t, gk)), axis=-1
        )
        amp = 4.0 * lam * eta / beta
        s2 = float(polygamma(1, n_terms + 1)) / nu**2
        s3 = -0.5 * float(polygamma(2, n_terms + 1)) / nu**3
        g = g + np.where(t > 0, amp * (t * s2 - s3), 0.0)
    return np.conj(g) - 1j * lam * t


def _i1_block(t, params: SpinBosonParams, variant: str, theta, wts, q: FGRQuadrature | None = None):
    """I1(t) = (1/hbar) int dw J/(pi w^2) [coth(beta hbar w/2)(1 - cos wt) - i sin wt]."""
    t = np.asarray(t, dtype=float)
    lam, kT = params.lam, params.kT
    if variant == "short_time":
        return lam * kT * t**2 / HBAR**2 - 1j * lam * t / HBAR
    if q is not None and q.inner == "matsubara":
        return lineshape_matsubara(params, t, q.n_matsubara, classical=variant == "high_t")
    eta = params.eta_angular
    omega = eta * np.tan(theta)
    # J/(pi w^2) dw = (2 lam / (pi eta)) cot(theta) dtheta after the tangent map
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = 1.0 / np.tan(theta)
        x = omega / (2.0 * kT / HBAR)  # beta hbar w / 2
        if variant == "exact":
            coth = 1.0 / np.tanh(x)
        else:
            coth = 1.0 / x
        wt = np.outer(t, omega)
        re = (cot * coth)[None, :] * (1.0 - np.cos(wt))
        im = cot[None, :] * np.sin(wt)
    # theta -> 0 limits of the integrand
    re[:, 0] = eta * t**2 * kT / HBAR
    im[:, 0] = eta * t
    pref = 2.0 * lam / (math.pi * eta * HBAR)
    return pref * ((re @ wts) - 1j * (im @ wts))


def fgr_integrands(
    params: SpinBosonParams,
    t,
    direction: str = "forward",
    variant: str = "exact",
    quadrature: FGRQuadrature | None = None,
):
    """Return ``(I1(t), I2(t))`` with ``I2 = exp(-+ i |dG| t / hbar) exp(-I1)``."""
    _check_direction(direction)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    q = quadrature or FGRQuadrature()
    theta, wts = _theta_grid(params, q)
    t = np.asarray(t, dtype=float)
    i1 = np.concatenate(
        [_i1_block(t[i : i + q.block], params, variant, theta, wts, q) for i in range(0, t.size, q.block)]
    ) if t.size else np.zeros(0, complex)
    sign = 1.0 if direction == "forward" else -1.0
    i2 = np.exp(-1j * sign * params.abs_dg * t / HBAR - i1)
    return i1, i2


def _long_time_decay(params: SpinBosonParams, variant: str) -> float:
    """Linear growth rate of Re I1 at long times, 2 lam kT / (hbar^2 eta)."""
    if variant == "short_time":
        return math.inf
    return 2.0 * params.lam * params.kT / (HBAR * HBAR * params.eta_angular)


def fgr_diabatic_rate(
    params: SpinBosonParams,
    direction: str = "forward",
    variant: str = "exact",
    quadrature: FGRQuadrature | None = None,
    return_details: bool = False,
):
    """Golden-rule rate from the nested quadrature of the bath correlation.

    The time integral runs over ``[0, T]`` and uses ``I2(-t) = conj(I2(t))``.
    It stops once ``|I2|`` falls below ``envelope_tol`` of its peak.  When the
    envelope decays too slowly (tiny reorganization energy) and ``T`` already
    exceeds ``asymptotic_decades / min(eta, 2 pi kT / hbar)``, the remainder is
    added in closed form using ``I1(t) ~ a + Gamma t``.
    """
    _check_direction(direction)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    q = quadrature or FGRQuadrature()
    theta, wts = _theta_grid(params, q)
    sign = 1.0 if direction == "forward" else -1.0
    delta = params.abs_dg / HBAR
    slow = min(params.eta_angular, 2.0 * math.pi * params.kT / HBAR)
    # the Gaussian short-time form has no exponential regime to hand over to
    t_asym = math.inf if variant == "short_time" else q.asymptotic_decades / slow

    chunks_t, chunks_i1 = [], []
    peak, t_start = 0.0, 0.0
    decayed = False
    while True:
        t = t_start + q.dt * np.arange(q.block)
        i1 = _i1_block(t, params, variant, theta, wts, q)
        chunks_t.append(t)
        chunks_i1.append(i1)
        env = np.exp(-i1.real)
        peak = max(peak, float(env.max()))
        t_end = float(t[-1])
        if env[-1] < q.envelope_tol * peak:
            decayed = True
        if env[-1] < q.integrate_floor * peak:
            break
        if q.asymptotic_tail and t_end >= t_asym:
            break
        if t_end >= q.t_cap:
            break
        t_start = t_end + q.dt
    t = np.concatenate(chunks_t)
    i1 = np.concatenate(chunks_i1)
    i2 = np.exp(-1j * sign * delta * t - i1)
    envelope_end = float(abs(i2[-1]) / peak)

    tail = 0.0 + 0.0j
    if envelope_end >= q.integrate_floor:
        if not decayed and not (q.asymptotic_tail and t[-1] >= t_asym):
            raise QuadratureError(
                f"integrand not decayed at t = {t[-1]:.1f} fs: envelope {envelope_end:.3e} of peak"
            )
        # continue the trapezoid sum through the exponential regime as a geometric series
        ratio = np.exp(-(_long_time_decay(params, variant) + 1j * sign * delta) * q.dt)
        tail = q.dt * i2[-1] * ratio / (1.0 - ratio)

    # Trapezoid on [0, inf).  I2(-t) = conj(I2(t)) makes every odd derivative at
    # t = 0 imaginary, so the real part carries no Euler-Maclaurin end corrections.
    integral = q.dt * (np.sum(i2) - 0.5 * i2[0]) + tail
    rate = params.vc**2 / HBAR**2 * 2.0 * integral.real
    if return_details:
        return FGRResult(rate, t, i1, i2, tail, envelope_end, q)
    return rate


def fgr_high_temperature(params: SpinBosonParams, direction: str = "forward", quadrature=None, **kw):
    """Golden rule with coth(beta hbar w / 2) replaced by 2 / (beta hbar w)."""
    return fgr_diabatic_rate(params, direction, "high_t", quadrature, **kw)


# -- mixed quantum-classical golden rule in the adiabatic basis ---------------


def _mean_gap(params: SpinBosonParams, direction: str, gap_surrogate: str) -> float:
    if gap_surrogate == "bare":
        return params.abs_dg
    shift = params.lam if direction == "forward" else -params.lam
    return abs(params.delta_g + shift)


def fgr_mqc_rate(
    params: SpinBosonParams,
    bath: DiscretizedBath | None = None,
    direction: str = "forward",
    gap_surrogate: str = "shifted",
    n_quad: int = 200_001,
) -> float:
    """Sum over bath modes of Marcus-like rates with derivative-coupling weights.

    ``bath=None`` evaluates the continuum limit, replacing the mode sum by an
    integral against the Drude density (``g_j^2 -> (2/pi) m w J(w) dw``).
    """
    _check_direction(direction)
    lam, kT = params.lam, params.kT
    shift = lam if direction == "forward" else -lam
    gap = _mean_gap(params, direction, gap_surrogate)
    pref = params.vc**2 / (2.0 * gap**4) * (kT / params.mass) * math.sqrt(math.pi * HBAR**2 / (lam * kT))
    if bath is not None:
        expo = np.exp(-((params.delta_g + shift + bath.freq_cm1) ** 2) / (4 * lam * kT))
        return float(pref * np.sum(bath.coupling**2 * expo))
    # continuum: integrate in energy units around the resonance
    centre = -(params.delta_g + shift)
    width = math.sqrt(2.0 * lam * kT)
    lo = max(0.0, centre - 40 * width)
    hi = centre + 40 * width
    e = np.linspace(lo, hi, n_quad)
    jw = drude_spectral_density(e, lam, params.eta)  # J as a function of hbar w
    omega = e / HBAR
    dens = (2.0 / math.pi) * params.mass * omega * jw / HBAR  # g^2 per unit energy
    f = dens * np.exp(-((params.delta_g + shift + e) ** 2) / (4 * lam * kT))
    return float(pref * trapezoid(f, e))


def fgr_mqc_lambda0(params: SpinBosonParams) -> float:
    """lam -> 0 limit of the MQC rate, identical in both directions: 2 kT V^2 J(|dG|) / (hbar |dG|^3)."""
    dg = params.abs_dg
    jw = float(drude_spectral_density(dg, params.lam, params.eta))
    return 2.0 * params.kT * params.vc**2 * jw / (HBAR * dg**3)


# -- analytical AFSSH rates --------------------------------------------------


@dataclass
class AFSSHRates:
    k_f: float
    k_b: float
    k_mqc_f: float
    k_mqc_b: float
    k_up: float  # hop-up rate with the donor-adiabat amplitude near 1
    k_down: float  # hop-down rate with the acceptor-adiabat amplitude near 1
    kdot_down: float  # time slope of the hop-down rate, fs^-2
    k_avg: float  # <k> entering the AFSSH quantum correction factor
    qcf_afssh_f: float
    qcf_afssh_b: float
    tau: float
    omega0: float  # rad/fs
    mqc: str

    @property
    def k_total(self) -> float:
        return self.k_f + self.k_b

    @property
    def p_inf(self) -> float:
        return self.k_b / self.k_total


def hop_kinetics(params: SpinBosonParams, omega0: float | None = None, gap_surrogate: str = "shifted"):
    """Return ``(k_up, k_down)`` hop rates of the trajectory kinetic model.

    ``omega0`` is the reaction-coordinate angular frequency (rad/fs); the
    default is the Drude frequency.
    """
    omega0 = params.eta_angular if omega0 is None else omega0
    g = math.sqrt(2.0 * params.mass * omega0**2 * params.lam)
    speed = math.sqrt(params.kT / (2.0 * math.pi * params.mass))
    boltz = math.exp(-params.beta * params.abs_dg)
    k_up = 4.0 * g * speed / _mean_gap(params, "forward", gap_surrogate) * boltz
    k_down = 4.0 * g * speed / _mean_gap(params, "backward", gap_surrogate)
    return k_up, k_down


def afssh_analytic_rates(
    params: SpinBosonParams,
    tau: float,
    omega0: float | None = None,
    bath: DiscretizedBath | None = None,
    mqc: str = "discrete",
    gap_surrogate: str = "shifted",
) -> AFSSHRates:
    """Surface-hopping rate model with a constant collapse time ``tau`` (fs).

    ``mqc`` selects the golden-rule input: ``"discrete"`` sums over ``bath``
    (built with 300 modes when omitted), ``"continuum"`` integrates against the
    Drude density, ``"lambda0"`` uses the direction-symmetric small-lam limit.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    omega0 = params.eta_angular if omega0 is None else omega0
    if mqc == "lambda0":
        k_mqc_f = k_mqc_b = fgr_mqc_lambda0(params)
    elif mqc in ("discrete", "continuum"):
        if mqc == "discrete" and bath is None:
            bath = build_bath(params, 300)
        src = bath if mqc == "discrete" else None
        k_mqc_f = fgr_mqc_rate(params, src, "forward", gap_surrogate)
        k_mqc_b = fgr_mqc_rate(params, src, "backward", gap_surrogate)
    else:
        raise ValueError("mqc must be 'discrete', 'continuum' or 'lambda0'")
    k_up, k_down = hop_kinetics(params, omega0, gap_surrogate)
    boltz = math.exp(-params.beta * params.abs_dg)
    sat_up = k_up * tau / (1.0 + k_up * tau)
    sat_down = k_down * tau / (1.0 + k_down * tau)
    k_f = k_mqc_f * sat_up / boltz
    k_b = k_mqc_b * sat_down * boltz
    kdot_down = k_mqc_f * k_up / boltz
    g = math.sqrt(2.0 * params.mass * omega0**2 * params.lam)
    speed = math.sqrt(params.kT / (2.0 * math.pi * params.mass))
    k_avg = 4.0 * g * speed * tau / params.abs_dg * math.sqrt(boltz)
    half = math.sqrt(boltz)
    # Q(dG_ij) with dG_ij the free-energy change of the transition: -|dG| forward, +|dG| backward
    qf = k_avg / half / (1.0 + k_avg / half)
    qb = k_avg * half / (1.0 + k_avg * half)
    return AFSSHRates(k_f, k_b, k_mqc_f, k_mqc_b, k_up, k_down, kdot_down, k_avg, qf, qb, tau, omega0, mqc)


def short_time_kinetic_model(t, kdot_down: float, k_up: float):
    """Lower-adiabat population and its slope for trajectories started on the upper adiabat.

    ``P(t) = (kdot/k_up) t + (kdot/k_up^2)(exp(-k_up t) - 1)``.
    """
    t = np.asarray(t, dtype=float)
    ratio = kdot_down / k_up
    p = ratio * t + ratio / k_up * np.expm1(-k_up * t)
    pdot = -ratio * np.expm1(-k_up * t)
    return p, pdot


# -- collected record ---------------------------------------------------------


@dataclass
class RateSet:
    k_marcus_f: float
    k_marcus_b: float
    k_fgr_diabatic_f: float
    k_fgr_diabatic_b: float
    k_fgr_highT_f: float
    k_fgr_highT_b: float
    k_fgr_small_lambda_f: float
    k_fgr_small_lambda_b: float
    k_fgr_mqc_f: float
    k_fgr_mqc_b: float
    k_fgr_mqc_lambda0: float
    qcf_f: float
    qcf_b: float
    afssh: AFSSHRates | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.afssh is not None:
            out["afssh"]["k_total"] = self.afssh.k_total
            out["afssh"]["p_inf"] = self.afssh.p_inf
        return out


def compute_rate_set(
    params: SpinBosonParams,
    tau: float | None = None,
    omega0: float | None = None,
    n_modes: int = 300,
    quadrature: FGRQuadrature | None = None,
) -> RateSet:
    q = quadrature or FGRQuadrature()
    bath = build_bath(params, n_modes)
    x = params.beta * params.abs_dg
    afssh = afssh_analytic_rates(params, tau, omega0, bath) if tau is not None else None
    return RateSet(
        k_marcus_f=marcus_rate(params, "forward"),
        k_marcus_b=marcus_rate(params, "backward"),
        k_fgr_diabatic_f=fgr_diabatic_rate(params, "forward", "exact", q),
        k_fgr_diabatic_b=fgr_diabatic_rate(params, "backward", "exact", q),
        k_fgr_highT_f=fgr_diabatic_rate(params, "forward", "high_t", q),
        k_fgr_highT_b=fgr_diabatic_rate(params, "backward", "high_t", q),
        k_fgr_small_lambda_f=fgr_small_lambda(params, "forward"),
        k_fgr_small_lambda_b=fgr_small_lambda(params, "backward"),
        k_fgr_mqc_f=fgr_mqc_rate(params, bath, "forward"),
        k_fgr_mqc_b=fgr_mqc_rate(params, bath, "backward"),
        k_fgr_mqc_lambda0=fgr_mqc_lambda0(params),
        qcf_f=float(harmonic_qcf(x)),
        qcf_b=float(harmonic_qcf(x) * math.exp(-x)),
        afssh=afssh,
        provenance={
            "quadrature": asdict(q),
            "tau_fs": tau,
            "omega0_rad_per_fs": params.eta_angular if omega0 is None else omega0,
            "n_modes": n_modes,
            "params": asdict(params),
        },
    )
