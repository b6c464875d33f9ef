"""Spin-boson model: parameters, bath discretization, adiabatic states.

States are labelled donor ``D`` (unshifted oscillators, minimum at 0, where
dynamics starts) and acceptor ``A`` (shifted oscillators, minimum at
``delta_g < 0``).  Index 0 is D and index 1 is A in every 2x2 diabatic object.
Adiabats are ordered by energy: index 0 is the lower surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .units import AU_MASS, HBAR, KB

__all__ = [
    "SpinBosonParams",
    "DiscretizedBath",
    "PhaseSpaceState",
    "AdiabaticInfo",
    "STANDARD_PARAMS",
    "PARAM_FILE_KEYS",
    "build_bath",
    "drude_spectral_density",
    "diabatic_hamiltonian",
    "adiabatize",
    "sample_thermal",
    "read_param_file",
    "write_param_file",
]

DONOR, ACCEPTOR = 0, 1


@dataclass(frozen=True)
class SpinBosonParams:
    """Physical parameters; energies in cm^-1, temperature in K, mass in a.u."""

    mass_au: float = 1837.0
    delta_g: float = -350.0
    lam: float = 10.0
    eta: float = 50.0
    vc: float = 30.0
    temperature: float = 300.0

    def __post_init__(self):
        for name in ("mass_au", "lam", "eta", "vc", "temperature"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not np.isfinite(self.delta_g):
            raise ValueError("delta_g must be finite")

    @property
    def kT(self) -> float:
        return KB * self.temperature

    @property
    def beta(self) -> float:
        return 1.0 / self.kT

    @property
    def mass(self) -> float:
        """Mass in cm^-1 fs^2 / bohr^2."""
        return self.mass_au * AU_MASS

    @property
    def eta_angular(self) -> float:
        return self.eta / HBAR

    @property
    def abs_dg(self) -> float:
        return abs(self.delta_g)

    def barrier(self) -> float:
        """Diabatic crossing energy above the donor minimum, (dG + lam)^2 / (4 lam)."""
        return (self.delta_g + self.lam) ** 2 / (4.0 * self.lam)

    def with_(self, **changes) -> "SpinBosonParams":
        return replace(self, **changes)


STANDARD_PARAMS = SpinBosonParams()


def drude_spectral_density(omega, lam, eta):
    """J(w) = 2 lam eta w / (eta^2 + w^2); ``omega`` and ``eta`` in the same units."""
    omega = np.asarray(omega, dtype=float)
    return 2.0 * lam * eta * omega / (eta**2 + omega**2)


@dataclass(frozen=True)
class DiscretizedBath:
    """Finite set of harmonic modes; ``freq_cm1`` ascending, ``coupling`` in cm^-1/bohr."""

    freq_cm1: np.ndarray
    coupling: np.ndarray
    mass: float

    @property
    def n_modes(self) -> int:
        return self.freq_cm1.size

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies in rad/fs."""
        return self.freq_cm1 / HBAR

    def reorganization_energy(self) -> float:
        return float(np.sum(self.coupling**2 / (2.0 * self.mass * self.omega**2)))

    def spectral_weights(self) -> np.ndarray:
        """Delta-function weights (pi/2) g^2 / (m w) of J, in cm^-1 rad/fs."""
        return 0.5 * np.pi * self.coupling**2 / (self.mass * self.omega)

    def acceptor_shift(self) -> np.ndarray:
        """Acceptor minimum position -g / (m w^2) in bohr."""
        return -self.coupling / (self.mass * self.omega**2)


def build_bath(params: SpinBosonParams, n_modes: int = 300) -> DiscretizedBath:
    """Equal-reorganization-energy discretization of the Drude spectral density.

    Mode ``j`` (1-based) sits at ``eta * tan((j - 1/2) pi / (2 N))`` and carries
    exactly ``lam / N`` of reorganization energy.
    """
    n_modes = int(n_modes)
    if n_modes < 1:
        raise ValueError("bath needs at least one mode")
    if params.lam <= 0 or params.eta <= 0:
        raise ValueError("lam and eta must be positive")
    j = np.arange(1, n_modes + 1, dtype=float)
    freq = params.eta * np.tan((j - 0.5) * np.pi / (2.0 * n_modes))
    omega = freq / HBAR
    coupling = omega * math.sqrt(2.0 * params.mass * params.lam / n_modes)
    return DiscretizedBath(freq_cm1=freq, coupling=coupling, mass=params.mass)


@dataclass
class PhaseSpaceState:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.shape != self.p.shape or self.x.ndim != 1:
            raise ValueError("x and p must be 1-D arrays of equal length")

    def copy(self) -> "PhaseSpaceState":
        return PhaseSpaceState(self.x.copy(), self.p.copy())


@dataclass
class AdiabaticInfo:
    energies: np.ndarray  # (2,), ascending
    forces: np.ndarray  # (2, N)
    dcoupling: np.ndarray  # (N,), d_12 = <1|grad 2>
    rotation: np.ndarray  # (2, 2), columns are adiabats in the (D, A) basis
    diabatic_gap: float  # H_AA - H_DD

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def _check_dims(bath: DiscretizedBath, x: np.ndarray):
    if x.shape != (bath.n_modes,):
        raise ValueError(f"state has {x.shape} entries, bath has {bath.n_modes} modes")


def diabatic_hamiltonian(params: SpinBosonParams, bath: DiscretizedBath, x) -> np.ndarray:
    x = np.asarray(getattr(x, "x", x), dtype=float)
    _check_dims(bath, x)
    w2 = bath.mass * bath.omega**2
    h_dd = 0.5 * np.sum(w2 * x**2)
    h_aa = params.delta_g + 0.5 * np.sum(w2 * (x + bath.coupling / w2) ** 2)
    return np.array([[h_dd, params.vc], [params.vc, h_aa]])


def _rotation(delta: float, vc: float) -> np.ndarray:
    theta = 0.5 * math.atan2(2.0 * vc, delta)
    c, s = math.cos(theta), math.sin(theta)
    # phase convention fixes d_12 = +vc g / (delta^2 + 4 vc^2)
    return np.array([[c, -s], [-s, -c]])


def adiabatize(params: SpinBosonParams, bath: DiscretizedBath, x) -> AdiabaticInfo:
    """Closed-form diagonalization with Hellmann-Feynman forces."""
    x = np.asarray(getattr(x, "x", x), dtype=float)
    _check_dims(bath, x)
    g = bath.coupling
    w2 = bath.mass * bath.omega**2
    h_dd = 0.5 * np.sum(w2 * x**2)
    delta = params.delta_g + params.lam + float(np.dot(g, x))
    root = math.sqrt(delta * delta + 4.0 * params.vc**2)
    mean = h_dd + 0.5 * delta
    energies = np.array([mean - 0.5 * root, mean + 0.5 * root])
    grad_mean = w2 * x + 0.5 * g
    grad_half_root = 0.5 * (delta / root) * g
    forces = np.stack([-(grad_mean - grad_half_root), -(grad_mean + grad_half_root)])
    dcoupling = params.vc * g / (delta * delta + 4.0 * params.vc**2)
    return AdiabaticInfo(energies, forces, dcoupling, _rotation(delta, params.vc), delta)


def sample_thermal(
    params: SpinBosonParams,
    bath: DiscretizedBath,
    surface_minimum: str = "donor",
    rng_seed=None,
) -> PhaseSpaceState:
    """Classical Boltzmann sample around a diabatic minimum."""
    if surface_minimum not in ("donor", "acceptor"):
        raise ValueError("surface_minimum must be 'donor' or 'acceptor'")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    kT = params.kT
    sigma_x = np.sqrt(kT / (bath.mass * bath.omega**2))
    sigma_p = math.sqrt(bath.mass * kT)
    x = rng.standard_normal(bath.n_modes) * sigma_x
    p = rng.standard_normal(bath.n_modes) * sigma_p
    if surface_minimum == "acceptor":
        x = x + bath.acceptor_shift()
    return PhaseSpaceState(x, p)


# -- parameter files -------------------------------------------------------

PARAM_FILE_KEYS = {
    "mass_au": ("mass_au", float),
    "delta_g_cm1": ("delta_g", float),
    "lambda_cm1": ("lam", float),
    "eta_cm1": ("eta", float),
    "vc_cm1": ("vc", float),
    "temperature_k": ("temperature", float),
}
EXTRA_PARAM_KEYS = {"n_modes": int, "seed": int}


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = parts
        out[key.strip()] = value.strip()
    return out


def params_from_mapping(mapping: dict) -> tuple[SpinBosonParams, dict]:
    """Split a flat mapping into model params and the extra keys (n_modes, seed)."""
    kwargs, extras = {}, {}
    for key, value in mapping.items():
        if key in PARAM_FILE_KEYS:
            attr, conv = PARAM_FILE_KEYS[key]
            kwargs[attr] = conv(value)
        elif key in EXTRA_PARAM_KEYS:
            extras[key] = EXTRA_PARAM_KEYS[key](value)
    return SpinBosonParams(**kwargs), extras


def read_param_file(path) -> tuple[SpinBosonParams, dict]:
    mapping = parse_key_values(Path(path).read_text())
    unknown = sorted(set(mapping) - set(PARAM_FILE_KEYS) - set(EXTRA_PARAM_KEYS))
    if unknown:
        raise ValueError(f"unknown parameter keys: {', '.join(unknown)}")
    return params_from_mapping(mapping)


def params_to_mapping(params: SpinBosonParams) -> dict[str, float]:
    return {key: getattr(params, attr) for key, (attr, _) in PARAM_FILE_KEYS.items()}


def write_param_file(path, params: SpinBosonParams, n_modes: int | None = None, seed: int | None = None):
    lines = [f"{k} = {v!r}" for k, v in params_to_mapping(params).items()]
    if n_modes is not None:
        lines.append(f"n_modes = {int(n_modes)}")
    if seed is not None:
        lines.append(f"seed = {int(seed)}")
    Path(path).write_text("\n".join(lines) + "\n")
