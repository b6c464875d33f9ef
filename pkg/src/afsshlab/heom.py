"""Hierarchical equations of motion for the Drude spin-boson model.

Internally hbar = 1 and every rate is an angular frequency in rad/fs, so an
energy ``E`` in cm^-1 enters as ``E / HBAR``.  The reduced density matrix lives
in the diabatic (D, A) basis; the bath couples through ``V = |A><A|``.

The hierarchy is tiny (K <= 2, L <= 12 gives at most a few hundred 2x2 blocks),
so the generator is assembled once as a dense Liouvillian.  Fixed-step RK4 is
then a single matrix polynomial, and stepping to the next output point is a
matrix power of it.  This is bitwise the same recurrence as looping RK4 stages,
only much cheaper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from ._accel import njit
from .model import SpinBosonParams
from .units import HBAR

__all__ = [
    "BathExpansion",
    "HEOMConfig",
    "HEOMResult",
    "HEOMError",
    "drude_expansion",
    "build_hierarchy",
    "HierarchyState",
    "heom_rhs",
    "check_matsubara_resonance",
    "propagate_heom",
]


class HEOMError(RuntimeError):
    """Numerical failure during propagation; ``diagnostics`` holds the details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class BathExpansion:
    """Exponential expansion C(t) = sum_k coeffs[k] exp(-rates[k] t), rad/fs units."""

    rates: np.ndarray  # gamma_k, rad/fs
    coeffs: np.ndarray  # c_k, (rad/fs)^2
    residual: float  # terminator constant, rad/fs
    beta: float  # fs

    @property
    def n_terms(self) -> int:
        return self.rates.size

    def correlation(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.rates)) @ self.coeffs


def check_matsubara_resonance(beta: float, eta: float):
    """Reject temperatures where eta equals a Matsubara frequency (cot(beta eta/2) blows up)."""
    nu = 2.0 * math.pi / beta
    k = eta / nu
    if abs(k - round(k)) < 1e-9 and round(k) >= 1:
        raise ValueError(
            f"Drude frequency coincides with Matsubara frequency {int(round(k))}; perturb the temperature slightly"
        )


def drude_expansion(params: SpinBosonParams, K: int) -> BathExpansion:
    """Drude term plus ``K`` Matsubara terms and the low-temperature residual."""
    K = int(K)
    if K < 0:
        raise ValueError("K must be >= 0")
    lam = params.lam / HBAR
    eta = params.eta / HBAR
    beta = HBAR / params.kT
    check_matsubara_resonance(beta, eta)
    nu = 2.0 * math.pi / beta
    gk = nu * np.arange(1, K + 1)
    rates = np.concatenate([[eta], gk])
    coeffs = np.empty(K + 1, dtype=complex)
    coeffs[0] = lam * eta * (1.0 / math.tan(0.5 * beta * eta) - 1j)
    coeffs[1:] = 4.0 * lam * eta * gk / (beta * (gk**2 - eta**2))
    # Markovian remainder of the truncated sum: full sum of Re c_k / gamma_k is 2 lam / beta
    residual = 2.0 * lam / (beta * eta) - float(np.sum(coeffs.real / rates))
    return BathExpansion(rates=rates, coeffs=coeffs, residual=residual, beta=beta)


def build_hierarchy(L: int, K: int) -> list[tuple[int, ...]]:
    """All multi-indices of length K+1 with total depth <= L, lexicographic order."""
    L, K = int(L), int(K)
    if L < 0 or K < 0:
        raise ValueError("L and K must be >= 0")
    width = K + 1
    out = []
    for depth in range(L + 1):
        for combo in combinations_with_replacement(range(width), depth):
            n = [0] * width
            for k in combo:
                n[k] += 1
            out.append(tuple(n))
    out.sort()
    return out


def _neighbour_tables(indices):
    lookup = {n: i for i, n in enumerate(indices)}
    n_ado, width = len(indices), len(indices[0])
    up = np.full((n_ado, width), -1, dtype=np.int64)
    down = np.full((n_ado, width), -1, dtype=np.int64)
    occ = np.array(indices, dtype=np.int64)
    for i, n in enumerate(indices):
        for k in range(width):
            plus = n[:k] + (n[k] + 1,) + n[k + 1 :]
            up[i, k] = lookup.get(plus, -1)
            if n[k] > 0:
                down[i, k] = lookup[n[:k] + (n[k] - 1,) + n[k + 1 :]]
    return occ, up, down


@dataclass
class HierarchyState:
    """Dense ADO array ``rho[i]`` (2x2) ordered like ``indices``; ``rho[0]`` is physical."""

    indices: list
    rho: np.ndarray
    occupations: np.ndarray = field(init=False, repr=False)
    up: np.ndarray = field(init=False, repr=False)
    down: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.indices[0] != tuple([0] * len(self.indices[0])):
            raise ValueError("first index must be the zero vector")
        self.occupations, self.up, self.down = _neighbour_tables(self.indices)
        self.rho = np.asarray(self.rho, dtype=complex).reshape(len(self.indices), 2, 2)

    @classmethod
    def donor(cls, L: int, K: int) -> "HierarchyState":
        idx = build_hierarchy(L, K)
        rho = np.zeros((len(idx), 2, 2), complex)
        rho[0, 0, 0] = 1.0
        return cls(idx, rho)

    @property
    def physical(self) -> np.ndarray:
        return self.rho[0]


def _system_hamiltonian(params: SpinBosonParams) -> np.ndarray:
    # acceptor energy carries the lam counterterm so that the bath-free vertical gap is dG + lam
    return np.array([[0.0, params.vc], [params.vc, params.delta_g + params.lam]]) / HBAR


@njit
def _rhs_kernel(rho, h, occ, up, down, rates, coeffs, residual, out):
    n_ado = rho.shape[0]
    width = rates.shape[0]
    for i in range(n_ado):
        r = rho[i]
        # -i [H, r]
        d00 = -1j * (h[0, 1] * r[1, 0] - r[0, 1] * h[1, 0])
        d01 = -1j * (h[0, 0] * r[0, 1] + h[0, 1] * r[1, 1] - r[0, 0] * h[0, 1] - r[0, 1] * h[1, 1])
        d10 = -1j * (h[1, 0] * r[0, 0] + h[1, 1] * r[1, 0] - r[1, 0] * h[0, 0] - r[1, 1] * h[1, 0])
        d11 = -1j * (h[1, 0] * r[0, 1] - r[1, 0] * h[0, 1])
        damp = 0.0
        for k in range(width):
            damp += occ[i, k] * rates[k]
        d00 -= damp * r[0, 0]
        d01 -= damp * r[0, 1] + residual * r[0, 1]
        d10 -= damp * r[1, 0] + residual * r[1, 0]
        d11 -= damp * r[1, 1]
        for k in range(width):
            j = up[i, k]
            if j >= 0:
                # -i [V, rho_{n+e_k}] with V = |A><A|
                s = rho[j]
                d01 -= -1j * s[0, 1]
                d10 -= 1j * s[1, 0]
            j = down[i, k]
            if j >= 0:
                s = rho[j]
                c = coeffs[k]
                cc = np.conj(c)
                nk = occ[i, k]
                # -i n_k (c V s - c* s V)
                d01 += -1j * nk * (-cc * s[0, 1])
                d10 += -1j * nk * (c * s[1, 0])
                d11 += -1j * nk * (c - cc) * s[1, 1]
        out[i, 0, 0] = d00
        out[i, 0, 1] = d01
        out[i, 1, 0] = d10
        out[i, 1, 1] = d11
    return out


def heom_rhs(state: HierarchyState, expansion: BathExpansion, params: SpinBosonParams) -> np.ndarray:
    """Time derivative of every ADO, same shape as ``state.rho``."""
    if expansion.n_terms != state.occupations.shape[1]:
        raise ValueError("expansion and hierarchy disagree on the number of terms")
    out = np.empty_like(state.rho)
    return _rhs_kernel(
        state.rho,
        _system_hamiltonian(params).astype(complex),
        state.occupations,
        state.up,
        state.down,
        expansion.rates.astype(float),
        expansion.coeffs.astype(complex),
        float(expansion.residual),
        out,
    )


@dataclass(frozen=True)
class HEOMConfig:
    L: int = 8
    K: int = 0
    dt: float = 0.05  # fs
    t_max: float = 1000.0  # fs
    output_every: float = 10.0  # fs
    trace_tol: float = 1e-6


@dataclass
class HEOMResult:
    time: np.ndarray
    P_D: np.ndarray
    P_A: np.ndarray
    coherence: np.ndarray
    config: HEOMConfig
    n_ado: int
    max_trace_error: float
    max_hermiticity_error: float


def _liouvillian(params, expansion, indices):
    """Dense generator M with d vec(rho)/dt = M vec(rho)."""
    probe = HierarchyState(indices, np.zeros((len(indices), 2, 2), complex))
    size = probe.rho.size
    flat = probe.rho.reshape(-1)
    cols = np.empty((size, size), complex)
    for col in range(size):
        flat[:] = 0.0
        flat[col] = 1.0
        cols[:, col] = heom_rhs(probe, expansion, params).reshape(-1)
    return cols


def propagate_heom(params: SpinBosonParams, config: HEOMConfig = HEOMConfig(), initial: HierarchyState | None = None):
    """Fixed-step RK4 from the donor state; returns populations on a uniform grid."""
    if config.dt <= 0 or config.t_max <= 0:
        raise ValueError("dt and t_max must be positive")
    stride = max(1, int(round(config.output_every / config.dt)))
    n_out = int(math.floor(config.t_max / (stride * config.dt) + 1e-9))
    expansion = drude_expansion(params, config.K)
    state = initial or HierarchyState.donor(config.L, config.K)
    M = _liouvillian(params, expansion, state.indices)
    # Extended precision for the polynomial and the repeated squaring: rounding in
    # a double-precision propagator is systematic and adds up linearly over
    # thousands of output intervals.
    hM = config.dt * M.astype(np.clongdouble)
    eye = np.eye(M.shape[0], dtype=np.clongdouble)
    # RK4 applied to a linear system is exactly this degree-4 polynomial
    step = eye + hM @ (eye + hM @ (eye + hM @ (eye + hM / 4) / 3) / 2)
    propagator = np.linalg.matrix_power(step, stride).astype(complex)

    vec = state.rho.reshape(-1).copy()
    rhos = np.empty((n_out + 1, 2, 2), complex)
    rhos[0] = vec[:4].reshape(2, 2)
    for i in range(1, n_out + 1):
        vec = propagator @ vec
        rhos[i] = vec[:4].reshape(2, 2)
        trace_err = abs(rhos[i, 0, 0] + rhos[i, 1, 1] - 1.0)
        if not np.isfinite(trace_err) or trace_err > config.trace_tol:
            raise HEOMError(
                f"trace drift {trace_err:.3e} at t = {i * stride * config.dt:.2f} fs",
                {"time_fs": i * stride * config.dt, "trace_error": float(trace_err), "rho": rhos[i].tolist()},
            )
    time = np.arange(n_out + 1) * stride * config.dt
    trace_err = np.abs(rhos[:, 0, 0] + rhos[:, 1, 1] - 1.0)
    herm_err = np.abs(rhos - np.conj(np.transpose(rhos, (0, 2, 1)))).max(axis=(1, 2))
    state.rho = vec.reshape(state.rho.shape)
    return HEOMResult(
        time=time,
        P_D=rhos[:, 0, 0].real.copy(),
        P_A=rhos[:, 1, 1].real.copy(),
        coherence=rhos[:, 0, 1].copy(),
        config=config,
        n_ado=len(state.indices),
        max_trace_error=float(trace_err.max()),
        max_hermiticity_error=float(herm_err.max()),
    )
