"""Working unit system: energies in cm^-1, time in fs, lengths in bohr.

Masses are quoted in atomic units (electron masses) and converted to
cm^-1 fs^2 / bohr^2 so that ``p**2 / (2 m)`` comes out in cm^-1 when ``p`` is
in cm^-1 fs / bohr.  Angular frequencies are rad/fs; a wavenumber ``w`` in
cm^-1 corresponds to the angular frequency ``w / HBAR``.
"""

from __future__ import annotations

from dataclasses import dataclass

import scipy.constants as _C

__all__ = ["UnitSystem", "UNITS", "HBAR", "KB", "AU_MASS"]

_CM1_IN_J = _C.h * _C.c * 100.0
_FS = 1e-15
_BOHR = _C.physical_constants["Bohr radius"][0]


@dataclass(frozen=True)
class UnitSystem:
    hbar_cm1_fs: float = _C.hbar / (_CM1_IN_J * _FS)
    kB_cm1_per_K: float = _C.k / _CM1_IN_J
    au_mass: float = _C.m_e * _BOHR**2 / (_CM1_IN_J * _FS**2)
    bohr_per_angstrom: float = 1e-10 / _BOHR
    fs_per_au_time: float = _C.physical_constants["atomic unit of time"][0] / _FS
    cm1_per_hartree: float = _C.physical_constants["hartree-inverse meter relationship"][0] / 100.0

    def energy_to_angular(self, e_cm1):
        """cm^-1 -> rad/fs."""
        return e_cm1 / self.hbar_cm1_fs

    def angular_to_energy(self, w):
        """rad/fs -> cm^-1."""
        return w * self.hbar_cm1_fs

    def mass_from_au(self, m_au):
        return m_au * self.au_mass

    def mass_to_au(self, m):
        return m / self.au_mass

    def kT(self, temperature_k):
        return self.kB_cm1_per_K * temperature_k


UNITS = UnitSystem()
HBAR = UNITS.hbar_cm1_fs
KB = UNITS.kB_cm1_per_K
AU_MASS = UNITS.au_mass
