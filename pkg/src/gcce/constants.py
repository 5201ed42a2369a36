"""Physical constants in the internal unit system.

Internal units:

- distance: Angstrom
- time: millisecond
- magnetic field: Gauss
- gyromagnetic ratio: rad / ms / G
- energies and couplings: angular frequency, rad / ms
"""

import numpy as np
from scipy import constants as _c

HBAR = _c.hbar
MU_B = _c.physical_constants["Bohr magneton"][0]
MU_N = _c.physical_constants["nuclear magneton"][0]
G_FREE = -_c.physical_constants["electron g factor"][0]
AVOGADRO = _c.Avogadro

# rad s^-1 T^-1 -> rad ms^-1 G^-1
_SI_GYRO_TO_INTERNAL = 1e-3 * 1e-4

#: mu_B / hbar in rad/ms/G (multiply by a g-factor to get |gamma|)
BOHR_GYRO = MU_B / HBAR * _SI_GYRO_TO_INTERNAL
#: mu_N / hbar in rad/ms/G
NUCLEAR_GYRO = MU_N / HBAR * _SI_GYRO_TO_INTERNAL
#: gyromagnetic ratio of the free electron (negative: moment antiparallel to spin)
ELECTRON_GYRO = -G_FREE * BOHR_GYRO

#: mu0/(4 pi) * hbar with gamma in rad/ms/G and r in Angstrom gives rad/ms
DIPOLAR_PREFACTOR = (_c.mu_0 / (4 * np.pi)) * HBAR / _SI_GYRO_TO_INTERNAL**2 / 1e-30 * 1e-3

#: 1 MHz expressed in rad/ms
MHZ = 2 * np.pi * 1e3
#: 1 Tesla expressed in Gauss
TESLA = 1e4
#: 1 microsecond expressed in ms
US = 1e-3


def mhz_to_internal(value):
    """Convert a frequency in MHz to angular frequency in rad/ms."""
    return np.asarray(value, dtype=float) * MHZ


def gyro_from_mhz_per_tesla(value):
    """Convert a gyromagnetic ratio quoted in MHz/T to rad/ms/G."""
    return float(value) * MHZ / TESLA
