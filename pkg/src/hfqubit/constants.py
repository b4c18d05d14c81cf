"""Physical constants in the units used throughout the package.

Energies are frequencies in MHz (E/h), magnetic fields in mT.
"""
from scipy import constants as _c

#: Bohr magneton over Planck's constant, MHz/mT.
MU_B_MHZ_PER_MT = 13.996245

HBAR = _c.hbar
K_B = _c.k
C_LIGHT = _c.c

#: Converts MHz/mT^2 to Hz/uT^2 (numerically 1).
MHZ_PER_MT2_TO_HZ_PER_UT2 = 1e6 / 1e6

#: Default fiber group index and per-attempt lifetime budget for link estimates.
FIBER_INDEX = 1.468
LIFETIMES_PER_ATTEMPT = 10

#: Seed used by every stochastic routine unless one is given.
DEFAULT_SEED = 139_2022
