"""Physical constants (CODATA, via scipy) used throughout the package.

Every other module imports constants from here so there is exactly one
definition of each.
"""
from scipy import constants as _c

h = _c.h
hbar = _c.hbar
c = _c.c
epsilon_0 = _c.epsilon_0
k_B = _c.k
e = _c.e
a_0 = _c.physical_constants["Bohr radius"][0]
atomic_mass = _c.physical_constants["atomic mass constant"][0]
ea0 = e * a_0
"""Atomic unit of electric dipole moment (C m)."""
