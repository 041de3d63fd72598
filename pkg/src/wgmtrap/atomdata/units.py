"""Unit-annotated quantities for data and configuration files.

Numeric entries are written as inline tables ``{value = 5.9786, unit = "ea0"}``.
:func:`to_si` converts one entry to SI for a given physical kind. Frequencies
given in Hz-like units are cycles per second; for the ``angular_frequency``
kind they are multiplied by 2 pi, so ``{value = 3, unit = "MHz"}`` means
``2 pi x 3 MHz``.
"""
from __future__ import annotations

import math
from typing import Any

from . import constants as const

__all__ = ["UnitError", "to_si", "from_si_unit", "KINDS"]


class UnitError(ValueError):
    pass


_HZ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12}
_LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
_POWER = {"W": 1.0, "mW": 1e-3, "uW": 1e-6}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}


def _angular(value: float, unit: str) -> float:
    if unit == "rad/s":
        return value
    if unit in _HZ:
        return 2 * math.pi * value * _HZ[unit]
    if unit == "cm^-1":
        return 2 * math.pi * const.c * 100.0 * value
    if unit in _LENGTH:
        # vacuum wavelength
        if value <= 0:
            raise UnitError("wavelength must be positive")
        return 2 * math.pi * const.c / (value * _LENGTH[unit])
    if unit == "eV":
        return value * const.e / const.hbar
    raise UnitError(f"unit {unit!r} not valid for an angular frequency")


def _scale(table: dict[str, float], kind: str):
    def conv(value: float, unit: str) -> float:
        try:
            return value * table[unit]
        except KeyError:
            raise UnitError(f"unit {unit!r} not valid for {kind}") from None
    return conv


def _energy(value: float, unit: str) -> float:
    if unit == "J":
        return value
    if unit == "mK":
        return value * 1e-3 * const.k_B
    if unit == "uK":
        return value * 1e-6 * const.k_B
    if unit == "K":
        return value * const.k_B
    if unit in _HZ:
        return value * _HZ[unit] * const.h
    raise UnitError(f"unit {unit!r} not valid for an energy")


def _angle(value: float, unit: str) -> float:
    if unit == "rad":
        return value
    if unit == "deg":
        return math.radians(value)
    raise UnitError(f"unit {unit!r} not valid for an angle")


KINDS = {
    "angular_frequency": _angular,
    "frequency": _scale(_HZ, "a frequency"),
    "dipole": _scale({"C*m": 1.0, "C m": 1.0, "ea0": const.ea0, "D": 1e-21 / const.c}, "a dipole moment"),
    "mass": _scale({"kg": 1.0, "u": const.atomic_mass}, "a mass"),
    "intensity": _scale({"W/m^2": 1.0, "mW/cm^2": 10.0}, "an intensity"),
    "length": _scale(_LENGTH, "a length"),
    "power": _scale(_POWER, "a power"),
    "time": _scale(_TIME, "a time"),
    "energy": _energy,
    "angle": _angle,
    "dimensionless": _scale({"1": 1.0, "": 1.0}, "a dimensionless number"),
}

# unit written back when serialising SI values
_SI_UNIT = {
    "angular_frequency": "rad/s",
    "frequency": "Hz",
    "dipole": "C*m",
    "mass": "kg",
    "intensity": "W/m^2",
    "length": "m",
    "power": "W",
    "time": "s",
    "energy": "J",
    "angle": "rad",
    "dimensionless": "1",
}


def to_si(entry: Any, kind: str, path: str = "") -> float:
    """Convert a ``{value, unit}`` table to a float in SI units.

    Raises
    ------
    UnitError
        If the entry lacks a unit, the value is not numeric, or the unit does
        not belong to ``kind``. The message carries ``path``.
    """
    where = f" at {path}" if path else ""
    if not isinstance(entry, dict) or "value" not in entry or "unit" not in entry:
        raise UnitError(f"expected {{value = ..., unit = ...}}{where}, got {entry!r}")
    value = entry["value"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise UnitError(f"non-numeric value {value!r}{where}")
    try:
        return float(KINDS[kind](float(value), str(entry["unit"]).strip()))
    except UnitError as exc:
        raise UnitError(f"{exc}{where}") from None


def from_si_unit(kind: str) -> str:
    return _SI_UNIT[kind]
