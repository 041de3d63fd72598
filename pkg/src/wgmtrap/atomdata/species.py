"""Atomic structure data: fine-structure levels, E1 lines and hfs constants.

Data files are TOML with four kinds of sections::

    [species]           name, nuclear_spin, mass, saturation_intensity, gamma
    [level."5P3/2"]     n, L, J, energy
    [line."a-b"]        lower, upper, reduced_dipole[, omega]
    [hfs."5P3/2"]       A, B

Quantum numbers are plain numbers or strings such as ``"3/2"``. Every
physical quantity is a ``{value, unit}`` table (see :mod:`.units`).
Reduced dipole matrix elements follow the symmetric (Edmonds) convention,
``|<a||d||b>| = |<b||d||a>|``.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from ..angular import twice
from .units import UnitError, from_si_unit, to_si

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "SpeciesDataError",
    "FineLevel",
    "TransitionLine",
    "HfsConstants",
    "SpeciesData",
    "LineCoupling",
    "load_species",
    "parse_species",
    "dump_species",
    "lines_coupling_to",
    "default_species_path",
]


class SpeciesDataError(ValueError):
    """Malformed or inconsistent atomic data; the message names the field path."""


@dataclass(frozen=True)
class FineLevel:
    key: str
    n: int
    L: int
    twoJ: int
    energy: float  # rad/s above the ground level

    @property
    def J(self) -> float:
        return self.twoJ / 2


@dataclass(frozen=True)
class TransitionLine:
    lower: str
    upper: str
    reduced_dipole: float  # C m
    omega: float  # rad/s


@dataclass(frozen=True)
class HfsConstants:
    A_hfs: float  # Hz
    B_hfs: float = 0.0  # Hz


@dataclass(frozen=True)
class SpeciesData:
    name: str
    twoI: int
    mass: float
    levels: tuple[FineLevel, ...]
    lines: tuple[TransitionLine, ...]
    hfs: Mapping[str, HfsConstants]
    I_sat: float
    gamma: float

    @property
    def I(self) -> float:
        return self.twoI / 2

    def level(self, key: str) -> FineLevel:
        for lvl in self.levels:
            if lvl.key == key:
                return lvl
        raise KeyError(f"unknown level {key!r}")

    @property
    def ground(self) -> FineLevel:
        return min(self.levels, key=lambda lvl: lvl.energy)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpeciesData):
            return NotImplemented
        return (
            self.name == other.name and self.twoI == other.twoI and self.mass == other.mass
            and self.levels == other.levels and self.lines == other.lines
            and dict(self.hfs) == dict(other.hfs)
            and self.I_sat == other.I_sat and self.gamma == other.gamma
        )

    def __hash__(self) -> int:
        return hash((self.name, self.twoI, self.mass, self.levels, self.lines,
                     tuple(sorted(self.hfs.items())), self.I_sat, self.gamma))


@dataclass(frozen=True)
class LineCoupling:
    """One line seen from a given level: ``omega`` is positive if ``other`` lies above."""

    other: FineLevel
    reduced_dipole: float
    omega: float
    line: TransitionLine


def _quantum_number(raw, path: str) -> int:
    """Doubled quantum number from an int or a ``"p/q"`` string."""
    try:
        if isinstance(raw, bool):
            raise ValueError
        return twice(raw if not isinstance(raw, float) else repr(raw))
    except (ValueError, TypeError, ZeroDivisionError):
        raise SpeciesDataError(f"{path}: {raw!r} is not a half-integer") from None


def _require(table: dict, name: str, path: str):
    if name not in table:
        raise SpeciesDataError(f"{path}.{name}: missing")
    return table[name]


def _quantity(table: dict, name: str, kind: str, path: str) -> float:
    try:
        return to_si(_require(table, name, path), kind, f"{path}.{name}")
    except UnitError as exc:
        raise SpeciesDataError(str(exc)) from None


def parse_species(doc: Mapping) -> SpeciesData:
    """Build and validate :class:`SpeciesData` from an already-parsed document."""
    sp = _require(doc, "species", "")
    if not isinstance(sp, dict):
        raise SpeciesDataError("species: expected a table")
    twoI = _quantum_number(_require(sp, "nuclear_spin", "species"), "species.nuclear_spin")
    if twoI < 0:
        raise SpeciesDataError("species.nuclear_spin: negative")
    mass = _quantity(sp, "mass", "mass", "species")
    if mass <= 0:
        raise SpeciesDataError("species.mass: must be positive")
    I_sat = _quantity(sp, "saturation_intensity", "intensity", "species")
    gamma = _quantity(sp, "gamma", "angular_frequency", "species")

    levels = []
    for key, tbl in doc.get("level", {}).items():
        path = f"level.{key}"
        n = _require(tbl, "n", path)
        L = _require(tbl, "L", path)
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise SpeciesDataError(f"{path}.n: expected a positive integer")
        if isinstance(L, bool) or not isinstance(L, int) or L < 0 or L >= n:
            raise SpeciesDataError(f"{path}.L: expected an integer 0 <= L < n")
        twoJ = _quantum_number(_require(tbl, "J", path), f"{path}.J")
        if twoJ not in (abs(2 * L - 1), 2 * L + 1):
            raise SpeciesDataError(f"{path}.J: J = {twoJ}/2 incompatible with L = {L}")
        energy = _quantity(tbl, "energy", "angular_frequency", path)
        levels.append(FineLevel(key, n, L, twoJ, energy))
    if not levels:
        raise SpeciesDataError("level: no levels defined")
    ground = min(levels, key=lambda lvl: lvl.energy)
    if ground.energy != 0.0:
        raise SpeciesDataError(f"level.{ground.key}.energy: ground level must be exactly 0")
    by_key = {lvl.key: lvl for lvl in levels}

    lines = []
    for key, tbl in doc.get("line", {}).items():
        path = f"line.{key}"
        lo, up = _require(tbl, "lower", path), _require(tbl, "upper", path)
        for end, name in ((lo, "lower"), (up, "upper")):
            if end not in by_key:
                raise SpeciesDataError(f"{path}.{name}: unknown level {end!r}")
        d = _quantity(tbl, "reduced_dipole", "dipole", path)
        if d <= 0:
            raise SpeciesDataError(f"{path}.reduced_dipole: must be positive")
        if "omega" in tbl:
            omega = _quantity(tbl, "omega", "angular_frequency", path)
        else:
            omega = by_key[up].energy - by_key[lo].energy
        if omega <= 0:
            raise SpeciesDataError(f"{path}.omega: upper level must lie above lower level")
        if abs(by_key[up].twoJ - by_key[lo].twoJ) > 2 or by_key[up].twoJ + by_key[lo].twoJ < 2:
            raise SpeciesDataError(f"{path}: not an E1-allowed J pair")
        lines.append(TransitionLine(lo, up, d, omega))

    hfs = {}
    for key, tbl in doc.get("hfs", {}).items():
        path = f"hfs.{key}"
        if key not in by_key:
            raise SpeciesDataError(f"{path}: unknown level {key!r}")
        A = _quantity(tbl, "A", "frequency", path)
        B = _quantity(tbl, "B", "frequency", path) if "B" in tbl else 0.0
        if B != 0.0 and (by_key[key].twoJ < 2 or twoI < 2):
            raise SpeciesDataError(f"{path}.B: quadrupole constant requires J >= 1 and I >= 1")
        hfs[key] = HfsConstants(A, B)

    return SpeciesData(
        name=str(sp.get("name", "")),
        twoI=twoI,
        mass=mass,
        levels=tuple(levels),
        lines=tuple(lines),
        hfs=MappingProxyType(hfs),
        I_sat=I_sat,
        gamma=gamma,
    )


def load_species(path=None) -> SpeciesData:
    """Read a species data file (default: the bundled 85Rb data); see the
    module docstring for the schema."""
    path = default_species_path() if path is None else Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise SpeciesDataError(f"{path}: parse error: {exc}") from None
    return parse_species(doc)


def default_species_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "rb85.toml"


def _fmt_qn(two: int) -> str:
    return str(two // 2) if two % 2 == 0 else f"{two}/2"


def _q(value: float, kind: str) -> str:
    return f'{{ value = {value!r}, unit = "{from_si_unit(kind)}" }}'


def dump_species(species: SpeciesData) -> str:
    """Serialise to the data-file format, all values in SI units."""
    out = [
        "[species]",
        f'name = "{species.name}"',
        f'nuclear_spin = "{_fmt_qn(species.twoI)}"',
        f"mass = {_q(species.mass, 'mass')}",
        f"saturation_intensity = {_q(species.I_sat, 'intensity')}",
        f"gamma = {_q(species.gamma, 'angular_frequency')}",
        "",
    ]
    for lvl in species.levels:
        out += [
            f'[level."{lvl.key}"]',
            f"n = {lvl.n}",
            f"L = {lvl.L}",
            f'J = "{_fmt_qn(lvl.twoJ)}"',
            f"energy = {_q(lvl.energy, 'angular_frequency')}",
            "",
        ]
    for ln in species.lines:
        out += [
            f'[line."{ln.lower}-{ln.upper}"]',
            f'lower = "{ln.lower}"',
            f'upper = "{ln.upper}"',
            f"reduced_dipole = {_q(ln.reduced_dipole, 'dipole')}",
            f"omega = {_q(ln.omega, 'angular_frequency')}",
            "",
        ]
    for key, hc in species.hfs.items():
        out += [
            f'[hfs."{key}"]',
            f"A = {_q(hc.A_hfs, 'frequency')}",
            f"B = {_q(hc.B_hfs, 'frequency')}",
            "",
        ]
    return "\n".join(out)


def lines_coupling_to(species: SpeciesData, level: str) -> list[LineCoupling]:
    """All lines touching ``level``, with the transition frequency signed
    positive when the partner level lies above."""
    species.level(level)  # raises KeyError for unknown keys
    found = []
    for ln in species.lines:
        if ln.lower == level:
            found.append(LineCoupling(species.level(ln.upper), ln.reduced_dipole, ln.omega, ln))
        elif ln.upper == level:
            found.append(LineCoupling(species.level(ln.lower), ln.reduced_dipole, -ln.omega, ln))
    return found


def transition_wavelength(line: TransitionLine) -> float:
    """Vacuum wavelength of a line in metres."""
    from .constants import c
    return 2 * math.pi * c / line.omega
