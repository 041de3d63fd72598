"""Atomic structure data and physical constants."""
from . import constants
from .species import (
    FineLevel,
    HfsConstants,
    LineCoupling,
    SpeciesData,
    SpeciesDataError,
    TransitionLine,
    default_species_path,
    dump_species,
    lines_coupling_to,
    load_species,
    parse_species,
    transition_wavelength,
)
from .units import UnitError, to_si

__all__ = [
    "constants",
    "FineLevel",
    "HfsConstants",
    "LineCoupling",
    "SpeciesData",
    "SpeciesDataError",
    "TransitionLine",
    "UnitError",
    "default_species_path",
    "dump_species",
    "lines_coupling_to",
    "load_species",
    "parse_species",
    "to_si",
    "transition_wavelength",
]
