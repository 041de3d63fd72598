"""Experiment configuration: TOML with unit-annotated quantities.

Every physical number is written ``{ value = ..., unit = "..." }`` exactly
as in the atomic data files. Missing keys take the defaults in
``DEFAULT_CONFIG``; :func:`validate` reports every violated constraint
with its field path without running any computation.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .atomdata import default_species_path
from .atomdata.units import UnitError, to_si

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "DEFAULT_CONFIG", "DEFAULT_CONFIG_TOML",
           "load_config", "validate", "config_from_dict"]


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


def _q(value, unit):
    return {"value": value, "unit": unit}


DEFAULT_CONFIG = {
    "species": {"path": ""},
    "beams": {
        "trap": {
            "power": _q(18.7, "mW"),
            "waist": _q(3.5, "um"),
            "wavelength": _q(783.68, "nm"),
            "incidence_angle": _q(17.0, "deg"),
        },
        "compensation": {
            "line_upper": "5D5/2",
            "detuning": _q(927.0, "MHz"),
            "waist_ratio": _q(1.5, "1"),
            "elliptical_pol": {"x": [0.0, 0.0], "y": [0.98, 0.0], "z": [0.0, 0.20]},
        },
        "probe": {"intensity_center": _q(2.0, "1")},
    },
    "surface": {"refractive_index": _q(1.45, "1"), "casimir_polder": True},
    "resonator": {
        "radius": _q(18.0, "um"),
        "axial_curvature": _q(0.014, "1/um"),
        "refractive_index": _q(1.4537, "1"),
        "g_max": _q(43.7, "MHz"),
        "axial_extent": _q(15.0, "um"),
    },
    "cqed": {
        "kappa0": _q(5.0, "MHz"),
        "kappa_ext": _q(5.0, "MHz"),
        "fluorescence_resonator_detuning": _q(10.0, "MHz"),
    },
    "grids": {
        "compensation_scan": {"start": _q(0.0, "mW"), "stop": _q(0.7, "mW"), "num": 141},
        "fluorescence": {"start": _q(0.0, "mW"), "stop": _q(1.2, "mW"), "num": 61},
        "transmission_power": {"start": _q(0.30, "mW"), "stop": _q(0.50, "mW"), "num": 21},
        "detuning": {"start": _q(-40.0, "MHz"), "stop": _q(40.0, "MHz"), "num": 161},
        "transmission_panels": {"4a": _q(400.0, "uW"), "4b": _q(0.0, "uW"),
                                "S5a": _q(440.0, "uW"), "S5b": _q(490.0, "uW")},
    },
    "montecarlo": {
        "seed": 20240101,
        "n_per_energy": 500,
        "duration": _q(200.0, "us"),
        "energy_min": _q(0.05, "1"),
        "energy_max": _q(0.95, "1"),
        "energy_points": 25,
        "E0": _q(0.6667, "1"),
        "sigma_E": _q(0.2, "1"),
    },
    "output": {"dir": "wgmtrap-output"},
}

_LENGTH_INV = {"1/m": 1.0, "1/um": 1e6}


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _is_quantity(v) -> bool:
    return isinstance(v, dict) and set(v) == {"value", "unit"}


def dumps_toml(doc: dict) -> str:
    """Minimal TOML writer for nested tables of scalars, lists and unit tables."""
    lines: list[str] = []

    def emit(table: dict, prefix: str):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict) or _is_quantity(v)
                   or k == "elliptical_pol"}
        subs = {k: v for k, v in table.items() if k not in scalars}
        if prefix and scalars:
            lines.append(f"[{prefix}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {_toml_value(v)}")
        if scalars:
            lines.append("")
        for k, v in subs.items():
            emit(v, f"{prefix}.{k}" if prefix else k)

    emit(doc, "")
    return "\n".join(lines)


DEFAULT_CONFIG_TOML = dumps_toml(DEFAULT_CONFIG)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and not _is_quantity(v) and isinstance(out.get(k), dict) and not _is_quantity(out[k]):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Flattened configuration in SI units (rad/s for rates)."""

    raw: dict
    species_path: Path
    trap_power: float
    trap_waist: float
    trap_wavelength: float
    incidence_angle: float
    comp_line_upper: str
    comp_detuning: float
    waist_ratio: float
    elliptical_pol: tuple
    probe_Isat: float
    surface_index: float
    casimir_polder: bool
    res_radius: float
    res_curvature: float
    res_index: float
    g_max: float
    axial_extent: float
    decay_length: float | None
    kappa0: float
    kappa_ext: float
    fluor_Delta_rl: float
    grid_scan: np.ndarray
    grid_fluor: np.ndarray
    grid_trans_power: np.ndarray
    grid_detuning: np.ndarray
    transmission_panels: dict
    seed: int
    n_per_energy: int
    duration: float
    energy_grid: tuple
    E0_fraction: float
    sigmaE_fraction: float
    output_dir: Path

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the merged raw configuration."""
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, **kw)


class _Collector:
    def __init__(self, doc):
        self.doc = doc
        self.errors: list[tuple[str, str]] = []

    def node(self, path: str):
        cur = self.doc
        for part in path.split("."):
            if not isinstance(cur, dict) or part not in cur:
                self.errors.append((path, "missing"))
                return None
            cur = cur[part]
        return cur

    def qty(self, path, kind, positive=False, nonneg=False, default=math.nan):
        v = self.node(path)
        if v is None:
            return default
        try:
            if kind == "inverse_length":
                if not _is_quantity(v) or v["unit"] not in _LENGTH_INV:
                    raise UnitError(f"expected {{value, unit}} with unit in {sorted(_LENGTH_INV)}")
                x = float(v["value"]) * _LENGTH_INV[v["unit"]]
            else:
                x = to_si(v, kind)
        except (UnitError, TypeError, ValueError) as exc:
            self.errors.append((path, str(exc)))
            return default
        if positive and not x > 0:
            self.errors.append((path, f"must be positive, got {v['value']!r} {v['unit']}"))
        elif nonneg and not x >= 0:
            self.errors.append((path, f"must be >= 0, got {v['value']!r} {v['unit']}"))
        return x

    def integer(self, path, minimum=None, default=0):
        v = self.node(path)
        if v is None:
            return default
        if isinstance(v, bool) or not isinstance(v, int):
            self.errors.append((path, f"expected an integer, got {v!r}"))
            return default
        if minimum is not None and v < minimum:
            self.errors.append((path, f"must be >= {minimum}"))
        return v

    def grid(self, path, kind):
        start = self.qty(f"{path}.start", kind)
        stop = self.qty(f"{path}.stop", kind)
        num = self.integer(f"{path}.num", default=0)
        if isinstance(num, int) and num < 1:
            self.errors.append((f"{path}.num", "grid is empty"))
            return np.zeros(0)
        if num > 1 and not stop > start:
            self.errors.append((path, "grid must be strictly increasing (stop > start)"))
        return np.linspace(start, stop, max(num, 1)) if num > 1 else np.array([start])


def config_from_dict(doc: dict, base_dir: Path | None = None) -> tuple[ExperimentConfig | None, list]:
    """Merge ``doc`` over the defaults and convert; returns ``(config, errors)``."""
    merged = _merge(DEFAULT_CONFIG, doc)
    col = _Collector(merged)
    sp = merged.get("species", {}).get("path", "")
    if sp:
        path = Path(sp)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
    else:
        path = default_species_path()
    if not path.is_file():
        col.errors.append(("species.path", f"file not found: {path}"))

    t = "beams.trap"
    trap_power = col.qty(f"{t}.power", "power", positive=True)
    trap_waist = col.qty(f"{t}.waist", "length", positive=True)
    trap_wl = col.qty(f"{t}.wavelength", "length", positive=True)
    theta = col.qty(f"{t}.incidence_angle", "angle", nonneg=True)
    if not math.isnan(theta) and not theta < math.pi / 2:
        col.errors.append((f"{t}.incidence_angle", "must be below 90 deg"))
    cpath = "beams.compensation"
    line_upper = col.node(f"{cpath}.line_upper")
    comp_det = col.qty(f"{cpath}.detuning", "angular_frequency")
    ratio = col.qty(f"{cpath}.waist_ratio", "dimensionless", positive=True)
    ell = col.node(f"{cpath}.elliptical_pol")
    ell_vec = (0j, 1 + 0j, 0j)
    try:
        ell_vec = tuple(complex(ell[a][0], ell[a][1]) for a in "xyz")
        if sum(abs(u) ** 2 for u in ell_vec) == 0:
            raise ValueError
    except (TypeError, KeyError, IndexError, ValueError):
        col.errors.append((f"{cpath}.elliptical_pol", "expected x, y, z = [re, im] with nonzero norm"))
    probe = col.qty("beams.probe.intensity_center", "dimensionless", nonneg=True)
    n_surf = col.qty("surface.refractive_index", "dimensionless")
    if not math.isnan(n_surf) and not n_surf > 1:
        col.errors.append(("surface.refractive_index", "must exceed 1"))
    cp = merged["surface"].get("casimir_polder", True)
    if not isinstance(cp, bool):
        col.errors.append(("surface.casimir_polder", "expected true or false"))
    r = "resonator"
    radius = col.qty(f"{r}.radius", "length", positive=True)
    curv = col.qty(f"{r}.axial_curvature", "inverse_length", nonneg=True)
    n_res = col.qty(f"{r}.refractive_index", "dimensionless")
    if not math.isnan(n_res) and not n_res > 1:
        col.errors.append((f"{r}.refractive_index", "must exceed 1"))
    g_max = col.qty(f"{r}.g_max", "angular_frequency", positive=True)
    extent = col.qty(f"{r}.axial_extent", "length", positive=True)
    decay = None
    if "decay_length" in merged[r]:
        decay = col.qty(f"{r}.decay_length", "length", positive=True)
    k0 = col.qty("cqed.kappa0", "angular_frequency", nonneg=True)
    ke = col.qty("cqed.kappa_ext", "angular_frequency", nonneg=True)
    drl = col.qty("cqed.fluorescence_resonator_detuning", "angular_frequency")
    g = "grids"
    grid_scan = col.grid(f"{g}.compensation_scan", "power")
    grid_fl = col.grid(f"{g}.fluorescence", "power")
    grid_tp = col.grid(f"{g}.transmission_power", "power")
    grid_det = col.grid(f"{g}.detuning", "angular_frequency")
    panels = {}
    for name in merged[g].get("transmission_panels", {}):
        panels[name] = col.qty(f"{g}.transmission_panels.{name}", "power", nonneg=True)
    m = "montecarlo"
    seed = col.integer(f"{m}.seed", minimum=0)
    n_per = col.integer(f"{m}.n_per_energy", minimum=1)
    duration = col.qty(f"{m}.duration", "time", positive=True)
    e_lo = col.qty(f"{m}.energy_min", "dimensionless")
    e_hi = col.qty(f"{m}.energy_max", "dimensionless")
    e_n = col.integer(f"{m}.energy_points", minimum=1)
    if not (0 < e_lo <= e_hi < 1):
        col.errors.append((f"{m}.energy_min", "energy grid must satisfy 0 < min <= max < 1 (fractions of U0)"))
    E0 = col.qty(f"{m}.E0", "dimensionless")
    sig = col.qty(f"{m}.sigma_E", "dimensionless", positive=True)
    if not 0 <= E0 <= 1:
        col.errors.append((f"{m}.E0", "must lie in [0, 1] (fraction of U0)"))
    out_dir = Path(str(merged.get("output", {}).get("dir", "wgmtrap-output")))
    if col.errors:
        return None, col.errors
    cfg = ExperimentConfig(
        raw=merged, species_path=path, trap_power=trap_power, trap_waist=trap_waist,
        trap_wavelength=trap_wl, incidence_angle=theta, comp_line_upper=str(line_upper),
        comp_detuning=comp_det, waist_ratio=ratio, elliptical_pol=ell_vec, probe_Isat=probe,
        surface_index=n_surf, casimir_polder=cp, res_radius=radius, res_curvature=curv,
        res_index=n_res, g_max=g_max, axial_extent=extent, decay_length=decay, kappa0=k0,
        kappa_ext=ke, fluor_Delta_rl=drl, grid_scan=grid_scan, grid_fluor=grid_fl,
        grid_trans_power=grid_tp, grid_detuning=grid_det, transmission_panels=panels,
        seed=seed, n_per_energy=n_per, duration=duration, energy_grid=(e_lo, e_hi, e_n),
        E0_fraction=E0, sigmaE_fraction=sig, output_dir=out_dir,
    )
    return cfg, []


def _read(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([("config", f"file not found: {path}")]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("config", f"parse error in {path}: {exc}")]) from None


def validate(path_or_doc=None) -> list[tuple[str, str]]:
    """All violated constraints as ``(field path, message)``; empty when valid."""
    if path_or_doc is None:
        doc, base = {}, None
    elif isinstance(path_or_doc, dict):
        doc, base = path_or_doc, None
    else:
        try:
            doc, base = _read(Path(path_or_doc)), Path(path_or_doc).parent
        except ConfigError as exc:
            return exc.errors
    _, errors = config_from_dict(doc, base)
    return errors


def load_config(path=None) -> ExperimentConfig:
    """Load and validate; ``None`` gives the built-in defaults."""
    doc, base = ({}, None) if path is None else (_read(Path(path)), Path(path).parent)
    cfg, errors = config_from_dict(doc, base)
    if errors:
        raise ConfigError(errors)
    return cfg
