"""End-to-end model pipelines: geometry set-up, Monte Carlo histograms and
averaged spectra, assembled from an :class:`ExperimentConfig`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .angular import PolVector
from .atomdata import SpeciesData, load_species
from .atomdata.constants import c, k_B
from .cqed import (
    BinSample,
    CqedParams,
    averaged_fluorescence_spectrum,
    averaged_transmission_spectrum,
    peak_and_fwhm,
    rabi_frequency,
    spectrum_minima,
    symmetry_metric,
    zeeman_line_strengths,
)
from .dynamics import EnergyDistribution, PositionHistogram, adiabatic_survival, position_distribution
from .stark import (
    FieldSpec,
    compensation_scan,
    diagonalize_interaction,
    hfs_basis,
    hfs_matrix,
    hfs_shift,
    stark_matrix_unit,
)
from .trapfield import (
    BeamGeometry,
    ResonatorGeometry,
    TwoColorSetup,
    build_trap_potential,
    coupling_strength,
    field_intensity,
    trap_center_distance,
    trap_frequencies,
)

__all__ = ["Model", "HistogramCache"]

GROUND, EXCITED = "5S1/2", "5P3/2"


@dataclass
class HistogramCache:
    """In-memory store so figure panels sharing a trap reuse one Monte Carlo run."""

    store: dict

    def get(self, key):
        return self.store.get(key)

    def put(self, key, value):
        self.store[key] = value


class Model:
    """Physical model built from a validated configuration.

    ``pol`` selects the trap polarization geometry (``"y"`` or ``"z'"``);
    ``elliptical`` switches the Stark polarization vector to the configured
    imperfect one.
    """

    def __init__(self, cfg, species: SpeciesData | None = None, jobs: int = 1):
        self.cfg = cfg
        self.species = species or load_species(cfg.species_path)
        self.jobs = jobs
        self._hist = HistogramCache({})

    # ------------------------------------------------------------ geometry

    @property
    def omega_c(self) -> float:
        sp = self.species
        line = sp.level(self.cfg.comp_line_upper).energy - sp.level(EXCITED).energy
        return line - self.cfg.comp_detuning

    def trap_beam(self, pol: str = "y", elliptical: bool = False, power: float | None = None) -> BeamGeometry:
        cfg = self.cfg
        stark_pol = PolVector(cfg.elliptical_pol, normalize=True) if elliptical else PolVector.linear("z")
        return BeamGeometry(
            power=cfg.trap_power if power is None else power,
            waist=cfg.trap_waist,
            wavelength=cfg.trap_wavelength,
            incidence_angle=cfg.incidence_angle,
            pol_axis=pol,
            surface_index=cfg.surface_index,
            stark_pol=stark_pol,
        )

    def comp_beam(self, pol: str = "y", elliptical: bool = False, waist_ratio: float | None = None) -> BeamGeometry:
        ratio = self.cfg.waist_ratio if waist_ratio is None else waist_ratio
        return self.trap_beam(pol, elliptical).replace(
            power=0.0, waist=self.cfg.trap_waist * ratio, wavelength=2 * math.pi * c / self.omega_c)

    def probe_beam(self, pol: str = "y") -> BeamGeometry:
        lam0 = 2 * math.pi * c / self.species.level(EXCITED).energy
        return self.trap_beam(pol).replace(power=1.0, wavelength=lam0)

    def setup(self, pol="y", elliptical=False, waist_ratio=None) -> TwoColorSetup:
        return TwoColorSetup(self.trap_beam(pol, elliptical), self.comp_beam(pol, elliptical, waist_ratio),
                             frozenset({self.cfg.comp_line_upper}))

    @cached_property
    def resonator(self) -> ResonatorGeometry:
        cfg = self.cfg
        return ResonatorGeometry(
            radius=cfg.res_radius, axial_curvature=cfg.res_curvature,
            refractive_index=cfg.res_index, g_max=cfg.g_max, axial_extent=cfg.axial_extent,
            wavelength=2 * math.pi * c / self.species.level(EXCITED).energy,
            decay_length=cfg.decay_length,
        )

    def potential(self, pol: str = "y", power: float | None = None):
        key = ("pot", pol, power)
        pot = self._hist.get(key)
        if pot is None:
            pot = build_trap_potential(self.species, [self.trap_beam(pol, power=power)],
                                       surface=self.cfg.casimir_polder)
            self._hist.put(key, pot)
        return pot

    # ------------------------------------------------------------ trap summary

    def trap_summary(self, pol: str = "y", power: float | None = None) -> dict:
        pot = self.potential(pol, power)
        r0 = pot.minimum()
        om = trap_frequencies(pot, r0)
        return {
            "x0_analytic": trap_center_distance(pot.primary),
            "x0_numeric": float(r0[0]),
            "depth_J": pot.depth(),
            "depth_mK": pot.depth() / k_B * 1e3,
            "omega": om,
            "c3": pot.c3,
        }

    # ------------------------------------------------------------ stark

    def compensation_scan(self, P_c, pol="y", elliptical=False, waist_ratio=None, r=None):
        st = self.setup(pol, elliptical, waist_ratio)
        return compensation_scan(self.species, lambda P: st.fields_at(P, r), P_c, GROUND, EXCITED)

    def tables_at(self, P_c: float, pol="y", elliptical=False, waist_ratio=None, r=None):
        st = self.setup(pol, elliptical, waist_ratio)
        flds = st.fields_at(P_c, r)
        return (diagonalize_interaction(self.species, GROUND, flds),
                diagonalize_interaction(self.species, EXCITED, flds))

    def stark_ops(self, elliptical: bool) -> dict:
        sp = self.species
        pol = PolVector(self.cfg.elliptical_pol, normalize=True) if elliptical else PolVector.linear("z")
        wt = self.trap_beam().omega
        wc = self.omega_c
        near = frozenset({self.cfg.comp_line_upper})
        out = {}
        for tag, lvl, Fref in (("g", GROUND, 3), ("e", EXCITED, 4)):
            L = sp.level(lvl)
            out[tag] = {
                "H": hfs_matrix(sp, lvl),
                "S_trap": stark_matrix_unit(sp, lvl, wt, pol),
                "S_comp": stark_matrix_unit(sp, lvl, wc, pol, near),
                "basis": hfs_basis(L.twoJ, sp.twoI),
                f"ref_{tag}": 2 * math.pi * hfs_shift(sp, lvl, Fref),
            }
        return out

    # ------------------------------------------------------------ monte carlo

    def energy_distribution(self, pot) -> EnergyDistribution:
        U0 = pot.depth()
        return EnergyDistribution.gaussian(self.cfg.E0_fraction * U0, self.cfg.sigmaE_fraction * U0, U0)

    def histogram(self, pol: str = "y", n_per_energy=None, duration=None, seed=None) -> PositionHistogram:
        cfg = self.cfg
        n = cfg.n_per_energy if n_per_energy is None else n_per_energy
        T = cfg.duration if duration is None else duration
        s = cfg.seed if seed is None else seed
        key = ("hist", pol, n, T, s)
        h = self._hist.get(key)
        if h is None:
            pot = self.potential(pol)
            U0 = pot.depth()
            energies = np.linspace(cfg.energy_grid[0], cfg.energy_grid[1], cfg.energy_grid[2]) * U0
            h = position_distribution(pot, self.energy_distribution(pot), n, s, energies=energies,
                                      duration=T, jobs=self.jobs)
            self._hist.put(key, h)
        return h

    def bins(self, hist: PositionHistogram, pol: str, waist_ratio=None) -> BinSample:
        centers, w = hist.nonzero()
        trap = self.trap_beam(pol)
        comp = self.comp_beam(pol, waist_ratio=waist_ratio).replace(power=1.0)
        probe = self.probe_beam(pol)
        Ip = field_intensity(probe, centers)
        x0 = np.array([trap_center_distance(probe), 0.0, 0.0])
        Ip_rel = Ip / float(field_intensity(probe, x0))
        Omega = rabi_frequency(self.cfg.probe_Isat * Ip_rel * self.species.I_sat, self.species.I_sat,
                               self.species.gamma)
        return BinSample(
            weights=w / w.sum(),
            g=coupling_strength(self.resonator, centers),
            Omega=Omega,
            I_trap=field_intensity(trap, centers),
            I_comp_per_W=field_intensity(comp, centers),
        )

    def coupling_stats(self, hist: PositionHistogram) -> tuple[float, float]:
        centers, w = hist.nonzero()
        g = coupling_strength(self.resonator, centers)
        w = w / w.sum()
        mean = float(np.dot(w, g))
        return mean, float(math.sqrt(np.dot(w, (g - mean) ** 2)))

    # ------------------------------------------------------------ spectra

    def base_params(self, Delta_rl: float = 0.0) -> CqedParams:
        cfg = self.cfg
        return CqedParams(0.0, cfg.kappa0, cfg.kappa_ext, self.species.gamma, Delta_rl=Delta_rl)

    def fluorescence(self, P_c, hist: PositionHistogram | None = None, elliptical=True,
                     waist_ratio=None, breakdown=False):
        pol = "y"
        hist = hist if hist is not None else self.histogram(pol)
        b = self.bins(hist, pol, waist_ratio)
        ops = self.stark_ops(elliptical)
        L = self.species.level
        S = zeeman_line_strengths(L(GROUND).twoJ, L(EXCITED).twoJ, self.species.twoI, 6, 8)
        spec = averaged_fluorescence_spectrum(ops, b, P_c, self.base_params(self.cfg.fluor_Delta_rl), S,
                                              breakdown=breakdown)
        peak, fwhm = peak_and_fwhm(spec.abscissa, spec.values)
        spec.metadata.update(peak_W=peak, fwhm_W=fwhm, elliptical=elliptical)
        return spec

    def cycling_shift_fn(self, elliptical=False):
        """Light shift (rad/s) of the |3,3> -> |4,4> line as a function of the
        local trap and compensation intensities."""
        ops = self.stark_ops(elliptical)
        gb, eb = ops["g"]["basis"], ops["e"]["basis"]
        ig = next(i for i, s in enumerate(gb) if (s.twoF, s.twoM) == (6, 6))
        je = next(j for j, s in enumerate(eb) if (s.twoF, s.twoM) == (8, 8))
        g, e = ops["g"], ops["e"]
        if not elliptical:
            # |3,3> and |4,4> are not mixed by z-linear fields (M conserved,
            # no other F' = 4 partner at M' = 4; F = 2 has no M = 3)
            sg_t, sg_c = g["S_trap"][ig, ig].real, g["S_comp"][ig, ig].real
            se_t, se_c = e["S_trap"][je, je].real, e["S_comp"][je, je].real

            def fn(I_t, I_c):
                return (se_t * I_t + se_c * I_c) - (sg_t * I_t + sg_c * I_c)
            return fn
        raise NotImplementedError("cycling-only transmission assumes linear polarization")

    def transmission(self, P_c: float, detunings, hist: PositionHistogram | None = None, waist_ratio=None):
        pol = "z'"
        hist = hist if hist is not None else self.histogram(pol)
        b = self.bins(hist, pol, waist_ratio)
        spec = averaged_transmission_spectrum(b, self.cycling_shift_fn(False), P_c, detunings, self.base_params())
        spec.metadata.update(symmetry=symmetry_metric(spec.abscissa, spec.values),
                             minima=spectrum_minima(spec.abscissa, spec.values))
        return spec

    def most_symmetric_power(self, P_grid, detunings, hist=None, waist_ratio=None):
        hist = hist if hist is not None else self.histogram("z'")
        metrics = np.array([self.transmission(P, detunings, hist, waist_ratio).metadata["symmetry"]
                            for P in P_grid])
        k = int(np.argmin(metrics))
        best = float(P_grid[k])
        if 0 < k < len(P_grid) - 1:
            y0, y1, y2 = metrics[k - 1:k + 2]
            den = y0 - 2 * y1 + y2
            if den > 0:
                best = float(P_grid[k] + 0.5 * (y0 - y2) / den * (P_grid[k + 1] - P_grid[k]))
        return best, metrics

    # ------------------------------------------------------------ adiabatic lowering

    def survival_curve(self, U_low_fraction, pol="y"):
        pot = self.potential(pol)
        dist = self.energy_distribution(pot)
        return adiabatic_survival(dist, np.asarray(U_low_fraction) * dist.U0)
