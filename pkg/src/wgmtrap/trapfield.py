"""Trap-beam geometry, standing-wave dipole trap and WGM coupling profile.

Coordinates are resonator-centred: ``x`` is the outward distance from the
resonator surface, ``y`` the azimuthal (tangential) direction and ``z`` the
resonator axis. The trap beam hits the surface in the x-z plane at incidence
angle ``theta``; ``y`` polarization is s-polarized, ``z'`` (the in-plane
direction transverse to the beam) is p-polarized. The reflected beam forms a
partial standing wave along x whose first antinode is the trap centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .angular import PolVector
from .atomdata import SpeciesData
from .atomdata.constants import c, epsilon_0, h, hbar
from .stark import FieldSpec, ground_shift

__all__ = [
    "SILICA_SELLMEIER",
    "BeamGeometry",
    "ResonatorGeometry",
    "TrapPoint",
    "TrapPotential",
    "TwoColorSetup",
    "fresnel_reflection",
    "reflection_factor",
    "field_intensity",
    "trap_center_distance",
    "silica_permittivity_imag_axis",
    "casimir_polder_c3",
    "build_trap_potential",
    "trap_potential",
    "trap_frequencies",
    "wgm_effective_index",
    "coupling_strength",
    "SaddlePointError",
]

# Fused-silica Sellmeier coefficients (B_i, lambda_i in m)
SILICA_SELLMEIER = (
    (0.6961663, 0.0684043e-6),
    (0.4079426, 0.1162414e-6),
    (0.8974794, 9.896161e-6),
)


class SaddlePointError(ValueError):
    """The requested point is not a local minimum of the potential."""


@dataclass(frozen=True)
class BeamGeometry:
    """A focused Gaussian beam reflected off the resonator surface.

    ``waist`` is the 1/e^2 intensity radius at the surface. ``focus_offset``
    moves the focus along the beam axis; the radius at the surface then grows
    as for a Gaussian beam with waist ``waist``. ``pol_axis`` selects the
    Fresnel coefficient; ``stark_pol`` is the polarization vector used for
    the light shift, in a frame whose z axis is the nominal polarization
    direction.
    """

    power: float
    waist: float
    wavelength: float
    incidence_angle: float = math.radians(17.0)
    pol_axis: Union[str, PolVector] = "y"
    focus_offset: float = 0.0
    surface_index: float = 1.45
    stark_pol: PolVector = field(default_factory=lambda: PolVector.linear("z"))

    def __post_init__(self):
        if not self.waist > 0:
            raise ValueError("beam waist must be positive")
        if not 0 <= self.incidence_angle < math.pi / 2:
            raise ValueError("incidence angle must lie in [0, pi/2)")
        if not self.power >= 0:
            raise ValueError("beam power must be >= 0")
        if isinstance(self.pol_axis, str) and self.pol_axis not in ("y", "z'"):
            raise ValueError("pol_axis must be 'y', \"z'\" or a PolVector")

    @property
    def omega(self) -> float:
        return 2 * math.pi * c / self.wavelength

    @property
    def radius_at_surface(self) -> float:
        zR = math.pi * self.waist**2 / self.wavelength
        return self.waist * math.sqrt(1 + (self.focus_offset / zR) ** 2)

    @property
    def peak_intensity(self) -> float:
        """Single-pass peak intensity 2P / (pi w^2)."""
        w = self.radius_at_surface
        return 2 * self.power / (math.pi * w**2)

    def replace(self, **kw) -> "BeamGeometry":
        from dataclasses import replace
        return replace(self, **kw)


def fresnel_reflection(pol: str, theta: float, n: float) -> float:
    """Amplitude reflection coefficient from vacuum onto a medium of index n.

    Real for ``n >= 1`` below total internal reflection; the sign follows
    the usual convention in which both coefficients are negative at normal
    incidence.
    """
    ci = math.cos(theta)
    st = math.sin(theta) / n
    ct = math.sqrt(1 - st * st)
    if pol == "s":
        return (ci - n * ct) / (ci + n * ct)
    if pol == "p":
        return (ct - n * ci) / (ct + n * ci)
    raise ValueError("pol must be 's' or 'p'")


def _pol_weights(pol_axis) -> tuple[float, float]:
    if isinstance(pol_axis, PolVector):
        u = pol_axis.array
        ws = float(abs(u[1]) ** 2)
        return ws, 1.0 - ws
    return (1.0, 0.0) if pol_axis == "y" else (0.0, 1.0)


def reflection_factor(beam: BeamGeometry, x) -> np.ndarray:
    """Intensity enhancement ``f_refl(x)`` of the partial standing wave.

    ``f = 1 + r^2 + 2 r c cos(2 k x cos(theta) + pi)`` with ``c = 1`` for s
    and ``c = cos(2 theta)`` for p polarization (the incident and reflected
    p fields are not parallel). A general polarization mixes the two
    incoherently by its s and p weights.
    """
    x = np.asarray(x, dtype=float)
    th, n = beam.incidence_angle, beam.surface_index
    phase = 2 * (2 * math.pi / beam.wavelength) * x * math.cos(th) + math.pi
    ws, wp = _pol_weights(beam.pol_axis)
    out = np.zeros_like(x)
    if ws:
        r = abs(fresnel_reflection("s", th, n))
        out = out + ws * (1 + r * r + 2 * r * np.cos(phase))
    if wp:
        r = abs(fresnel_reflection("p", th, n))
        out = out + wp * (1 + r * r + 2 * r * math.cos(2 * th) * np.cos(phase))
    return out


def trap_center_distance(beam: BeamGeometry) -> float:
    """First standing-wave antinode, ``lambda / (4 cos theta)``."""
    return beam.wavelength / (4 * math.cos(beam.incidence_angle))


def _transverse(beam: BeamGeometry, y, z):
    w = beam.radius_at_surface
    ct = math.cos(beam.incidence_angle)
    return np.exp(-2 * (np.asarray(y) ** 2 + (np.asarray(z) * ct) ** 2) / w**2)


def field_intensity(beam: BeamGeometry, r) -> np.ndarray:
    """Intensity (W/m^2) at ``r = (..., 3)``: Gaussian envelope times ``f_refl(x)``."""
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    return beam.peak_intensity * _transverse(beam, y, z) * reflection_factor(beam, x)


# ---------------------------------------------------------------- surface

def silica_permittivity_imag_axis(xi) -> np.ndarray:
    """Permittivity of fused silica at imaginary frequency ``i xi`` (Sellmeier)."""
    xi = np.asarray(xi, dtype=float)
    eps = np.ones_like(xi)
    for B, lam in SILICA_SELLMEIER:
        wi = 2 * math.pi * c / lam
        eps = eps + B * wi**2 / (wi**2 + xi**2)
    return eps


def casimir_polder_c3(species: SpeciesData, level: str | None = None, perfect_conductor: bool = False) -> float:
    """Non-retarded atom-surface coefficient C3 (J m^3) for a silica surface.

    ``C3 = hbar / (16 pi^2 eps0) int_0^inf alpha(i xi) (eps - 1)/(eps + 1) d xi``
    with the valence polarizability built from the species line list.
    """
    level = level or species.ground.key
    lvl = species.level(level)
    terms = []
    for ln in species.lines:
        if level in (ln.lower, ln.upper):
            sign = 1.0 if ln.lower == level else -1.0
            terms.append((sign * ln.omega, ln.reduced_dipole**2))

    def alpha(xi):
        return sum(2 * w * d2 / (3 * (lvl.twoJ + 1) * hbar * (w * w + xi * xi)) for w, d2 in terms)

    if perfect_conductor:
        return sum(d2 * (1.0 if w > 0 else -1.0) for w, d2 in terms) / (48 * math.pi * epsilon_0 * (lvl.twoJ + 1))

    def integrand(t):
        # xi = w0 tan(t) maps [0, inf) onto [0, pi/2)
        xi = w0 * math.tan(t)
        eps = float(silica_permittivity_imag_axis(xi))
        return alpha(xi) * (eps - 1) / (eps + 1) * w0 / math.cos(t) ** 2

    w0 = max(abs(w) for w, _ in terms) if terms else 1.0
    val, _ = integrate.quad(integrand, 0, math.pi / 2, limit=200, epsabs=0, epsrel=1e-10)
    return hbar / (16 * math.pi**2 * epsilon_0) * val


# ---------------------------------------------------------------- potential

@dataclass
class TrapPotential:
    """Ground-state optical potential plus optional ``-C3/x^3`` surface term.

    The optical part is ``U = sum_beams s_b I_b(r)`` with ``s_b`` the
    ground-state light shift per unit intensity (J per W/m^2), exact for
    linear polarization where the ground shift is scalar. Evaluation is
    vectorized over leading axes of ``r``.
    """

    beams: Sequence[BeamGeometry]
    shift_per_intensity: Sequence[float]
    mass: float
    c3: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        U = np.zeros(r.shape[:-1])
        for beam, s in zip(self.beams, self.shift_per_intensity):
            U = U + s * field_intensity(beam, r)
        if self.c3:
            U = U - self.c3 / r[..., 0] ** 3
        return U

    def gradient(self, r) -> np.ndarray:
        """Analytic gradient dU/dr (N), same leading shape as ``r``."""
        r = np.asarray(r, dtype=float)
        x, y, z = r[..., 0], r[..., 1], r[..., 2]
        g = np.zeros_like(r)
        for beam, s in zip(self.beams, self.shift_per_intensity):
            th, n = beam.incidence_angle, beam.surface_index
            ct = math.cos(th)
            w = beam.radius_at_surface
            k2 = 2 * (2 * math.pi / beam.wavelength) * ct
            phase = k2 * x + math.pi
            ws, wp = _pol_weights(beam.pol_axis)
            f = np.zeros_like(x)
            df = np.zeros_like(x)
            if ws:
                rs = abs(fresnel_reflection("s", th, n))
                f = f + ws * (1 + rs * rs + 2 * rs * np.cos(phase))
                df = df - ws * 2 * rs * k2 * np.sin(phase)
            if wp:
                rp = abs(fresnel_reflection("p", th, n))
                cc = math.cos(2 * th)
                f = f + wp * (1 + rp * rp + 2 * rp * cc * np.cos(phase))
                df = df - wp * 2 * rp * cc * k2 * np.sin(phase)
            T = np.exp(-2 * (y * y + (z * ct) ** 2) / w**2)
            A = s * beam.peak_intensity
            g[..., 0] += A * T * df
            g[..., 1] += A * f * T * (-4 * y / w**2)
            g[..., 2] += A * f * T * (-4 * z * ct * ct / w**2)
        if self.c3:
            g[..., 0] += 3 * self.c3 / x**4
        return g

    def force(self, r) -> np.ndarray:
        return -self.gradient(r)

    @property
    def primary(self) -> BeamGeometry:
        return self.beams[0]

    def minimum(self, x_guess: float | None = None) -> np.ndarray:
        """Local minimum on the beam axis nearest ``x_guess`` (default: first antinode)."""
        key = ("min", x_guess)
        if key not in self._cache:
            x0 = trap_center_distance(self.primary) if x_guess is None else x_guess
            half = self.primary.wavelength / (8 * math.cos(self.primary.incidence_angle))
            res = optimize.minimize_scalar(lambda x: float(self(np.array([x, 0.0, 0.0]))),
                                           bounds=(x0 - half, x0 + half), method="bounded",
                                           options={"xatol": 1e-14})
            self._cache[key] = np.array([res.x, 0.0, 0.0])
        return self._cache[key].copy()

    def barrier_positions(self) -> tuple[float, float]:
        """Axial positions of the potential maxima on either side of the minimum."""
        if "barrier_x" not in self._cache:
            r0 = self.minimum()
            period = self.primary.wavelength / (2 * math.cos(self.primary.incidence_angle))

            def neg(x):
                return -float(self(np.array([x, 0.0, 0.0])))

            inner = optimize.minimize_scalar(neg, bounds=(max(r0[0] - period, 1e-9), r0[0]),
                                             method="bounded", options={"xatol": 1e-13})
            outer = optimize.minimize_scalar(neg, bounds=(r0[0], r0[0] + period),
                                             method="bounded", options={"xatol": 1e-13})
            self._cache["barrier_x"] = (float(inner.x), float(outer.x))
        return self._cache["barrier_x"]

    def barriers(self) -> tuple[float, float]:
        """Potential barriers (J) from the minimum toward and away from the surface."""
        U0 = float(self(self.minimum()))
        xi, xo = self.barrier_positions()
        return (float(self(np.array([xi, 0.0, 0.0]))) - U0,
                float(self(np.array([xo, 0.0, 0.0]))) - U0)

    def depth(self) -> float:
        """Trap depth (J): the lower of the two axial barriers or the
        transverse escape energy to zero potential."""
        r0 = self.minimum()
        return min(*self.barriers(), -float(self(r0)))


def build_trap_potential(species: SpeciesData, beams: Sequence[BeamGeometry],
                         surface: bool = True, c3: float | None = None) -> TrapPotential:
    """Trap potential for the species ground level in the given beams.

    Each beam's ground-state shift per unit intensity comes from the full
    Stark diagonalization (scalar for linear polarization). ``surface``
    adds the silica Casimir-Polder term unless ``c3`` is given explicitly.
    """
    shifts = []
    for beam in beams:
        fld = FieldSpec(beam.omega, 1.0, beam.stark_pol)
        gs = ground_shift(species, [fld])
        if isinstance(gs, dict):
            raise ValueError("trap potential needs a scalar ground shift (linear polarization)")
        # ground_shift is linear in intensity; evaluate at 1 W/m^2 then scale
        shifts.append(h * gs)
    if c3 is None:
        c3 = casimir_polder_c3(species) if surface else 0.0
    return TrapPotential(list(beams), shifts, species.mass, c3)


def trap_potential(species: SpeciesData, geometry: Sequence[BeamGeometry] | TrapPotential, r,
                   surface: bool = True) -> np.ndarray:
    """Potential energy (J) of a ground-state atom at ``r``."""
    pot = geometry if isinstance(geometry, TrapPotential) else build_trap_potential(
        species, list(geometry) if not isinstance(geometry, BeamGeometry) else [geometry], surface)
    return pot(r)


def trap_frequencies(potential, r0, mass: float | None = None, step: float | Sequence[float] = (2e-9, 20e-9, 20e-9),
                     grad_tol: float = 1e-3) -> np.ndarray:
    """Angular trap frequencies ``(w_x, w_y, w_z)`` from numerical curvatures at ``r0``.

    Raises
    ------
    SaddlePointError
        If any principal curvature is non-positive, or the gradient at
        ``r0`` is not small compared with curvature x step.
    """
    mass = mass if mass is not None else potential.mass
    r0 = np.asarray(r0, dtype=float)
    steps = np.broadcast_to(np.asarray(step, dtype=float), (3,))
    U0 = float(potential(r0))
    curv = np.empty(3)
    grad = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = steps[i]
        Up, Um = float(potential(r0 + e)), float(potential(r0 - e))
        curv[i] = (Up - 2 * U0 + Um) / steps[i] ** 2
        grad[i] = (Up - Um) / (2 * steps[i])
    if np.any(curv <= 0):
        raise SaddlePointError(f"non-positive curvature {curv} at {r0}")
    if np.any(np.abs(grad) > grad_tol * curv * steps):
        raise SaddlePointError(f"gradient {grad} too large at {r0}: not a minimum")
    return np.sqrt(curv / mass)


@dataclass(frozen=True)
class TrapPoint:
    r: np.ndarray
    U: float
    gradient: np.ndarray
    g_coupling: float


# ---------------------------------------------------------------- WGM

_AIRY_ZERO_1 = 2.338107410459767  # first zero of Ai(-x)


def wgm_effective_index(radius: float, n: float, wavelength: float, pol: str = "TM", radial_order: int = 1) -> float:
    """Effective surface index ``m / (k0 R)`` of a whispering-gallery mode.

    Solves the asymptotic resonance condition
    ``n k0 R = nu + a_q (nu/2)^(1/3) - P/sqrt(n^2-1) + ...`` for the
    azimuthal order, with ``P = n`` (TE) or ``1/n`` (TM).
    """
    from scipy.special import ai_zeros
    k0R = 2 * math.pi * radius / wavelength
    aq = -ai_zeros(radial_order)[0][-1] if radial_order > 1 else _AIRY_ZERO_1
    P = n if pol == "TE" else 1 / n
    root = math.sqrt(n * n - 1)

    def resid(nu):
        return (nu + aq * (nu / 2) ** (1 / 3) - P / root
                + 3 * aq**2 / 20 * (nu / 2) ** (-1 / 3)
                - P * (n * n - 2 * P * P / 3) / root**3 * aq * (nu / 2) ** (-2 / 3)) - n * k0R

    nu = optimize.brentq(resid, 1.0, n * k0R + 10)
    return (nu - 0.5) / k0R


@dataclass(frozen=True)
class ResonatorGeometry:
    """Parametric WGM coupling profile.

    ``g(r) = g_max exp(-x / decay_length) exp(-z^2 / (2 sigma_z^2))``, unity
    along y over the trap width. ``sigma_z`` puts the axial edges
    (``z = +-axial_extent/2``) at ``edge_fraction`` of ``g_max``. When
    ``decay_length`` is None it follows from the evanescent decay of a
    fundamental TM mode of the given radius and index at ``wavelength``.
    """

    radius: float = 18.0e-6
    axial_curvature: float = 0.014e6
    refractive_index: float = 1.4537
    g_max: float = 2 * math.pi * 43.7e6
    axial_extent: float = 15e-6
    wavelength: float = 780.241e-9
    decay_length: float | None = None
    edge_fraction: float = 0.05

    def __post_init__(self):
        if not self.g_max > 0:
            raise ValueError("g_max must be positive")
        if self.decay_length is not None and not self.decay_length > 0:
            raise ValueError("decay length must be positive")

    @property
    def effective_index(self) -> float:
        return wgm_effective_index(self.radius, self.refractive_index, self.wavelength)

    @property
    def radial_decay_length(self) -> float:
        if self.decay_length is not None:
            return self.decay_length
        neff = self.effective_index
        return self.wavelength / (2 * math.pi * math.sqrt(neff * neff - 1))

    @property
    def axial_sigma(self) -> float:
        return (self.axial_extent / 2) / math.sqrt(2 * math.log(1 / self.edge_fraction))


def coupling_strength(resonator: ResonatorGeometry, r) -> np.ndarray:
    """Atom-mode coupling g (rad/s) at ``r = (..., 3)`` with ``x >= 0``."""
    r = np.asarray(r, dtype=float)
    x, z = r[..., 0], r[..., 2]
    if np.any(x < 0):
        raise ValueError("coupling profile is defined outside the dielectric only (x >= 0)")
    Lam = resonator.radial_decay_length
    sig = resonator.axial_sigma
    return resonator.g_max * np.exp(-x / Lam) * np.exp(-z * z / (2 * sig * sig))


# ---------------------------------------------------------------- two-color setup

@dataclass
class TwoColorSetup:
    """Trap and compensation beams sharing one polarization axis.

    ``compensation`` power is a placeholder; :meth:`fields_at` overrides it.
    """

    trap: BeamGeometry
    compensation: BeamGeometry
    near_resonant: frozenset = frozenset({"5D5/2"})

    def intensities(self, P_c: float, r) -> tuple[np.ndarray, np.ndarray]:
        comp = self.compensation.replace(power=P_c)
        return field_intensity(self.trap, r), field_intensity(comp, r)

    def fields_at(self, P_c: float, r=None) -> list[FieldSpec]:
        """Fields at ``r`` (default: the trap centre) for compensation power ``P_c``."""
        if r is None:
            r = np.array([trap_center_distance(self.trap), 0.0, 0.0])
        It, Ic = self.intensities(P_c, r)
        return [
            FieldSpec(self.trap.omega, float(It), self.trap.stark_pol, "trap"),
            FieldSpec(self.compensation.omega, float(Ic), self.compensation.stark_pol, "compensation",
                      near_resonant=self.near_resonant),
        ]
