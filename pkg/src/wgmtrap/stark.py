"""AC Stark shifts of hyperfine manifolds in one or more far-detuned fields.

All Hamiltonians here are in angular-frequency units (H / hbar, rad/s).
Shifts reported to users are in Hz (cycles per second).

The Stark operator is assembled from the reduced scalar, vector and tensor
polarizabilities of a fine-structure level and the compound polarization
tensor of the field, then added to the diagonal hfs Hamiltonian and
diagonalized. Eigenstates are labelled by the zero-field ``(F, M)`` state
they connect to adiabatically.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .angular import PolVector, compound_tensor, wigner3j, wigner6j
from .atomdata import SpeciesData, lines_coupling_to
from .atomdata.constants import c, epsilon_0, hbar

__all__ = [
    "ResonanceError",
    "FieldSpec",
    "HfsState",
    "ShiftTable",
    "CompensationScan",
    "DEFAULT_POLE_GUARD",
    "hfs_basis",
    "reduced_polarizability",
    "polarizabilities",
    "scalar_polarizability",
    "stark_matrix",
    "stark_matrix_unit",
    "hfs_shift",
    "hfs_matrix",
    "diagonalize_interaction",
    "ground_shift",
    "transition_detunings",
    "compensation_scan",
    "allowed_transitions",
]

DEFAULT_POLE_GUARD = 2 * math.pi * 10e9
"""Minimum distance (rad/s) between a field and any non-whitelisted line."""


class ResonanceError(ArithmeticError):
    """A field frequency sits too close to an atomic resonance."""


@dataclass(frozen=True)
class FieldSpec:
    """One monochromatic field at the atom.

    ``near_resonant`` lists level keys whose lines may lie closer than the
    pole guard (the compensation field is meant to sit near 5P3/2-5D5/2).
    """

    omega: float
    intensity: float
    pol: PolVector
    label: str = "trap"
    near_resonant: frozenset = frozenset()
    pole_guard: float = DEFAULT_POLE_GUARD

    def __post_init__(self):
        if not self.intensity >= 0:
            raise ValueError(f"field intensity must be >= 0, got {self.intensity!r}")
        if not isinstance(self.pol, PolVector):
            object.__setattr__(self, "pol", PolVector(self.pol))
        object.__setattr__(self, "near_resonant", frozenset(self.near_resonant))

    @property
    def amplitude_sq(self) -> float:
        """Squared field amplitude, ``E^2 = 2 I / (eps0 c)`` (V^2/m^2)."""
        return 2.0 * self.intensity / (epsilon_0 * c)

    @classmethod
    def from_amplitude(cls, omega: float, amplitude: float, pol, **kw) -> "FieldSpec":
        return cls(omega, 0.5 * epsilon_0 * c * amplitude**2, pol, **kw)

    def with_intensity(self, intensity: float) -> "FieldSpec":
        return FieldSpec(self.omega, intensity, self.pol, self.label,
                         self.near_resonant, self.pole_guard)


@dataclass(frozen=True, order=True)
class HfsState:
    """Zero-field hfs state ``|F, M>`` with doubled quantum numbers."""

    twoF: int
    twoM: int

    @property
    def F(self) -> float:
        return self.twoF / 2

    @property
    def M(self) -> float:
        return self.twoM / 2

    def __str__(self) -> str:
        def h(t):
            return str(t // 2) if t % 2 == 0 else f"{t}/2"
        return f"|F={h(self.twoF)}, M={h(self.twoM)}>"


def _sign(doubled_exponent: int) -> float:
    """(-1)**(doubled_exponent / 2); the exponent must be an integer."""
    if doubled_exponent % 2:
        raise ValueError("phase exponent is not an integer")
    return -1.0 if (doubled_exponent // 2) % 2 else 1.0


def hfs_basis(twoJ: int, twoI: int) -> list[HfsState]:
    """States ordered by F, then M, both ascending."""
    return [
        HfsState(twoF, twoM)
        for twoF in range(abs(twoJ - twoI), twoJ + twoI + 1, 2)
        for twoM in range(-twoF, twoF + 1, 2)
    ]


def reduced_polarizability(
    species: SpeciesData,
    level: str,
    K: int,
    omega: float,
    near_resonant: Iterable[str] = (),
    pole_guard: float = DEFAULT_POLE_GUARD,
) -> float:
    """Reduced dynamic polarizability ``alpha^(K)`` of a fine level (SI, C m^2/V).

    Sums over every line touching ``level``, with both the resonant and the
    counter-rotating denominators. Lines to levels listed in
    ``near_resonant`` are exempt from the pole guard.

    Raises
    ------
    ResonanceError
        If ``|omega - |omega_line||`` falls below ``pole_guard`` for a line
        not whitelisted, or is exactly zero for any line.
    """
    if K not in (0, 1, 2):
        raise ValueError("K must be 0, 1 or 2")
    allow = set(near_resonant)
    lvl = species.level(level)
    twoJ = lvl.twoJ
    total = 0.0
    for lc in lines_coupling_to(species, level):
        detuning = abs(omega - abs(lc.omega))
        if detuning == 0.0 or (detuning < pole_guard and lc.other.key not in allow):
            raise ResonanceError(
                f"field at {omega / (2 * math.pi) * 1e-12:.6f} THz is "
                f"{detuning / (2 * math.pi) * 1e-9:.3f} GHz from the "
                f"{lc.line.lower}-{lc.line.upper} line"
            )
        twoJp = lc.other.twoJ
        six = wigner6j(1, K, 1, twoJ / 2, twoJp / 2, twoJ / 2)
        if six == 0.0:
            continue
        denom = 1.0 / (lc.omega - omega) + (-1) ** K / (lc.omega + omega)
        # (-1)^(K + J + 1 + J') is an integer power even though J, J' may not be
        total += _sign(2 * K + twoJ + 2 + twoJp) * six * lc.reduced_dipole**2 * denom / hbar
    return math.sqrt(2 * K + 1) * total


def polarizabilities(species, level, omega, near_resonant=(), pole_guard=DEFAULT_POLE_GUARD):
    """``{K: alpha^(K)}`` for K = 0, 1, 2."""
    return {K: reduced_polarizability(species, level, K, omega, near_resonant, pole_guard)
            for K in (0, 1, 2)}


def scalar_polarizability(species, level, omega, **kw) -> float:
    """Conventional scalar polarizability ``alpha_s = alpha^(0) / sqrt(3 (2J+1))``."""
    twoJ = species.level(level).twoJ
    return reduced_polarizability(species, level, 0, omega, **kw) / math.sqrt(3 * (twoJ + 1))


@lru_cache(maxsize=256)
def _stark_unit_cached(species: SpeciesData, level: str, omega: float,
                       pol: PolVector, near_resonant: frozenset, pole_guard: float) -> np.ndarray:
    lvl = species.level(level)
    twoJ, twoI = lvl.twoJ, species.twoI
    basis = hfs_basis(twoJ, twoI)
    alpha = polarizabilities(species, level, omega, near_resonant, pole_guard)
    # per unit intensity: E^2 / 4 = I / (2 eps0 c)
    pref = 1.0 / (2.0 * epsilon_0 * c * hbar)
    tensors = {(K, q): compound_tensor(pol, K, q) for K in (0, 1, 2) for q in range(-K, K + 1)}
    n = len(basis)
    mat = np.zeros((n, n), dtype=complex)
    J, I = twoJ / 2, twoI / 2
    for a, sa in enumerate(basis):
        for b, sb in enumerate(basis):
            elem = 0j
            for K in (0, 1, 2):
                if alpha[K] == 0.0:
                    continue
                six = wigner6j(sa.F, K, sb.F, J, I, J)
                if six == 0.0:
                    continue
                for q in range(-K, K + 1):
                    three = wigner3j(sa.F, K, sb.F, sa.M, q, -sb.M)
                    if three == 0.0 or tensors[(K, q)] == 0:
                        continue
                    phase = _sign(twoJ + twoI + 2 * K + 2 * q - sa.twoM)
                    elem += alpha[K] * tensors[(K, q)] * phase * three * six
            mat[a, b] = pref * math.sqrt((sa.twoF + 1) * (sb.twoF + 1)) * elem
    mat.setflags(write=False)
    return mat


def stark_matrix_unit(species: SpeciesData, level: str, omega: float, pol: PolVector,
                      near_resonant=frozenset(), pole_guard: float = DEFAULT_POLE_GUARD) -> np.ndarray:
    """Stark operator per unit intensity (rad/s per W/m^2) in the hfs basis.

    The result is cached and read-only; multiply by the intensity to get
    :func:`stark_matrix`.
    """
    if not isinstance(pol, PolVector):
        pol = PolVector(pol)
    return _stark_unit_cached(species, level, float(omega), pol,
                              frozenset(near_resonant), float(pole_guard))


def stark_matrix(species: SpeciesData, level: str, fld: FieldSpec) -> np.ndarray:
    """Stark operator ``V / hbar`` of one field over :func:`hfs_basis` (rad/s)."""
    unit = stark_matrix_unit(species, level, fld.omega, fld.pol, fld.near_resonant, fld.pole_guard)
    return fld.intensity * unit


def hfs_shift(species: SpeciesData, level: str, F) -> float:
    """hfs energy of manifold F relative to the fine-structure centroid (Hz)."""
    from .angular import twice
    twoF = twice(F)
    lvl = species.level(level)
    if level not in species.hfs:
        raise KeyError(f"no hfs constants for level {level!r}")
    hc = species.hfs[level]
    J, I, Fv = lvl.twoJ / 2, species.twoI / 2, twoF / 2
    G = Fv * (Fv + 1) - I * (I + 1) - J * (J + 1)
    shift = hc.A_hfs * G / 2
    if hc.B_hfs != 0.0 and lvl.twoJ >= 2 and species.twoI >= 2:
        shift += hc.B_hfs * (1.5 * G * (G + 1) - 2 * I * (I + 1) * J * (J + 1)) / (
            2 * I * (2 * I - 1) * 2 * J * (2 * J - 1))
    return shift


def hfs_matrix(species: SpeciesData, level: str) -> np.ndarray:
    """Diagonal hfs Hamiltonian over :func:`hfs_basis` (rad/s)."""
    lvl = species.level(level)
    basis = hfs_basis(lvl.twoJ, species.twoI)
    diag = [2 * math.pi * hfs_shift(species, level, s.twoF / 2) for s in basis]
    return np.diag(np.asarray(diag, dtype=complex))


def _hamiltonian(species, level, fields: Sequence[FieldSpec]) -> np.ndarray:
    H = hfs_matrix(species, level)
    for fld in fields:
        if fld.intensity > 0:
            H = H + stark_matrix(species, level, fld)
    return H


def _conserves_M(H: np.ndarray, basis: list[HfsState]) -> bool:
    twoM = np.array([s.twoM for s in basis])
    off = twoM[:, None] != twoM[None, :]
    scale = max(float(np.max(np.abs(H))), 1e-300)
    return bool(np.all(np.abs(H[off]) <= 1e-13 * scale))


def _eigh_blocked(H: np.ndarray, basis: list[HfsState]):
    """Eigen-decomposition; per-M blocks when M is conserved so that
    degenerate +-M pairs never mix."""
    if not _conserves_M(H, basis):
        w, v = np.linalg.eigh(H)
        return w, v
    n = len(basis)
    w = np.empty(n)
    v = np.zeros((n, n), dtype=complex)
    col = 0
    for twoM in sorted({s.twoM for s in basis}):
        idx = [i for i, s in enumerate(basis) if s.twoM == twoM]
        wb, vb = np.linalg.eigh(H[np.ix_(idx, idx)])
        for k in range(len(idx)):
            w[col] = wb[k]
            v[idx, col] = vb[:, k]
            col += 1
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _assign(reference: np.ndarray, vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column permutation of ``vecs`` maximizing overlap with ``reference``.

    Returns ``(perm, overlap)`` with ``vecs[:, perm[i]]`` matched to
    ``reference[:, i]``. Near-ties go to eigenvalue order via a tiny penalty.
    """
    ov = np.abs(reference.conj().T @ vecs) ** 2
    n = ov.shape[0]
    idx = np.arange(n)
    cost = -np.round(ov, 9) + 1e-12 * np.abs(idx[:, None] - idx[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(n, dtype=int)
    perm[rows] = cols
    return perm, ov[idx, perm]


@dataclass
class ShiftTable:
    """Labelled eigen-decomposition of one fine level in a set of fields.

    ``eigenvalues[i]`` (rad/s, hfs included) and ``eigenvectors[:, i]``
    belong to the zero-field state ``basis[i]``. ``overlap[i]`` is the
    squared overlap used for the last labelling step; values well below 1/2
    flag an ambiguous assignment.
    """

    level: str
    basis: list[HfsState]
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    hfs: dict
    overlap: np.ndarray = field(default_factory=lambda: np.ones(0))

    def shift(self, F, M) -> float:
        """Total shift ``delta_tot`` of the state labelled (F, M) in Hz, hfs included."""
        from .angular import twice
        i = self.basis.index(HfsState(twice(F), twice(M)))
        return float(self.eigenvalues[i] / (2 * math.pi))

    @property
    def delta_tot(self) -> dict[tuple[float, float], float]:
        return {(s.F, s.M): float(e / (2 * math.pi)) for s, e in zip(self.basis, self.eigenvalues)}

    @property
    def light_shift(self) -> np.ndarray:
        """Eigenvalues minus the bare hfs energy of each label (Hz)."""
        bare = np.array([self.hfs[s.twoF] for s in self.basis])
        return self.eigenvalues / (2 * math.pi) - bare

    @property
    def ambiguous(self) -> bool:
        return bool(self.overlap.size and np.min(self.overlap) < 0.5)


def diagonalize_interaction(
    species: SpeciesData,
    level: str,
    fields: Sequence[FieldSpec] = (),
    reference: ShiftTable | None = None,
    ramp_steps: int = 16,
) -> ShiftTable:
    """Diagonalize ``H_hfs + sum V_Stark`` for one fine level and label states.

    Labels follow the eigenvectors of ``reference`` when given (continuation
    along a power grid); otherwise the fields are ramped from zero in
    ``ramp_steps`` steps and labels are carried by maximum overlap.
    """
    lvl = species.level(level)
    basis = hfs_basis(lvl.twoJ, species.twoI)
    hfs = {s.twoF: hfs_shift(species, level, s.twoF / 2) for s in basis}
    H0 = hfs_matrix(species, level)
    V = _hamiltonian(species, level, fields) - H0

    if reference is not None:
        steps = [1.0]
        ref_vecs = reference.eigenvectors
    else:
        steps = [(k / ramp_steps) ** 2 for k in range(1, ramp_steps + 1)] if np.any(V) else [1.0]
        ref_vecs = np.eye(len(basis), dtype=complex)
    overlap = np.ones(len(basis))
    for s in steps:
        w, v = _eigh_blocked(H0 + s * V, basis)
        perm, overlap = _assign(ref_vecs, v)
        ref_vecs = v[:, perm]
        w = w[perm]
    if np.min(overlap) < 0.5:
        warnings.warn(f"ambiguous eigenstate labelling for {level} (min overlap {np.min(overlap):.3f})",
                      RuntimeWarning, stacklevel=2)
    return ShiftTable(level, basis, np.asarray(w, dtype=float), ref_vecs, hfs, overlap)


def ground_shift(species: SpeciesData, fields: Sequence[FieldSpec], level: str | None = None):
    """Light shift of the ground level in Hz.

    A single float when all Zeeman states shift equally (linear
    polarization), else a ``{(F, M): Hz}`` map.
    """
    level = level or species.ground.key
    table = diagonalize_interaction(species, level, fields)
    ls = table.light_shift
    if np.ptp(ls) <= 1e-9 * max(np.max(np.abs(ls)), 1.0):
        return float(np.mean(ls))
    return {(s.F, s.M): float(x) for s, x in zip(table.basis, ls)}


def allowed_transitions(ground: ShiftTable, excited: ShiftTable, twoF_ground: int | None = None):
    """E1-allowed ``(i_ground, j_excited)`` index pairs, optionally for one ground F."""
    pairs = []
    for i, sg in enumerate(ground.basis):
        if twoF_ground is not None and sg.twoF != twoF_ground:
            continue
        for j, se in enumerate(excited.basis):
            if abs(se.twoF - sg.twoF) <= 2 and abs(se.twoM - sg.twoM) <= 2:
                pairs.append((i, j))
    return pairs


def transition_detunings(ground: ShiftTable, excited: ShiftTable, F_ref=3, Fp_ref=4,
                         F_ground=None) -> dict:
    """Detuning (Hz) of each allowed ``(F, M) -> (F', M')`` line from the
    unperturbed ``F_ref -> Fp_ref`` frequency.

    Each shift is ``[delta_tot(F', M') - delta_hfs(Fp_ref)] - [delta_tot(F, M) - delta_hfs(F_ref)]``,
    which for a scalar ground shift reduces to ``delta_tot - delta_hfs(Fp_ref) - delta_g``.
    """
    from .angular import twice
    twoFr, twoFpr = twice(F_ref), twice(Fp_ref)
    Fg = twoFr if F_ground is None else twice(F_ground)
    e_ref = excited.hfs[twoFpr]
    g_ref = ground.hfs[twoFr]
    out = {}
    for i, j in allowed_transitions(ground, excited, Fg):
        sg, se = ground.basis[i], excited.basis[j]
        out[(sg.F, sg.M, se.F, se.M)] = (
            (excited.eigenvalues[j] / (2 * math.pi) - e_ref)
            - (ground.eigenvalues[i] / (2 * math.pi) - g_ref)
        )
    return out


@dataclass
class CompensationScan:
    """Transition detunings along a compensation-power grid.

    ``detuning[k, i, j]`` (Hz) is the line from ground state ``ground_basis[i]``
    to excited state ``excited_basis[j]`` at ``P_c[k]``; disallowed pairs
    are NaN.
    """

    P_c: np.ndarray
    ground_basis: list[HfsState]
    excited_basis: list[HfsState]
    ground_shift: np.ndarray  # (nP, ng) light shift, Hz
    excited_shift: np.ndarray  # (nP, ne) eigenvalue minus reference hfs, Hz
    detuning: np.ndarray

    def curve(self, F, M, Fp, Mp) -> np.ndarray:
        from .angular import twice
        i = self.ground_basis.index(HfsState(twice(F), twice(M)))
        j = self.excited_basis.index(HfsState(twice(Fp), twice(Mp)))
        return self.detuning[:, i, j]

    def transitions(self):
        """Allowed label tuples ``(F, M, F', M')`` in table order."""
        ok = ~np.isnan(self.detuning[0])
        return [(sg.F, sg.M, se.F, se.M)
                for i, sg in enumerate(self.ground_basis)
                for j, se in enumerate(self.excited_basis) if ok[i, j]]

    def zero_crossings(self, F, M, Fp, Mp) -> list[float]:
        """Powers (W) where one transition detuning changes sign, by linear interpolation."""
        y = self.curve(F, M, Fp, Mp)
        x = self.P_c
        out = []
        for k in range(len(x) - 1):
            if y[k] == 0.0:
                out.append(float(x[k]))
            elif y[k] * y[k + 1] < 0:
                out.append(float(x[k] - y[k] * (x[k + 1] - x[k]) / (y[k + 1] - y[k])))
        if len(y) and y[-1] == 0.0:
            out.append(float(x[-1]))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["P_c_uW", "F", "M", "Fprime", "Mprime", "detuning_MHz"])
        labels = self.transitions()
        ok = ~np.isnan(self.detuning[0])
        pairs = [(i, j) for i in range(ok.shape[0]) for j in range(ok.shape[1]) if ok[i, j]]
        for k, P in enumerate(self.P_c):
            for (F, M, Fp, Mp), (i, j) in zip(labels, pairs):
                w.writerow([f"{P * 1e6:.6g}", _fmt(F), _fmt(M), _fmt(Fp), _fmt(Mp),
                            f"{self.detuning[k, i, j] * 1e-6:.9g}"])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{int(round(2 * x))}/2"


def compensation_scan(
    species: SpeciesData,
    fields_at: Callable[[float], Sequence[FieldSpec]],
    P_c: Sequence[float],
    ground: str = "5S1/2",
    excited: str = "5P3/2",
    F_ref=3,
    Fp_ref=4,
) -> CompensationScan:
    """Detunings of all lines from ground ``F_ref`` along a power grid.

    ``fields_at(P)`` returns the fields at the atom for compensation power
    ``P`` (W). Labels are continued adiabatically from the first grid point.
    """
    from .angular import twice
    P = np.asarray(P_c, dtype=float)
    if P.ndim != 1 or P.size == 0:
        raise ValueError("P_c grid must be a non-empty 1-D sequence")
    if P.size > 1 and not np.all(np.diff(P) > 0):
        raise ValueError("P_c grid must be strictly increasing")
    twoFr = twice(F_ref)
    g_tab = e_tab = None
    gs, es, det = [], [], []
    for p in P:
        flds = fields_at(float(p))
        g_tab = diagonalize_interaction(species, ground, flds, reference=g_tab)
        e_tab = diagonalize_interaction(species, excited, flds, reference=e_tab)
        gs.append(g_tab.light_shift)
        es.append(e_tab.eigenvalues / (2 * math.pi) - e_tab.hfs[twice(Fp_ref)])
        d = np.full((len(g_tab.basis), len(e_tab.basis)), np.nan)
        for i, j in allowed_transitions(g_tab, e_tab, twoFr):
            d[i, j] = es[-1][j] - gs[-1][i]
        det.append(d)
    return CompensationScan(P, g_tab.basis, e_tab.basis, np.array(gs), np.array(es), np.array(det))
