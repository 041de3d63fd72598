"""Single-atom cavity QED: weak-drive formulas, a master-equation oracle and
position-averaged spectra.

The model is a two-level atom (dipole decay rate ``gamma``) coupled with
strength ``g`` to one resonator mode (field decay ``kappa0 + kappa_ext``),
in the frame rotating at the probe frequency. Fluorescence is driven
through the atom, transmission through the coupling fiber.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .angular import wigner3j
from .stark import hfs_basis

__all__ = [
    "CqedParams",
    "Spectrum",
    "CutoffError",
    "SingularLiouvillianError",
    "SteadyState",
    "fluorescence_output",
    "transmission",
    "steadystate_numeric",
    "steadystate_auto",
    "rabi_frequency",
    "zeeman_line_strengths",
    "averaged_fluorescence_spectrum",
    "averaged_transmission_spectrum",
    "symmetry_metric",
    "spectrum_minima",
    "peak_and_fwhm",
]


class CutoffError(ArithmeticError):
    """Fock-space truncation holds too much population at the top level."""


class SingularLiouvillianError(ArithmeticError):
    """No unique steady state (all damping rates zero)."""


@dataclass(frozen=True)
class CqedParams:
    """Rates and detunings in rad/s.

    ``Omega`` is the atomic drive Rabi frequency (fluorescence);
    ``drive`` is the fiber input amplitude ``epsilon`` in sqrt(photons/s)
    used for transmission, entering as ``i sqrt(2 kappa_ext) epsilon (a - a^dag)``.
    """

    g: float
    kappa0: float
    kappa_ext: float
    gamma: float
    Omega: float = 0.0
    Delta_al: float = 0.0
    Delta_rl: float = 0.0
    drive: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa0", "kappa_ext", "gamma", "Omega", "drive"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be >= 0")

    @property
    def kappa_tot(self) -> float:
        return self.kappa0 + self.kappa_ext

    def with_(self, **kw) -> "CqedParams":
        return replace(self, **kw)


@dataclass
class Spectrum:
    abscissa: np.ndarray
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)
    breakdown: dict | None = None


# ---------------------------------------------------------------- analytic

def _denominator(g, gamma, Dal, ktot, Drl):
    return g * g + (gamma + 1j * Dal) * (ktot + 1j * Drl)


def fluorescence_output(p: CqedParams):
    """Weak-drive output photon flux ``2 kappa_ext |<a>|^2`` for an atom driven at ``Omega``.

    Broadcasts over array-valued fields if ``p`` holds arrays.
    """
    num = p.g * p.Omega / 2
    den = _denominator(p.g, p.gamma, p.Delta_al, p.kappa_tot, p.Delta_rl)
    return 2 * p.kappa_ext * np.abs(num / den) ** 2


def transmission(p: CqedParams):
    """Weak-drive fiber transmission ``|t|^2``.

    A vanishing denominator needs ``kappa_tot = 0``, i.e. no fiber coupling,
    where the fiber transmits fully.
    """
    ga = p.gamma + 1j * np.asarray(p.Delta_al)
    num = p.g**2 + ga * (p.kappa0 - p.kappa_ext + 1j * np.asarray(p.Delta_rl))
    den = p.g**2 + ga * (p.kappa0 + p.kappa_ext + 1j * np.asarray(p.Delta_rl))
    zero = den == 0
    t = num / np.where(zero, 1.0, den)
    return np.where(zero, 1.0, np.abs(t) ** 2)


# ---------------------------------------------------------------- numeric oracle

@dataclass
class SteadyState:
    a: complex
    sigma_minus: complex
    photon_number: float
    excited_population: float
    rho: np.ndarray
    n_max: int

    def output_flux(self, kappa_ext: float) -> float:
        """``|<a_out>|^2`` with ``a_out = -i sqrt(2 kappa_ext) a`` (no input)."""
        return float(2 * kappa_ext * abs(self.a) ** 2)

    def transmitted_amplitude(self, kappa_ext: float, drive: float) -> complex:
        """``<a_out> = <a_in> - i sqrt(2 kappa_ext) <a>`` with ``<a_in> = -i drive``."""
        return -1j * drive - 1j * math.sqrt(2 * kappa_ext) * self.a


def _operators(n_max: int):
    nf = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, nf)), 1).astype(complex)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| with basis (g, e)
    Ia, If = np.eye(2), np.eye(nf)
    return np.kron(Ia, a), np.kron(sm, If)


def _liouvillian(H, collapse):
    """Superoperator for column-stacked vec(rho): vec(A rho B) = (B^T kron A) vec(rho)."""
    n = H.shape[0]
    eye = np.eye(n)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for rate, C in collapse:
        if rate == 0:
            continue
        CdC = C.conj().T @ C
        L += rate * (2 * np.kron(C.conj(), C) - np.kron(eye, CdC) - np.kron(CdC.T, eye))
    return L


def steadystate_numeric(p: CqedParams, drive: str = "fluor", n_max: int = 5,
                        cutoff_tol: float = 1e-6) -> SteadyState:
    """Steady state of the truncated atom x Fock-space master equation.

    The damping terms are ``kappa_tot D[a]`` and ``gamma D[sigma_-]`` with
    ``D[C] rho = 2 C rho C^dag - C^dag C rho - rho C^dag C``; the steady
    state is the null vector of the Liouvillian normalized to unit trace.

    Raises
    ------
    CutoffError
        If the top Fock level holds more than ``cutoff_tol`` of the population.
    SingularLiouvillianError
        If all damping rates vanish.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if p.kappa_tot == 0 and p.gamma == 0:
        raise SingularLiouvillianError("no damping: steady state undefined")
    a, sm = _operators(n_max)
    sp = sm.conj().T
    H = p.Delta_rl * (a.conj().T @ a) + p.Delta_al * (sp @ sm) + p.g * (a.conj().T @ sm + a @ sp)
    if drive == "fluor":
        H = H + 1j * (p.Omega / 2) * (sm - sp)
    elif drive == "trans":
        H = H + 1j * math.sqrt(2 * p.kappa_ext) * p.drive * (a - a.conj().T)
    else:
        raise ValueError("drive must be 'fluor' or 'trans'")
    L = _liouvillian(H, [(p.kappa_tot, a), (p.gamma, sm)])
    n = H.shape[0]
    # replace one equation by the trace condition
    A = L.copy()
    b = np.zeros(n * n, dtype=complex)
    trace_row = np.eye(n).reshape(-1, order="F")
    A[0, :] = trace_row
    b[0] = 1.0
    try:
        vec = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularLiouvillianError("Liouvillian has no unique steady state") from None
    rho = vec.reshape(n, n, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    nf = n_max + 1
    pops = np.real(np.diag(rho))
    top = pops[nf - 1] + pops[2 * nf - 1]
    if top > cutoff_tol * pops.sum():
        raise CutoffError(f"population {top:.3g} in Fock level {n_max}")
    return SteadyState(
        a=complex(np.trace(rho @ a)),
        sigma_minus=complex(np.trace(rho @ sm)),
        photon_number=float(np.real(np.trace(rho @ a.conj().T @ a))),
        excited_population=float(np.real(np.trace(rho @ sp @ sm))),
        rho=rho,
        n_max=n_max,
    )


def steadystate_auto(p: CqedParams, drive: str = "fluor", n_max: int = 5, n_limit: int = 40) -> SteadyState:
    """:func:`steadystate_numeric` with the cutoff raised until it is sufficient."""
    while True:
        try:
            return steadystate_numeric(p, drive, n_max)
        except CutoffError:
            if n_max >= n_limit:
                raise
            n_max = min(2 * n_max, n_limit)


# ---------------------------------------------------------------- drive and line strengths

def rabi_frequency(intensity, I_sat: float, gamma: float):
    """Resonant Rabi frequency from ``I / I_sat`` with ``Gamma = 2 gamma``.

    Uses the two-level relation ``Omega^2 / Gamma^2 = I / (2 I_sat)``.
    """
    return 2 * gamma * np.sqrt(np.asarray(intensity, dtype=float) / (2 * I_sat))


def zeeman_line_strengths(twoJg: int, twoJe: int, twoI: int, twoFg: int, twoFe: int) -> np.ndarray:
    """Relative strengths ``sum_q |<Fe Me| d_q |Fg Mg>|^2`` between zero-field states.

    Rows index ground states, columns excited states, both in
    :func:`hfs_basis` order; values are normalized so the strongest
    (cycling) pair equals one.
    """
    gb, eb = hfs_basis(twoJg, twoI), hfs_basis(twoJe, twoI)
    S = np.zeros((len(gb), len(eb)))
    for i, sg in enumerate(gb):
        if sg.twoF != twoFg:
            continue
        for j, se in enumerate(eb):
            if se.twoF != twoFe:
                continue
            q2 = se.twoM - sg.twoM
            if abs(q2) > 2:
                continue
            S[i, j] = wigner3j(se.F, 1, sg.F, -se.M, q2 / 2, sg.M) ** 2
    return S / S.max()


# ---------------------------------------------------------------- spectra helpers

def symmetry_metric(detuning, values) -> float:
    """Integrated ``|T(D) - T(-D)|`` over a grid symmetric about zero."""
    d = np.asarray(detuning, dtype=float)
    v = np.asarray(values, dtype=float)
    mirrored = np.interp(-d, d, v)
    return float(integrate.trapezoid(np.abs(v - mirrored), d) / 2)


def spectrum_minima(detuning, values) -> list[float]:
    """Local minima positions, refined by a parabola through neighbours."""
    d = np.asarray(detuning, dtype=float)
    v = np.asarray(values, dtype=float)
    out = []
    for k in range(1, len(v) - 1):
        if v[k] < v[k - 1] and v[k] <= v[k + 1]:
            y0, y1, y2 = v[k - 1], v[k], v[k + 1]
            den = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
            out.append(float(d[k] + shift * (d[k + 1] - d[k])))
    return out


def peak_and_fwhm(x, y) -> tuple[float, float]:
    """Peak position (parabolic refinement) and full width at half maximum
    (linear interpolation at the half-height crossings)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    xp = x[k]
    if 0 < k < len(y) - 1:
        y0, y1, y2 = y[k - 1], y[k], y[k + 1]
        den = y0 - 2 * y1 + y2
        if den != 0:
            xp = x[k] + 0.5 * (y0 - y2) / den * (x[k + 1] - x[k])
    half = y[k] / 2
    left = right = math.nan
    for i in range(k, 0, -1):
        if y[i - 1] < half <= y[i]:
            left = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    for i in range(k, len(y) - 1):
        if y[i + 1] < half <= y[i]:
            right = x[i] + (y[i] - half) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    return float(xp), float(right - left)


# ---------------------------------------------------------------- position-averaged spectra

@dataclass
class BinSample:
    """Per-position inputs of an averaged spectrum.

    ``weights`` (N,) sum to one; ``g`` and ``Omega`` (N,) are in rad/s;
    ``I_trap`` and ``I_comp_per_W`` (N,) are the trap intensity and the
    compensation intensity per watt of compensation power (W/m^2).
    """

    weights: np.ndarray
    g: np.ndarray
    Omega: np.ndarray
    I_trap: np.ndarray
    I_comp_per_W: np.ndarray


def _batched_levels(Hhfs, S_trap, S_comp, I_t, I_c):
    """Eigen-decomposition of ``H_hfs + I_t S_t + I_c S_c`` for many (I_t, I_c)."""
    H = Hhfs[None] + I_t[:, None, None] * S_trap[None] + I_c[:, None, None] * S_comp[None]
    return np.linalg.eigh(H)


def averaged_fluorescence_spectrum(
    stark_ops: dict,
    bins: BinSample,
    P_c: Sequence[float],
    base: CqedParams,
    line_strengths: np.ndarray,
    ground_pop: np.ndarray | None = None,
    breakdown: bool = False,
) -> Spectrum:
    """Fluorescence vs compensation power averaged over Zeeman lines and positions.

    ``stark_ops`` holds, for the ground (``"g"``) and excited (``"e"``)
    level, the hfs matrix ``H`` and unit-intensity Stark matrices ``S_trap``
    and ``S_comp`` (rad/s), plus the reference hfs offsets ``ref_g`` and
    ``ref_e`` (rad/s) of the unperturbed probe transition. At each position
    the interaction Hamiltonians are diagonalized; every ground/excited
    eigenpair contributes with the dipole strength of its eigenvectors and
    detuning ``Delta_al`` equal to its light-shifted transition frequency
    relative to the unperturbed line. Positions are averaged incoherently.
    """
    P_c = np.asarray(P_c, dtype=float)
    g_ops, e_ops = stark_ops["g"], stark_ops["e"]
    ng = g_ops["H"].shape[0]
    if ground_pop is None:
        ground_pop = np.zeros(ng)
        mask = line_strengths.sum(axis=1) > 0
        ground_pop[mask] = 1.0 / mask.sum()
    D = _signed_amplitudes(line_strengths, stark_ops)
    vals = np.zeros(P_c.size)
    parts = {} if breakdown else None
    Nb = bins.weights.size
    for k, P in enumerate(P_c):
        Ic = bins.I_comp_per_W * P
        wg, vg = _batched_levels(g_ops["H"], g_ops["S_trap"], g_ops["S_comp"], bins.I_trap, Ic)
        we, ve = _batched_levels(e_ops["H"], e_ops["S_trap"], e_ops["S_comp"], bins.I_trap, Ic)
        # strengths between eigenstates: sum over polarization components q
        amp = np.zeros((Nb, ng, we.shape[1]))
        vgH = vg.conj().transpose(0, 2, 1)
        for Dq in D.values():
            amp += np.abs(vgH @ (Dq @ ve)) ** 2
        # ground eigenstate populations from the zero-field weights
        pop = np.einsum("nai,a->ni", np.abs(vg) ** 2, ground_pop)
        strength = amp * pop[:, :, None]
        total_w = strength.sum(axis=(1, 2), keepdims=True)
        strength = strength / np.where(total_w > 0, total_w, 1)
        det = (we[:, None, :] - e_ops["ref_e"]) - (wg[:, :, None] - g_ops["ref_g"])
        num = bins.g[:, None, None] * bins.Omega[:, None, None] / 2
        den = _denominator(bins.g[:, None, None], base.gamma, det, base.kappa_tot, base.Delta_rl)
        F = 2 * base.kappa_ext * np.abs(num / den) ** 2
        contrib = strength * F
        per_bin = np.sum(contrib, axis=(1, 2))
        vals[k] = float(np.dot(bins.weights, per_bin))
        if breakdown:
            # attribute each eigenpair to the zero-field labels it is mostly made of
            lg = np.argmax(np.abs(vg) ** 2, axis=1)
            le = np.argmax(np.abs(ve) ** 2, axis=1)
            flat = lg[:, :, None] * we.shape[1] + le[:, None, :]
            acc = np.bincount(flat.ravel(), weights=(contrib * bins.weights[:, None, None]).ravel(),
                              minlength=ng * we.shape[1])
            parts[float(P)] = acc.reshape(ng, we.shape[1])
    return Spectrum(P_c, vals, "fluorescence", {"n_bins": int(Nb)}, parts)


def _signed_amplitudes(line_strengths, stark_ops) -> dict:
    """Spherical dipole matrices ``<e|d_q|g>`` (transposed to ground x excited) in the
    zero-field hfs bases, restricted to the pairs allowed in ``line_strengths``."""
    gb, eb = stark_ops["g"]["basis"], stark_ops["e"]["basis"]
    out = {}
    for q2 in (-2, 0, 2):
        Dq = np.zeros((len(gb), len(eb)))
        for i, sg in enumerate(gb):
            for j, se in enumerate(eb):
                if line_strengths[i, j] == 0 or se.twoM - sg.twoM != q2:
                    continue
                w = wigner3j(se.F, 1, sg.F, -se.M, q2 / 2, sg.M)
                phase = -1.0 if ((se.twoF - se.twoM) // 2) % 2 else 1.0
                Dq[i, j] = phase * w
        out[q2 // 2] = Dq
    return out


def averaged_transmission_spectrum(
    bins: BinSample,
    cycling_shift: Callable[[np.ndarray, np.ndarray], np.ndarray],
    P_c: float,
    detunings: Sequence[float],
    base: CqedParams,
) -> Spectrum:
    """Transmission vs probe detuning averaged over positions.

    Only the cycling transition is used. ``cycling_shift(I_trap, I_comp)``
    returns its light shift (rad/s) per position; the atom-light detuning
    is ``Delta_al = Delta + shift`` while ``Delta_rl = Delta``.
    """
    D = np.asarray(detunings, dtype=float)
    shift = cycling_shift(bins.I_trap, bins.I_comp_per_W * P_c)
    Dal = D[:, None] + shift[None, :]
    Drl = D[:, None]
    ga = base.gamma + 1j * Dal
    g2 = bins.g[None, :] ** 2
    num = g2 + ga * (base.kappa0 - base.kappa_ext + 1j * Drl)
    den = g2 + ga * (base.kappa0 + base.kappa_ext + 1j * Drl)
    T = np.abs(num / den) ** 2
    vals = T @ bins.weights
    return Spectrum(D, vals, "transmission", {"P_c": float(P_c)})
