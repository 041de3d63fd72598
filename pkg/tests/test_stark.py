import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation
from sympy.physics.wigner import wigner_3j as sym3j

from wgmtrap.angular import PolVector
from wgmtrap.atomdata.constants import c, ea0, epsilon_0, hbar
from wgmtrap.stark import (
    DEFAULT_POLE_GUARD,
    FieldSpec,
    HfsState,
    ResonanceError,
    compensation_scan,
    diagonalize_interaction,
    ground_shift,
    hfs_basis,
    hfs_shift,
    polarizabilities,
    reduced_polarizability,
    stark_matrix,
    stark_matrix_unit,
    transition_detunings,
)

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------- direct -d.E oracle

def _s3j(*args):
    return float(sym3j(*[Fraction(a).limit_denominator(4) for a in args]))


def _states(J):
    return [Fraction(int(2 * J) - 2 * k, 2) * -1 for k in range(int(2 * J) + 1)][::-1]


def _oracle_stark(Jg, Je, I, d_red, omega_line, omega, u, intensity):
    """Second-order -d.E shift of the J_g manifold in the |F M> basis (rad/s).

    Built from Cartesian dipole matrices in the product basis |J mJ> |I mI>
    with Wigner-Eckart elements (-1)^(J'-m') (J' 1 J; -m' q m) <J'||d||J>,
    then projected on |F M> with Clebsch-Gordan coefficients.
    """
    mg, me = _states(Jg), _states(Je)
    # spherical d_q from ground (columns) to excited (rows)
    A = {}
    for q in (-1, 0, 1):
        M = np.zeros((len(me), len(mg)))
        for a, m2 in enumerate(me):
            for b, m1 in enumerate(mg):
                phase = (-1) ** int(Je - m2)
                M[a, b] = phase * _s3j(Je, 1, Jg, -m2, q, m1) * d_red
        A[q] = M
    s2 = math.sqrt(2)
    # Cartesian components of the excitation block <e|d_i|g>
    dx = (A[-1] - A[1]) / s2
    dy = 1j * (A[-1] + A[1]) / s2
    dz = A[0].astype(complex)
    d_up = [dx, dy, dz]
    du = sum(di * ui for di, ui in zip(d_up, u))                 # <e| d.u |g>
    duc = sum(di * np.conj(ui) for di, ui in zip(d_up, u))       # <e| d.u* |g>
    amp_sq = 2 * intensity / (epsilon_0 * c)                     # |E|^2 for E = Re[E u e^{-i w t}]
    # <g'|d.u*|e> = conj(<e|d.u|g'>) and <g'|d.u|e> = conj(<e|d.u*|g'>)
    V = -(amp_sq / 4) / hbar**2 * (
        du.conj().T @ du / (omega_line - omega) + duc.conj().T @ duc / (omega_line + omega)
    )
    # electronic operator times identity on the nucleus
    nI = int(2 * I) + 1
    Vp = np.kron(V, np.eye(nI))
    mI = _states(I)
    prod = [(m1, m2) for m1 in mg for m2 in mI]
    basis = hfs_basis(int(2 * Jg), int(2 * I))
    C = np.zeros((len(basis), len(prod)))
    for k, s in enumerate(basis):
        F, MF = Fraction(s.twoF, 2), Fraction(s.twoM, 2)
        for p, (mJ, mi) in enumerate(prod):
            C[k, p] = (-1) ** int(Jg - I + MF) * math.sqrt(2 * F + 1) * _s3j(Jg, I, F, mJ, mi, -MF)
    return C @ Vp @ C.T


@pytest.mark.parametrize("u", [
    (0, 0, 1),
    (1, 0, 0),
    (0, 0.98, 0.20j),
    (0.3, 0.5j, -0.2 + 0.1j),
    (1 / math.sqrt(2), 1j / math.sqrt(2), 0),
])
@pytest.mark.parametrize("level", ["g", "e"])
def test_stark_matrix_matches_direct_dipole_oracle(toy, u, level):
    pol = PolVector(u, normalize=True)
    omega_line = toy.level("e").energy
    omega = 0.9 * omega_line
    d = toy.lines[0].reduced_dipole
    intensity = 3.0e8
    if level == "g":
        ref = _oracle_stark(Fraction(1, 2), Fraction(3, 2), Fraction(1, 2), d, omega_line, omega, pol.array, intensity)
    else:
        # the lower level sits at negative transition frequency seen from the excited state
        ref = _oracle_stark(Fraction(3, 2), Fraction(1, 2), Fraction(1, 2), d, -omega_line, omega, pol.array,
                            intensity)
    got = stark_matrix(toy, level, FieldSpec(omega, intensity, pol))
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(got - ref)) <= 1e-9 * scale


def test_scalar_shift_matches_two_level_formula(toy):
    # J = 1/2 ground, linear light: every sublevel shifts by -|E|^2/4 * alpha_s
    omega_line = toy.level("e").energy
    omega = 0.8 * omega_line
    d2 = toy.lines[0].reduced_dipole ** 2
    alpha_s = 2 * omega_line * d2 / (3 * 2 * hbar * (omega_line**2 - omega**2))
    I = 1e9
    expected = -alpha_s * (2 * I / (epsilon_0 * c)) / 4 / hbar
    S = stark_matrix(toy, "g", FieldSpec(omega, I, PolVector.linear("z")))
    assert np.allclose(S, expected * np.eye(S.shape[0]), rtol=1e-12, atol=0)


# ---------------------------------------------------------------- structural invariants

pol_strategy = st.tuples(*[st.floats(-1, 1) for _ in range(6)]).filter(lambda t: sum(x * x for x in t) > 1e-3)


def _pol(t):
    return PolVector(np.array(t[:3]) + 1j * np.array(t[3:]), normalize=True)


@given(pol_strategy)
def test_stark_matrix_is_hermitian(rb85, t):
    wt = TWO_PI * c / 783.68e-9
    for level in ("5S1/2", "5P3/2"):
        S = stark_matrix_unit(rb85, level, wt, _pol(t))
        assert np.max(np.abs(S - S.conj().T)) <= 1e-10 * np.max(np.abs(S))


@given(pol_strategy)
def test_rank1_and_rank2_parts_are_traceless(rb85, t):
    # the trace only sees the scalar part, which is the same for every unit vector
    wt = TWO_PI * c / 783.68e-9
    for level in ("5S1/2", "5P3/2"):
        tr = np.trace(stark_matrix_unit(rb85, level, wt, _pol(t)))
        tr_ref = np.trace(stark_matrix_unit(rb85, level, wt, PolVector.linear("z")))
        assert abs(tr - tr_ref) <= 1e-10 * abs(tr_ref)


@given(pol_strategy, st.integers(0, 2**31 - 1))
def test_spectrum_is_rotation_invariant(rb85, t, seed):
    u = _pol(t)
    v = PolVector(Rotation.random(random_state=seed).as_matrix() @ u.array)
    wt = TWO_PI * c / 783.68e-9
    S_u = stark_matrix_unit(rb85, "5P3/2", wt, u)
    S_v = stark_matrix_unit(rb85, "5P3/2", wt, v)
    ev_u, ev_v = np.linalg.eigvalsh(S_u), np.linalg.eigvalsh(S_v)
    assert np.max(np.abs(ev_u - ev_v)) <= 1e-10 * np.max(np.abs(ev_u))


def test_j_half_ground_has_no_tensor_part(rb85):
    alpha = polarizabilities(rb85, "5S1/2", TWO_PI * c / 783.68e-9)
    assert alpha[2] == 0.0
    assert alpha[0] > 0  # red of every strong line: attractive scalar shift


def test_counter_rotating_term_matters(rb85):
    # dropping the counter-rotating denominator would change the scalar polarizability by percent
    wt = TWO_PI * c / 783.68e-9
    a0 = reduced_polarizability(rb85, "5S1/2", 0, wt)
    a0_static = reduced_polarizability(rb85, "5S1/2", 0, 0.0)
    assert a0 != a0_static and abs(a0) > abs(a0_static)


# ---------------------------------------------------------------- pole guard

def test_pole_guard_rejects_near_resonant_field(rb85):
    d2 = rb85.level("5P3/2").energy
    with pytest.raises(ResonanceError):
        reduced_polarizability(rb85, "5S1/2", 0, d2 + TWO_PI * 1e9)
    assert DEFAULT_POLE_GUARD == pytest.approx(TWO_PI * 10e9)


def test_pole_guard_whitelist(rb85):
    line = rb85.level("5D5/2").energy - rb85.level("5P3/2").energy
    omega = line - TWO_PI * 927e6
    with pytest.raises(ResonanceError):
        reduced_polarizability(rb85, "5P3/2", 0, omega)
    val = reduced_polarizability(rb85, "5P3/2", 0, omega, near_resonant={"5D5/2"})
    assert np.isfinite(val)


def test_negative_intensity_rejected():
    with pytest.raises(ValueError):
        FieldSpec(1e15, -1.0, PolVector.linear("z"))


# ---------------------------------------------------------------- hfs

def test_ground_hfs_splitting(rb85):
    split = hfs_shift(rb85, "5S1/2", 3) - hfs_shift(rb85, "5S1/2", 2)
    assert split == pytest.approx(3035.7324e6, rel=1e-6)


def test_excited_hfs_values(rb85):
    assert hfs_shift(rb85, "5P3/2", 4) == pytest.approx(100.205e6, rel=1e-4)
    assert hfs_shift(rb85, "5P3/2", 4) - hfs_shift(rb85, "5P3/2", 3) == pytest.approx(120.640e6, rel=1e-3)


def test_hfs_basis_order():
    b = hfs_basis(1, 5)
    assert b[0] == HfsState(4, -4) and b[-1] == HfsState(6, 6)
    assert len(b) == 12


def test_zero_field_eigenvalues_are_hfs(rb85):
    tab = diagonalize_interaction(rb85, "5P3/2")
    for s, e in zip(tab.basis, tab.eigenvalues):
        assert e / TWO_PI == pytest.approx(hfs_shift(rb85, "5P3/2", s.F), abs=1e-3)
    assert np.allclose(tab.light_shift, 0.0, atol=1e-6)


# ---------------------------------------------------------------- shifts and scans

def _trap_field(rb85, intensity, pol=PolVector.linear("z")):
    return FieldSpec(TWO_PI * c / 783.68e-9, intensity, pol)


def test_ground_shift_scalar_for_linear_light(rb85):
    s = ground_shift(rb85, [_trap_field(rb85, 1e9)])
    assert isinstance(s, float) and s < 0


def test_ground_shift_resolves_zeeman_states_for_elliptical_light(rb85):
    s = ground_shift(rb85, [_trap_field(rb85, 1e9, PolVector((0, 0.98, 0.2j), normalize=True))])
    assert isinstance(s, dict) and len(s) == 12


def test_labels_follow_adiabatic_continuation(rb85):
    tab = diagonalize_interaction(rb85, "5P3/2", [_trap_field(rb85, 3e9)])
    assert not tab.ambiguous
    # with z-linear light M stays a good quantum number: eigenvectors are block-diagonal in M
    for i, s in enumerate(tab.basis):
        vec = tab.eigenvectors[:, i]
        for k, other in enumerate(tab.basis):
            if other.twoM != s.twoM:
                assert abs(vec[k]) < 1e-12


def test_transition_detunings_vanish_without_fields(rb85):
    g = diagonalize_interaction(rb85, "5S1/2")
    e = diagonalize_interaction(rb85, "5P3/2")
    det = transition_detunings(g, e)
    assert det[(3.0, 3.0, 4.0, 4.0)] == pytest.approx(0.0, abs=1e-3)
    assert len([k for k in det if k[2] == 4.0]) == 21


def test_compensation_scan_requires_increasing_grid(rb85):
    with pytest.raises(ValueError):
        compensation_scan(rb85, lambda P: [], [0.2, 0.1])
    with pytest.raises(ValueError):
        compensation_scan(rb85, lambda P: [], [])


def test_compensation_scan_csv_is_stable(rb85):
    flds = lambda P: [_trap_field(rb85, 1e9 * (1 + P))]  # noqa: E731
    a = compensation_scan(rb85, flds, [0.0, 0.5, 1.0]).to_csv()
    b = compensation_scan(rb85, flds, [0.0, 0.5, 1.0]).to_csv()
    assert a == b
    assert a.splitlines()[0] == "P_c_uW,F,M,Fprime,Mprime,detuning_MHz"
