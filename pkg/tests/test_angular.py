import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation
from sympy import Rational
from sympy.physics.wigner import wigner_3j as sym3j
from sympy.physics.wigner import wigner_6j as sym6j

from wgmtrap.angular import HalfInt, PolVector, compound_tensor, spherical_components, twice, wigner3j, wigner6j


def _halves(max2):
    return [Fraction(k, 2) for k in range(0, max2 + 1)]


def _r(x):
    return Rational(x.numerator, x.denominator)


def test_twice_parses_common_spellings():
    assert twice("3/2") == 3
    assert twice(Fraction(5, 2)) == 5
    assert twice(2) == 4
    assert twice(HalfInt(7)) == 7
    assert str(HalfInt.of("5/2")) == "5/2"
    with pytest.raises(ValueError):
        twice(0.3)


def test_wigner3j_against_sympy():
    rng = np.random.default_rng(3)
    js = _halves(8)
    checked = 0
    while checked < 400:
        j1, j2 = rng.choice(js, 2)
        j3 = rng.choice([j for j in js if abs(j1 - j2) <= j <= j1 + j2 and (j1 + j2 + j) % 1 == 0] or [j1])
        m1 = rng.choice([-j1 + k for k in range(int(2 * j1) + 1)])
        m2 = rng.choice([-j2 + k for k in range(int(2 * j2) + 1)])
        m3 = -m1 - m2
        ref = float(sym3j(_r(j1), _r(j2), _r(j3), _r(m1), _r(m2), _r(m3)))
        assert wigner3j(j1, j2, j3, m1, m2, m3) == pytest.approx(ref, abs=1e-14)
        checked += 1


def test_wigner6j_against_sympy():
    js = _halves(6)
    checked = 0
    for j1, j2, j4, j5 in itertools.product(js[:6], repeat=4):
        for j3 in js:
            for j6 in (j1 + j5, abs(j1 - j5)):
                try:
                    ref = float(sym6j(_r(j1), _r(j2), _r(j3), _r(j4), _r(j5), _r(j6)))
                except ValueError:
                    ref = 0.0
                assert wigner6j(j1, j2, j3, j4, j5, j6) == pytest.approx(ref, abs=1e-14)
                checked += 1
    assert checked > 1000


def test_selection_rules_give_zero():
    assert wigner3j(1, 1, 3, 0, 0, 0) == 0.0  # triangle
    assert wigner3j(1, 1, 1, 1, 0, 0) == 0.0  # m sum
    assert wigner3j(1, 1, 1, 0, 0, 0) == 0.0  # odd sum, all m zero
    assert wigner6j(1, 1, 3, 1, 1, 1) == 0.0


angular = st.integers(0, 7)


@given(angular, angular, angular, angular)
def test_3j_orthogonality(tj1, tj2, tj3, tj3p):
    # sum_{m1 m2} (2 j3 + 1) (j1 j2 j3; m1 m2 m3)(j1 j2 j3'; m1 m2 m3') = delta delta
    if (tj1 + tj2 + tj3) % 2 or (tj1 + tj2 + tj3p) % 2:
        return
    j1, j2, j3, j3p = (Fraction(t, 2) for t in (tj1, tj2, tj3, tj3p))
    if not (abs(j1 - j2) <= j3 <= j1 + j2 and abs(j1 - j2) <= j3p <= j1 + j2):
        return
    for tm3 in range(-tj3, tj3 + 1, 2):
        m3 = Fraction(tm3, 2)
        for tm3p in range(-tj3p, tj3p + 1, 2):
            m3p = Fraction(tm3p, 2)
            s = 0.0
            for tm1 in range(-tj1, tj1 + 1, 2):
                for tm2 in range(-tj2, tj2 + 1, 2):
                    m1, m2 = Fraction(tm1, 2), Fraction(tm2, 2)
                    s += wigner3j(j1, j2, j3, m1, m2, m3) * wigner3j(j1, j2, j3p, m1, m2, m3p)
            expect = 1.0 / (2 * j3 + 1) if (tj3 == tj3p and tm3 == tm3p) else 0.0
            assert abs(s - expect) < 1e-12


@given(angular, angular, angular, st.integers(-7, 7), st.integers(-7, 7))
def test_3j_permutation_symmetry(tj1, tj2, tj3, tm1, tm2):
    j = [Fraction(t, 2) for t in (tj1, tj2, tj3)]
    m1, m2 = Fraction(tm1, 2), Fraction(tm2, 2)
    m = [m1, m2, -m1 - m2]
    base = wigner3j(*j, *m)
    # cyclic permutations leave the symbol unchanged
    assert wigner3j(j[1], j[2], j[0], m[1], m[2], m[0]) == pytest.approx(base, abs=1e-14)
    # odd permutation and m-reversal pick up (-1)^(j1+j2+j3)
    phase = -1.0 if (tj1 + tj2 + tj3) // 2 % 2 else 1.0
    if (tj1 + tj2 + tj3) % 2 == 0:
        assert wigner3j(j[1], j[0], j[2], m[1], m[0], m[2]) == pytest.approx(phase * base, abs=1e-14)
        assert wigner3j(*j, *(-x for x in m)) == pytest.approx(phase * base, abs=1e-14)


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(0, 8),
       st.integers(0, 8))
def test_6j_orthogonality(ta, tb, tc, td, tf, tg):
    # sum_x (2x+1)(2f+1) {a b x; c d f}{a b x; c d g} = delta_fg  (for admissible f, g)
    a, b, c, d, f, g = (Fraction(t, 2) for t in (ta, tb, tc, td, tf, tg))

    def tri(x, y, z):
        return abs(x - y) <= z <= x + y and (x + y + z) % 1 == 0

    if not (tri(a, d, f) and tri(c, b, f) and tri(a, d, g) and tri(c, b, g)):
        return
    xs = [Fraction(k, 2) for k in range(0, 30)]
    s = sum((2 * x + 1) * (2 * f + 1) * wigner6j(a, b, x, c, d, f) * wigner6j(a, b, x, c, d, g)
            for x in xs if tri(a, b, x) and tri(c, d, x))
    if any(tri(a, b, x) and tri(c, d, x) for x in xs):
        assert abs(s - (1.0 if tf == tg else 0.0)) < 1e-12


def test_polvector_validation():
    with pytest.raises(ValueError):
        PolVector((1, 1, 0))
    with pytest.raises(ValueError):
        PolVector((0, 0, 0), normalize=True)
    u = PolVector((0, 0.98, 0.20j), normalize=True)
    assert np.linalg.norm(u.array) == pytest.approx(1.0, abs=1e-15)
    assert not u.is_real()
    assert PolVector(np.exp(0.3j) * np.array([0, 0, 1.0])).is_real()


def test_spherical_components_reconstruct_vector():
    # covariant components u_q = e_q . u with u = sum_q (-1)^q u_q e_{-q}
    s2 = math.sqrt(2)
    e = {1: -np.array([1, 1j, 0]) / s2, 0: np.array([0, 0, 1.0]), -1: np.array([1, -1j, 0]) / s2}
    u = PolVector((0.3, 0.5j, -0.2 + 0.1j), normalize=True)
    sp = spherical_components(u)
    rebuilt = sum((-1) ** q * sp[q] * e[-q] for q in (-1, 0, 1))
    assert np.allclose(rebuilt, u.array, atol=1e-15)
    # sigma+ light (x + i y)/sqrt(2) = -e_{+1} has a single component, at q = -1
    sp = spherical_components(PolVector((1 / s2, 1j / s2, 0)))
    assert abs(sp[-1]) == pytest.approx(1.0)
    assert abs(sp[1]) < 1e-15 and abs(sp[0]) < 1e-15


unit_vec = st.tuples(*[st.floats(-1, 1) for _ in range(6)]).filter(lambda t: sum(x * x for x in t) > 1e-3)


def _pol(t):
    return PolVector(np.array(t[:3]) + 1j * np.array(t[3:]), normalize=True)


@given(unit_vec)
def test_compound_tensor_scalar_part_is_constant(t):
    assert compound_tensor(_pol(t), 0, 0) == pytest.approx(-1 / math.sqrt(3), abs=1e-12)


@given(unit_vec)
def test_compound_tensor_hermiticity(t):
    # {u* x u}_{K,-q} = (-1)^q conj({u* x u}_{K,q}): the Stark operator it builds is Hermitian
    u = _pol(t)
    for K in (1, 2):
        for q in range(-K, K + 1):
            lhs = compound_tensor(u, K, -q)
            rhs = (-1) ** q * np.conj(compound_tensor(u, K, q))
            assert abs(lhs - rhs) < 1e-12


@given(st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(lambda t: sum(x * x for x in t) > 1e-3))
def test_vector_part_vanishes_for_linear_polarization(t):
    u = PolVector(np.array(t, dtype=complex), normalize=True)
    for q in (-1, 0, 1):
        assert abs(compound_tensor(u, 1, q)) < 1e-13


@given(unit_vec, st.integers(0, 2**31 - 1))
def test_compound_tensor_norm_is_rotation_invariant(t, seed):
    u = _pol(t)
    R = Rotation.random(random_state=seed).as_matrix()
    v = PolVector(R @ u.array)
    for K in (0, 1, 2):
        n_u = sum(abs(compound_tensor(u, K, q)) ** 2 for q in range(-K, K + 1))
        n_v = sum(abs(compound_tensor(v, K, q)) ** 2 for q in range(-K, K + 1))
        assert n_v == pytest.approx(n_u, abs=1e-12)


def test_elliptical_vector_has_vector_part():
    u = PolVector((0, 0.98, 0.20j), normalize=True)
    assert max(abs(compound_tensor(u, 1, q)) for q in (-1, 0, 1)) > 0.1
    # the vector part points along x, so it has no q = 0 component for a z quantization axis
    assert abs(compound_tensor(u, 1, 0)) < 1e-15


def test_invalid_rank_raises():
    u = PolVector.linear("z")
    with pytest.raises(ValueError):
        compound_tensor(u, 3, 0)
    with pytest.raises(ValueError):
        compound_tensor(u, 1, 2)
