import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otfsidet.ehmodel import (
    EHCircuit,
    PsiTerms,
    i_out,
    i_out_direct,
    psi_terms,
    psi_ye2,
    psi_ye4,
    psi_yd2,
    psi_yd4,
    quad_sum,
    quadruple_set,
)

C = EHCircuit(0.0034, 0.3859, 50.0)


def test_quadratic_examples():
    one = np.ones((1, 1))
    assert psi_yd2(2 * one, one, 0.0) == pytest.approx(2.0)
    assert psi_yd2(2 * one, one, 0.01) == pytest.approx(2.02)
    assert psi_ye2(one, 3 * one, 0.0) == pytest.approx(4.5)
    assert psi_ye2(np.zeros((3, 3)), np.ones((3, 3)), 0.1) == 0


def test_quadruple_set_sizes():
    assert quadruple_set(1) == ((0, 0, 0, 0),)
    assert len(quadruple_set(2)) == 6
    assert len(quadruple_set(12)) == 1156
    brute = [q for q in itertools.product(range(5), repeat=4) if q[0] + q[1] == q[2] + q[3]]
    assert list(quadruple_set(5)) == sorted(brute)
    with pytest.raises(ValueError):
        quadruple_set(0)


def test_quartic_examples():
    one = np.ones((1, 1))
    assert psi_ye4(one, one, 0.0) == pytest.approx(0.375)
    assert psi_ye4(np.ones((1, 2)), np.ones((1, 2)), 0.0) == pytest.approx(2.25)
    assert psi_yd4(np.ones((1, 2)), np.ones((1, 2)), 0.0) == pytest.approx(3.0)
    assert psi_yd4(np.zeros((2, 2)), np.ones((2, 2)), 0.0) == 0


def test_quad_sum_matches_enumeration(rng):
    v = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    ref = sum(v[a] * v[b] * np.conj(v[c] * v[d]) for a, b, c, d in quadruple_set(7))
    assert abs(quad_sum(v) - ref) <= 1e-10 * abs(ref)


def test_psi_ye4_error_term_readings(rng):
    a_e = rng.random((3, 4))
    a_d = rng.random((3, 4))
    h = rng.random((3, 4))
    s = 0.2
    base = psi_ye4(a_e, h, 0.0)
    fixed = psi_ye4(a_e, h, s)
    literal = psi_ye4(a_e, h, s, literal=True, a_d=a_d)
    err = lambda x: 0.375 * sum(np.sum(quad_sum(row)) for row in x * s)
    assert fixed == pytest.approx(base + err(a_e), rel=1e-12)
    assert literal == pytest.approx(base + err(a_d), rel=1e-12)
    with pytest.raises(ValueError):
        psi_ye4(a_e, h, s, literal=True)


def test_i_out_examples():
    assert i_out(PsiTerms(0, 0, 0, 0), 0.7, C) == 0
    assert i_out(PsiTerms(0.0, 0.5, 0.0, 0.375), 1.0, C) == pytest.approx(361.86625, rel=1e-12)
    assert i_out(PsiTerms(1, 2, 3, 4), 0.0, C) == 0
    with pytest.raises(ValueError):
        i_out(PsiTerms(1, 1, 1, 1), 1.5, C)


def test_shape_and_sign_checks():
    with pytest.raises(ValueError):
        psi_yd2(np.ones((2, 2)), np.ones((2, 3)), 0.0)
    with pytest.raises(ValueError):
        psi_ye2(-np.ones((2, 2)), np.ones((2, 2)), 0.0)
    with pytest.raises(ValueError):
        EHCircuit(0.0, 1.0, 1.0)


amps = arrays(float, (3, 4), elements=st.floats(0.0, 2.0))


@given(amps, amps, st.floats(0.0, 0.1), st.floats(0.01, 1.0), st.floats(0.1, 3.0))
def test_scaling_law(a_d, a_e, s2, rho, c):
    h = np.linspace(0.2, 1.5, 12).reshape(3, 4)
    p = psi_terms(a_d, a_e, h, s2)
    q = psi_terms(c * a_d, c * a_e, h, s2)
    assert q.psi_yd2 == pytest.approx(c**2 * p.psi_yd2, rel=1e-10, abs=1e-300)
    assert q.psi_ye2 == pytest.approx(c**2 * p.psi_ye2, rel=1e-10, abs=1e-300)
    assert q.psi_yd4 == pytest.approx(c**4 * p.psi_yd4, rel=1e-10, abs=1e-300)
    assert q.psi_ye4 == pytest.approx(c**4 * p.psi_ye4, rel=1e-10, abs=1e-300)


@given(amps, amps, st.floats(0.0, 0.1), st.floats(0.0, 0.9), st.integers(0, 11), st.floats(0.0, 1.0))
def test_monotone_in_rho_and_amplitudes(a_d, a_e, s2, rho, idx, bump):
    h = np.linspace(0.2, 1.5, 12).reshape(3, 4)
    base = i_out_direct(a_d, a_e, h, s2, rho, C)
    assert i_out_direct(a_d, a_e, h, s2, min(1.0, rho + 0.1), C) >= base
    d2, e2 = a_d.copy(), a_e.copy()
    d2.flat[idx] += bump
    e2.flat[idx] += bump
    tol = 1e-12 * max(base, 1e-300)
    assert i_out_direct(d2, a_e, h, s2, rho, C) >= base - tol
    assert i_out_direct(a_d, e2, h, s2, rho, C) >= base - tol


@given(arrays(float, (2, 3), elements=st.floats(-2, 2)), arrays(float, (2, 3), elements=st.floats(-2, 2)))
def test_quad_sum_real_nonnegative(re, im):
    q = quad_sum(re + 1j * im)
    assert np.all(q >= -1e-12)
