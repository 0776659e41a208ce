import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonforge import fock


def laguerre_element(m, n, beta):
    """⟨m|D(β)|n⟩ from the generalised Laguerre closed form, in extended precision."""
    beta = mpmath.mpc(beta.real, beta.imag)
    x = abs(beta) ** 2
    if m >= n:
        k = m - n
        val = mpmath.sqrt(mpmath.factorial(n) / mpmath.factorial(m)) * beta**k * mpmath.laguerre(n, k, x)
    else:
        k = n - m
        val = mpmath.sqrt(mpmath.factorial(m) / mpmath.factorial(n)) * (-mpmath.conj(beta)) ** k * mpmath.laguerre(m, k, x)
    return complex(val * mpmath.exp(-x / 2))


def test_annihilation_on_vacuum():
    a = fock.annihilation(10)
    assert np.allclose(a @ fock.fock_state(0, 10), 0)


def test_ladder_elements():
    a = fock.annihilation(8)
    for n in range(1, 8):
        assert a[n - 1, n] == pytest.approx(np.sqrt(n))


def test_commutator_away_from_cutoff():
    n = 20
    a = fock.annihilation(n)
    c = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(c[:-1, :-1], np.eye(n - 1))


def test_bad_dimension():
    with pytest.raises(ValueError):
        fock.FockSpace(1)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.integers(0, 24),
    st.integers(0, 24),
)
def test_displacement_elements_match_laguerre(re, im, m, n):
    beta = complex(re, im)
    got = fock.displacement_elements(beta, 25)[m, n]
    assert abs(got - laguerre_element(m, n, beta)) < 1e-8


def test_displacement_stack_large_argument_is_finite():
    d = fock.displacement_stack([12.0 + 5j], 60)
    assert np.all(np.isfinite(d))
    assert abs(d[0, 3, 7] - laguerre_element(3, 7, 12.0 + 5j)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_displacement_composition_law(a1, a2, b1, b2):
    alpha, beta = complex(a1, a2), complex(b1, b2)
    n = 40
    lhs = fock.displacement_elements(alpha, n + 40) @ fock.displacement_elements(beta, n + 40)
    phase = np.exp((alpha * np.conj(beta) - np.conj(alpha) * beta) / 2)
    rhs = phase * fock.displacement_elements(alpha + beta, n)
    assert np.max(np.abs(lhs[:10, :10] - rhs[:10, :10])) < 1e-6


def test_truncated_displacement_is_unitary_and_warns():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        d = fock.displacement(3.0, 20)
    assert any(issubclass(w.category, fock.TruncationWarning) for w in rec)
    assert np.allclose(d @ d.conj().T, np.eye(20), atol=1e-10)


def test_coherent_state_overlap():
    psi = fock.coherent_state(0.7 + 0.2j, 40)
    assert abs(psi[0]) ** 2 == pytest.approx(np.exp(-abs(0.7 + 0.2j) ** 2), rel=1e-10)


def test_squeeze_variance():
    r = 0.6
    psi = fock.squeeze(r, 80) @ fock.fock_state(0, 80)
    x = fock.position(80)
    var = np.real(np.vdot(psi, x @ x @ psi))
    assert var == pytest.approx(np.exp(-2 * r) / 2, rel=1e-8)


def test_embed_and_partial_trace():
    psi = fock.hybrid_state(fock.DOWN, fock.fock_state(2, 5))
    rho = fock.partial_trace_qubit(psi)
    assert rho[2, 2] == pytest.approx(1.0)
    with pytest.raises(fock.DimensionMismatch):
        fock.embed_hybrid(np.eye(3), np.eye(4))


def test_state_fidelity_and_dims():
    psi = fock.fock_state(1, 6)
    assert fock.state_fidelity(fock.ket_to_dm(psi), psi) == pytest.approx(1.0)
    with pytest.raises(fock.DimensionMismatch):
        fock.state_fidelity(psi, fock.fock_state(1, 7))


def test_pad_and_truncate():
    psi = fock.coherent_state(1.0, 30)
    cut, tail = fock.truncate_state(psi, 10)
    assert np.linalg.norm(cut) == pytest.approx(1.0)
    assert 0 < tail < 1e-3
    assert fock.pad_state(cut, 12).shape == (12,)
    with pytest.raises(fock.DimensionMismatch):
        fock.pad_state(cut, 5)
