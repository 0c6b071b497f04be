import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from feedbackpovm import fock
from feedbackpovm.exceptions import DimensionError, NotPSDError, ParameterError, TruncationError


def test_annihilation_small_cases():
    assert np.allclose(fock.annihilation(2), [[0, 1], [0, 0]])
    assert fock.annihilation(3)[1, 2] == pytest.approx(np.sqrt(2))


def test_number_operator_from_ladder():
    a = fock.annihilation(6)
    diag = np.diag(a.conj().T @ a).real
    assert np.allclose(diag, np.arange(6))


@pytest.mark.parametrize("dim", [1, 0, 2.5, True])
def test_bad_dimension(dim):
    with pytest.raises(DimensionError):
        fock.annihilation(dim)


def test_coherent_vacuum_and_moments():
    assert np.allclose(fock.coherent_state(0, 5), [1, 0, 0, 0, 0])
    psi = fock.coherent_state(1.0, 15)
    n = np.vdot(psi, fock.number_operator(15) @ psi).real
    assert abs(n - 1.0) < 1e-8
    alpha = 0.4 * np.exp(1j * np.pi / 4)
    assert abs(fock.coherent_state(alpha, 15)[0]) ** 2 == pytest.approx(np.exp(-0.16), abs=1e-12)


def test_coherent_tail_guard():
    with pytest.raises(TruncationError):
        fock.coherent_state(2.0, 5)


def test_displacement_matches_dense_exponential_and_closed_form():
    beta = 0.6 - 0.3j
    a = fock.annihilation(15)
    bare = expm(beta * a.conj().T - np.conj(beta) * a)
    assert np.abs(fock.displacement(beta, 15) - bare).max() < 1e-12
    big = fock.annihilation(60)
    ref = expm(beta * big.conj().T - np.conj(beta) * big)[:15, :15]
    padded = fock.displacement(beta, 15, pad=25)
    assert np.abs(padded - ref).max() < 1e-10
    assert np.abs(padded - fock.displacement_elements(beta, 15, 15)).max() < 1e-10


def test_displacement_on_vacuum_and_inverse():
    d = fock.displacement(0.5, 15)
    assert np.abs(d[:12, 0] - fock.coherent_state(0.5, 15)[:12]).max() < 1e-6
    overlap = abs(np.vdot(fock.coherent_state(0.5, 15), d[:, 0])) ** 2
    assert overlap >= 1 - 1e-8
    assert np.allclose(fock.displacement(0, 8), np.eye(8))
    prod = fock.displacement(0.7, 15) @ fock.displacement(-0.7, 15)
    interior = 15 - int(np.ceil(4 * 0.49))
    assert np.abs(prod[:interior, :interior] - np.eye(interior)).max() < 1e-6


def test_psd_sqrt_examples():
    assert np.allclose(fock.psd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(fock.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    assert np.allclose(fock.psd_sqrt(np.diag([1.0, -5e-9])), np.diag([1.0, 0.0]))
    with pytest.raises(NotPSDError):
        fock.psd_sqrt(np.diag([1.0, -1e-6]))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2 ** 32 - 1))
def test_psd_sqrt_squares_back(dim, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    a = g @ g.conj().T
    r = fock.psd_sqrt(a)
    assert np.linalg.norm(r @ r - a) < 1e-9 * max(1.0, np.linalg.norm(a))
    assert np.allclose(r, r.conj().T)
    assert np.linalg.eigvalsh(r).min() > -1e-10


@pytest.mark.parametrize("eta", [0.0, 0.25, 0.5, 1.0])
@pytest.mark.parametrize("sign", [1, -1])
def test_loss_on_superposition_states(eta, sign):
    rho = fock.ket2dm(fock.superposition_state(sign, 2))
    c = sign * np.sqrt(eta)
    expected = 0.5 * np.array([[2 - eta, c], [c, eta]])
    assert np.abs(fock.apply_loss(rho, eta) - expected).max() < 1e-12


def test_loss_matches_elementwise_formula():
    from scipy.special import comb
    rng = np.random.default_rng(3)
    d, eta = 5, 0.37
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    ref = np.zeros_like(rho)
    for m in range(d):
        for n in range(d):
            for k in range(d - max(m, n)):
                ref[m, n] += (np.sqrt(comb(m + k, k) * comb(n + k, k))
                              * eta ** ((m + n) / 2) * (1 - eta) ** k * rho[m + k, n + k])
    assert np.abs(fock.apply_loss(rho, eta) - ref).max() < 1e-13


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(np.round(np.linspace(0, 1, 11), 1).tolist()), st.integers(0, 10 ** 6))
def test_loss_is_trace_preserving_and_positive(eta, seed):
    rng = np.random.default_rng(seed)
    d = 6
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    out = fock.apply_loss(rho, eta)
    assert abs(np.trace(out).real - 1) < 1e-10
    assert np.linalg.eigvalsh(out).min() > -1e-10


def test_loss_adjoint_is_dual():
    rng = np.random.default_rng(1)
    d = 8
    rho = fock.ket2dm(fock.coherent_state(0.3 + 0.2j, d))
    op = rng.normal(size=(d, d))
    op = op + op.T
    lhs = np.trace(fock.apply_loss(rho, 0.6) @ op)
    rhs = np.trace(rho @ fock.apply_loss_adjoint(op, 0.6))
    assert abs(lhs - rhs) < 1e-12


def test_loss_rejects_bad_transmittance():
    with pytest.raises(ParameterError):
        fock.apply_loss(np.eye(2) / 2, 1.2)
