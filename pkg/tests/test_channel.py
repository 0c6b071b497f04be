import numpy as np
import pytest
from scipy.linalg import expm

from feedbackpovm import fock
from feedbackpovm.channel import (IDEAL, ImperfectionParams, StageParams, coherent_click_mean,
                                  kraus_n, kraus_zero, on_map_kraus_sum, single_stage_error,
                                  stage_map, two_mode_off_probability)
from feedbackpovm.exceptions import ParameterError


def closed_form_k0(beta, r, dim):
    # exp(-|b|^2/2) exp(-a b^* r/t) t^(a^dag a), valid for r < 1
    t = np.sqrt(1 - r * r)
    a = fock.annihilation(dim)
    return (np.exp(-abs(beta) ** 2 / 2) * expm(-a * np.conj(beta) * r / t)
            @ np.diag(t ** np.arange(dim)))


@pytest.mark.parametrize("beta,r2", [(0.7, 0.336), (-0.4 + 0.2j, 0.5), (0.3j, 0.1)])
def test_kraus_zero_matches_exponential_form(beta, r2):
    stage = StageParams(beta, np.sqrt(r2))
    assert np.abs(kraus_zero(stage, 12) - closed_form_k0(beta, np.sqrt(r2), 12)).max() < 1e-12


def test_kraus_n_matches_ladder_form():
    beta, r = 0.5 - 0.1j, np.sqrt(0.3)
    t = np.sqrt(1 - r * r)
    dim = 12
    a = fock.annihilation(dim)
    k0 = closed_form_k0(beta, r, dim)
    stage = StageParams(beta, r)
    from math import factorial
    for n in (1, 2, 3):
        ladder = np.linalg.matrix_power(beta * np.eye(dim) + a * r / t, n) @ k0 / np.sqrt(factorial(n))
        assert np.abs(kraus_n(stage, n, dim) - ladder).max() < 1e-12


def test_kraus_zero_limits():
    assert np.allclose(kraus_zero(StageParams(0, 1e-9), 6), np.eye(6), atol=1e-12)
    # full measurement: K0 = |0><-beta|
    beta = 0.6
    k0 = kraus_zero(StageParams(beta, 1.0), 15)
    expected = np.zeros((15, 15), dtype=complex)
    expected[0] = fock.coherent_amplitudes(-beta, 15).conj()
    assert np.abs(k0 - expected).max() < 1e-12


@pytest.mark.parametrize("r2", [0.2, 0.336, 1.0])
def test_kraus_zero_on_vacuum(r2):
    beta = 0.643
    vac = np.zeros(15)
    vac[0] = 1
    out = kraus_zero(StageParams(beta, np.sqrt(r2)), 15) @ vac
    assert np.allclose(out, np.exp(-beta ** 2 / 2) * vac)


def test_kraus_completeness_interior():
    stage = StageParams(0.7, np.sqrt(0.336))
    dim = 15
    total = sum(kraus_n(stage, n, dim).conj().T @ kraus_n(stage, n, dim) for n in range(21))
    assert np.abs(total[:10, :10] - np.eye(10)).max() < 1e-8


def test_on_probability_of_vacuum():
    rho = np.zeros((15, 15))
    rho[0, 0] = 1
    _, p_on = stage_map(rho, StageParams(0.643, np.sqrt(0.3)), "on")
    assert p_on == pytest.approx(1 - np.exp(-0.643 ** 2), abs=1e-12)
    _, p_off = stage_map(rho, StageParams(0.0, np.sqrt(0.3)), "off")
    assert p_off == pytest.approx(1.0, abs=1e-14)


def test_click_branch_equals_truncated_kraus_sum():
    rng = np.random.default_rng(4)
    dim = 8
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    stage = StageParams(0.8 - 0.3j, np.sqrt(0.4))
    on, _ = stage_map(rho, stage, "on")
    assert np.abs(on - on_map_kraus_sum(rho, stage)).max() < 1e-12


@pytest.mark.parametrize("imp", [IDEAL, ImperfectionParams(0.6, 0.95, 0.01),
                                 ImperfectionParams(0.5, 0.98, 0.002, calibrated=True)])
def test_branches_sum_to_one(imp):
    rng = np.random.default_rng(11)
    dim = 10
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    stage = StageParams(-0.5, np.sqrt(0.45), weight=0.45)
    (off, p_off), (on, p_on) = stage_map(rho, stage, "off", imp), stage_map(rho, stage, "on", imp)
    assert p_off + p_on == pytest.approx(1.0, abs=1e-10)
    for op in (off, on):
        assert np.linalg.eigvalsh(0.5 * (op + op.conj().T)).min() > -1e-12


def test_single_stage_parity_error():
    dim = 15
    beta = -1 / np.sqrt(2)
    stage = StageParams(beta, 1.0)
    plus = fock.ket2dm(fock.superposition_state(1, dim))
    minus = fock.ket2dm(fock.superposition_state(-1, dim))
    pe = 0.5 * (stage_map(minus, stage, "off")[1] + stage_map(plus, stage, "on")[1])
    assert pe == pytest.approx(0.5 - np.exp(-0.5) / np.sqrt(2), abs=1e-12)
    assert pe == pytest.approx(0.0711, abs=1e-4)


def test_closed_form_single_stage_against_operator_models():
    dim = 15
    plus = fock.ket2dm(fock.superposition_state(1, dim))
    minus = fock.ket2dm(fock.superposition_state(-1, dim))
    for eta, xi, nu, beta in [(0.5, 0.98, 2.38e-3, -0.6), (0.9, 0.9, 0.01, -0.3), (1, 1, 0, -0.8)]:
        imp = ImperfectionParams(eta, xi, nu)
        closed = single_stage_error(eta, xi, nu, beta)
        stage = StageParams(beta, 1.0)
        cascade = 0.5 * (stage_map(minus, stage, "off", imp)[1] + stage_map(plus, stage, "on", imp)[1])
        two_mode = 0.5 * (two_mode_off_probability(minus, beta, imp)
                          + 1 - two_mode_off_probability(plus, beta, imp))
        assert cascade == pytest.approx(closed, abs=1e-12)
        assert two_mode == pytest.approx(closed, abs=1e-10)


def test_coherent_click_mean_examples():
    assert coherent_click_mean(0, 0, IDEAL, 0) == 0
    assert coherent_click_mean(0.3 + 0.1j, -0.5, IDEAL) == pytest.approx(abs(0.3 + 0.1j - 0.5) ** 2)
    imp = ImperfectionParams(1.0, 0.98, 0.0)
    assert coherent_click_mean(0.5, -0.5, imp) == pytest.approx(0.01, abs=1e-15)


@pytest.mark.parametrize("eta,xi,nu", [(1, 0.98, 0), (0.7, 0.9, 0.003), (0.4, 1.0, 0.01)])
@pytest.mark.parametrize("s,beta", [(0.5, -0.5), (0.3j, 0.4), (-0.2 + 0.4j, 0.7 - 0.1j)])
def test_click_mean_matches_two_mode_model(eta, xi, nu, s, beta):
    imp = ImperfectionParams(eta, xi, nu)
    rho = fock.ket2dm(fock.coherent_state(s, 15))
    expected = np.exp(-coherent_click_mean(s, beta, imp, nu))
    assert two_mode_off_probability(rho, beta, imp) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("r2", [0.2, 0.6])
def test_partial_stage_matches_click_mean(r2):
    # a coherent input sends amplitude r*alpha to the detector
    imp = ImperfectionParams(0.8, 0.95, 0.004)
    alpha, beta, w = 0.6 - 0.2j, -0.45, r2
    rho = fock.ket2dm(fock.coherent_state(alpha, 15))
    _, p_off = stage_map(rho, StageParams(beta, np.sqrt(r2), weight=w), "off", imp)
    m = coherent_click_mean(np.sqrt(r2) * alpha, beta, imp, imp.dark_rate * w)
    assert p_off == pytest.approx(np.exp(-m), abs=1e-12)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        StageParams(0.1, 0.0)
    with pytest.raises(ParameterError):
        ImperfectionParams(efficiency=1.5)
    with pytest.raises(ParameterError):
        ImperfectionParams(dark_rate=-1)
    with pytest.raises(ParameterError):
        ImperfectionParams.from_dict({"efficiency": 1.0, "gain": 2})
    with pytest.raises(ParameterError):
        kraus_n(StageParams(0.1, 0.5), -1)


def test_imperfection_round_trip():
    imp = ImperfectionParams(0.5, 0.98, 1e-3, 0.02, True)
    assert ImperfectionParams.from_dict(imp.to_dict()) == imp
    assert imp.effective_efficiency == 1.0
    assert not imp.is_ideal and IDEAL.is_ideal
