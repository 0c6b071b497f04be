import numpy as np
import pytest
from sklearn.base import clone

from feedbackpovm.exceptions import DataInconsistencyError, DimensionError
from feedbackpovm.povm import PovmSet
from feedbackpovm.receiver import (TOMOGRAPHY_M2_SCHEDULE, StageSchedule,
                                   error_probability, povm_elements)
from feedbackpovm.tomography import (CountDataset, MLDetectorTomography, ProbeSet,
                                     error_from_povm, generate_dataset, ml_reconstruct,
                                     truncate_povm)

M1 = StageSchedule.fixed([1.0], [0.7])


@pytest.fixture(scope="module")
def probes():
    return ProbeSet.default(5)


def test_default_probe_set(probes):
    assert len(probes) == 33
    assert probes.alphas[0] == 0
    assert np.allclose(sorted(set(np.round(np.abs(probes.alphas), 6))), [0, 0.4, 0.6, 0.8, 1.0])
    rep = probes.report()
    # Im<0|Pi|4> is invisible to eight equally spaced phases
    assert rep["rank"] == 24 and rep["null_directions"] == 1
    assert rep["max_tail_mass"] == pytest.approx(probes.tail_mass[-1])
    assert np.allclose(np.trace(probes.states, axis1=1, axis2=2), 1)


def test_exact_dataset(probes):
    ds = generate_dataset(TOMOGRAPHY_M2_SCHEDULE, probes=probes, shots=10_000)
    assert ds.counts.shape == (33, 4)
    assert np.allclose(ds.counts.sum(axis=1), 10_000, rtol=0, atol=1e-9 * 10_000)
    grouped = generate_dataset(TOMOGRAPHY_M2_SCHEDULE, probes=probes, grouping="parity")
    assert grouped.labels == ("even", "odd")
    assert np.allclose(grouped.counts, ds.parity_grouped().counts)


def test_sampled_dataset_binomial_bound(probes):
    n = 10 ** 6
    exact = generate_dataset(M1, probes=probes, shots=1)
    sampled = generate_dataset(M1, probes=probes, mode="sampled", shots=n, seed=4)
    p = exact.counts
    bound = 5 * np.sqrt(p * (1 - p) / n) + 1e-12
    assert np.all(np.abs(sampled.counts / n - p) < bound)
    again = generate_dataset(M1, probes=probes, mode="sampled", shots=n, seed=4)
    assert np.array_equal(sampled.counts, again.counts)


def test_uniform_data_is_a_fixed_point(probes):
    ds = CountDataset(np.full((33, 4), 250.0), ("a", "b", "c", "d"), 1000)
    rec = ml_reconstruct(ds, probes, max_iter=50)
    assert np.abs(rec.povm.elements - np.eye(5) / 4).max() < 1e-12


def test_single_stage_recovery_to_tolerance(probes):
    ds = generate_dataset(M1, probes=probes)
    completeness = []
    rec = ml_reconstruct(ds, probes, tol=0.0, max_iter=25_000,
                         callback=lambda it, pis, ll: completeness.append(
                             np.abs(pis.sum(axis=0) - np.eye(5)).max()))
    truth = povm_elements(M1, None, 5)
    err = max(np.linalg.norm(a - b) for a, b in zip(rec.povm.elements, truth.elements))
    assert err < 1e-4
    assert max(completeness) < 1e-8
    assert np.all(np.diff(rec.loglik) >= -1e-10 * abs(rec.loglik[-1]))


def test_default_stopping_rule_and_error_agreement(probes):
    ds = generate_dataset(TOMOGRAPHY_M2_SCHEDULE, probes=probes)
    rec = ml_reconstruct(ds, probes)
    assert rec.converged and rec.n_iter < 50_000
    assert error_from_povm(rec.povm) == pytest.approx(
        error_probability(TOMOGRAPHY_M2_SCHEDULE), abs=1e-3)
    assert rec.povm.min_eigenvalue() > -1e-10


def test_permutation_equivariance(probes):
    ds = generate_dataset(TOMOGRAPHY_M2_SCHEDULE, probes=probes, mode="sampled", seed=2)
    order = [2, 0, 3, 1]
    a = ml_reconstruct(ds, probes, max_iter=400)
    b = ml_reconstruct(ds.permuted(order), probes, max_iter=400)
    assert b.povm.labels == tuple(a.povm.labels[i] for i in order)
    assert np.abs(b.povm.elements - a.povm.elements[order]).max() < 1e-10


def test_inconsistent_data_raises(probes):
    ds = generate_dataset(M1, probes=probes)
    init = np.stack([np.eye(5), np.zeros((5, 5))])
    with pytest.raises(DataInconsistencyError):
        ml_reconstruct(ds, probes, init=init)
    with pytest.raises(DimensionError):
        ml_reconstruct(ds, ProbeSet(probes.alphas[:10], 5))


def test_truncation_and_error_from_povm():
    eye = PovmSet(np.stack([np.eye(5), np.zeros((5, 5))]), ("even", "odd"))
    small = truncate_povm(eye)
    assert np.allclose(small["even"], np.eye(2)) and small.completeness_residual() == 0
    plus = 0.5 * np.array([[1, 1], [1, 1]])
    minus = 0.5 * np.array([[1, -1], [-1, 1]])
    ideal = PovmSet(np.stack([plus, minus]), ("even", "odd"))
    assert error_from_povm(ideal) == pytest.approx(0.0, abs=1e-15)
    full = povm_elements(TOMOGRAPHY_M2_SCHEDULE, None, 5)
    assert error_from_povm(full) == pytest.approx(error_probability(TOMOGRAPHY_M2_SCHEDULE))


def test_finite_shot_repetitions(probes):
    pes = []
    for seed in range(3):
        ds = generate_dataset(TOMOGRAPHY_M2_SCHEDULE, probes=probes, mode="sampled",
                              shots=10_000, seed=seed)
        pes.append(error_from_povm(ml_reconstruct(ds, probes, max_iter=2000).povm))
    assert 0 < np.std(pes) < 0.01
    assert abs(np.mean(pes) - error_probability(TOMOGRAPHY_M2_SCHEDULE)) < 0.01


def test_estimator_interface(probes):
    ds = generate_dataset(M1, probes=probes, mode="sampled", seed=1)
    est = MLDetectorTomography(max_iter=300)
    assert clone(est).get_params()["max_iter"] == 300
    est.fit(ds)
    proba = est.predict_proba([0.0, 0.5j])
    assert proba.shape == (2, 2) and np.allclose(proba.sum(axis=1), 1)
    assert est.predict([0.0])[0] == "off" or est.predict([0.0])[0] == "on"
    assert est.n_iter_ == 300 and est.loglik_ == est.loglik_trace_[-1]
    assert est.score(ds) < 0
    from_array = MLDetectorTomography(max_iter=300).fit(ds.counts, ds.labels)
    assert np.allclose(from_array.povm_.elements, est.povm_.elements)
