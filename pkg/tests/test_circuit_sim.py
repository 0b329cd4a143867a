import json

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st
from scipy import stats

from conftest import crandn
from tnqc.circuit import (
    Gate,
    QuantumCircuit,
    circuit_from_dict,
    circuit_from_unitary_mpo,
    circuit_to_dict,
    complete_isometry,
    mps_prep_circuit,
)
from tnqc.fit import UnitaryMPO, init_unitary_mpo
from tnqc.mpo_zoo import diag_linear_mpo, identity_mpo
from tnqc.simulator import (
    BASIS_ROTATIONS,
    Statevector,
    apply_gate,
    avg_success_prob,
    basis_state,
    circuit_to_matrix,
    exact_success_prob,
    haar_random_state,
    read_samples_csv,
    run_postselected,
    sample_measurements,
    spectral_success_prob,
    write_samples_csv,
)
from tnqc.stiefel import isometry_defect
from tnqc.tomography import ghz_state
from tnqc.tt import DenseGuardError, scalar_mul, to_dense_matrix, to_dense_vector, tt_svd_vector

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])


def random_unitary_mpo(n, R, seed):
    return init_unitary_mpo(diag_linear_mpo(n), R, "random_haar", seed)


@given(st.integers(1, 6), st.sampled_from([1, 2, 4, 8]), st.integers(0, 1000))
def test_block_equals_mpo(n, R, seed):
    a = random_unitary_mpo(n, R, seed)
    circ = circuit_from_unitary_mpo(a, seed=seed)
    assert np.abs(circuit_to_matrix(circ) - to_dense_matrix(a.mpo)).max() <= 1e-10
    assert circ.n_ancilla == (0 if R == 1 else int(np.log2(R)))
    assert all(len(g.wires) == circ.n_ancilla + 1 for g in circ.gates)


def test_identity_circuit_is_exact():
    circ = circuit_from_unitary_mpo(UnitaryMPO(identity_mpo(4), 1.0, 1))
    assert np.array_equal(circuit_to_matrix(circ), np.eye(16))


def test_block_independent_of_completion_seed():
    a = random_unitary_mpo(4, 4, 0)
    m1 = circuit_to_matrix(circuit_from_unitary_mpo(a, seed=1))
    m2 = circuit_to_matrix(circuit_from_unitary_mpo(a, seed=2))
    assert np.allclose(m1, m2, atol=1e-12)


@given(st.integers(1, 7), st.integers(0, 1000))
@example(1, 198)  # completion draw nearly parallel to the state
def test_mps_prep_fidelity(n, seed):
    rng = np.random.default_rng(seed)
    v = crandn(rng, 2**n)
    x = tt_svd_vector(v / np.linalg.norm(v))
    circ = mps_prep_circuit(x, seed=seed)
    res = run_postselected(circ, basis_state("0" * n))
    f = abs(np.vdot(to_dense_vector(x), res.output.amplitudes)) ** 2
    assert f >= 1 - 1e-10
    assert res.success_prob == pytest.approx(1.0, abs=1e-10)


def test_mps_prep_ghz():
    circ = mps_prep_circuit(ghz_state(5))
    out = run_postselected(circ, basis_state("00000")).output.amplitudes
    assert abs(out[0]) ** 2 == pytest.approx(0.5)
    assert abs(out[-1]) ** 2 == pytest.approx(0.5)


def test_mps_prep_rejects_unnormalized():
    with pytest.raises(ValueError):
        mps_prep_circuit(scalar_mul(2.0, ghz_state(3)))


def test_complete_isometry(rng):
    q, _ = np.linalg.qr(crandn(rng, 8, 3))
    u = complete_isometry(q, seed=4)
    assert np.allclose(u[:, :3], q)
    assert isometry_defect(u) < 1e-12
    with pytest.raises(ValueError):
        complete_isometry(crandn(rng, 8, 3))


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate(np.ones((2, 2)), (0,))
    with pytest.raises(ValueError):
        Gate(np.eye(4), (0, 0))
    with pytest.raises(ValueError):
        Gate(np.eye(4), (0,))


def test_circuit_validation():
    with pytest.raises(ValueError):
        QuantumCircuit(2, 1, (Gate(np.eye(2), (5,)),), (0,), (2,))
    with pytest.raises(ValueError):
        QuantumCircuit(2, 1, (), (0,), (0,))


def test_bell_state():
    s = basis_state("00")
    s = apply_gate(s, Gate(H, (0,)))
    s = apply_gate(s, Gate(CNOT, (0, 1)))
    assert np.allclose(s.amplitudes, np.array([1, 0, 0, 1]) / np.sqrt(2))


def test_gate_on_reversed_wires():
    # CNOT with control on wire 1
    s = apply_gate(basis_state("01"), Gate(CNOT, (1, 0)))
    assert np.allclose(s.amplitudes, basis_state("11").amplitudes)


def test_success_probability_paths_agree():
    a = random_unitary_mpo(4, 4, 7)
    circ = circuit_from_unitary_mpo(a)
    psi = haar_random_state(4, 3)
    exact = exact_success_prob(a, tt_svd_vector(psi.amplitudes))
    assert run_postselected(circ, psi).success_prob == pytest.approx(exact, abs=1e-12)
    assert spectral_success_prob(a, psi).success_prob == pytest.approx(exact, abs=1e-12)
    expect_out = to_dense_matrix(a.mpo) @ psi.amplitudes
    out = run_postselected(circ, psi).output.amplitudes
    assert np.allclose(out, expect_out / np.linalg.norm(expect_out))


def test_avg_success_is_haar_mean():
    a = random_unitary_mpo(3, 2, 1)
    d = to_dense_matrix(a.mpo)
    vals = [np.linalg.norm(d @ haar_random_state(3, s).amplitudes) ** 2 for s in range(4000)]
    se = np.std(vals) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - avg_success_prob(a)) <= 3 * se


def test_avg_success_large_n_finite():
    a = UnitaryMPO(identity_mpo(60), 1.0, 1)
    assert avg_success_prob(a) == pytest.approx(1.0)


def test_sampled_acceptance_binomial():
    a = random_unitary_mpo(3, 4, 2)
    circ = circuit_from_unitary_mpo(a)
    psi = haar_random_state(3, 0)
    res = run_postselected(circ, psi, shots=10_000, seed=11)
    p = res.success_prob
    assert abs(res.acceptance_rate - p) <= 3 * np.sqrt(p * (1 - p) / 10_000)
    with pytest.raises(ValueError):
        run_postselected(circ, psi, shots=10)


def test_born_rule_chi_square():
    psi = haar_random_state(3, 5)
    for basis in ("ZZZ", "XYZ"):
        from tnqc.simulator import _rotate

        probs = np.abs(_rotate(psi, basis)) ** 2
        outs = sample_measurements(psi, basis, 20_000, seed=2)
        counts = np.bincount([int(o, 2) for o in outs], minlength=8)
        assert stats.chisquare(counts, probs * 20_000).pvalue > 1e-3


def test_basis_conventions():
    plus = Statevector(1, np.array([1, 1]) / np.sqrt(2))
    plus_i = Statevector(1, np.array([1, 1j]) / np.sqrt(2))
    assert set(sample_measurements(plus, "X", 50, 0)) == {"0"}
    assert set(sample_measurements(plus_i, "Y", 50, 0)) == {"0"}
    for u in BASIS_ROTATIONS.values():
        assert isometry_defect(u) < 1e-12
    with pytest.raises(ValueError):
        sample_measurements(plus, "Q", 1, 0)


def test_statevector_from_tt():
    s = Statevector.from_tt(ghz_state(3))
    assert s.is_normalized
    assert s.amplitudes[0] == pytest.approx(2**-0.5)


def test_serialization_roundtrip(tmp_path):
    circ = circuit_from_unitary_mpo(random_unitary_mpo(3, 4, 0))
    d = json.loads(json.dumps(circuit_to_dict(circ)))
    back = circuit_from_dict(d)
    assert back.postselect_wires == circ.postselect_wires
    assert np.array_equal(circuit_to_matrix(back), circuit_to_matrix(circ))
    rows = [("ZX", "01"), ("YY", "10")]
    write_samples_csv(tmp_path / "s.csv", rows)
    assert read_samples_csv(tmp_path / "s.csv") == rows


def test_guards():
    with pytest.raises(DenseGuardError):
        circuit_to_matrix(circuit_from_unitary_mpo(UnitaryMPO(identity_mpo(10), 1.0, 1)))


def test_mct_circuit_flips_target():
    from tnqc.fit import FitOptions, fit_unitary_mpo
    from tnqc.mpo_zoo import mct_mpo

    a, rep = fit_unitary_mpo(mct_mpo(4), FitOptions(R=4, max_iters=300, polish_iters=1000))
    res = run_postselected(circuit_from_unitary_mpo(a), basis_state("1111"))
    assert abs(res.output.amplitudes[0b1110]) ** 2 >= 1 - 1e-8
    # post-selection succeeds with ||A psi||^2 = 1 / c^2, not 1 (the block is M / c)
    assert res.success_prob == pytest.approx(1 / a.c**2, rel=1e-6)


def test_identity_circuit_run():
    circ = circuit_from_unitary_mpo(UnitaryMPO(identity_mpo(3), 1.0, 1))
    psi = haar_random_state(3, 0)
    res = run_postselected(circ, psi)
    assert res.success_prob == pytest.approx(1.0)
    assert np.allclose(res.output.amplitudes, psi.amplitudes)
