import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from tnqc.simulator import Statevector, sample_measurements
from tnqc.tomography import (
    MeasurementRecord,
    TomographyOptions,
    VQCSpec,
    fidelity,
    fit_mps,
    ghz_state,
    initial_model,
    min_records_for_fidelity,
    model_probability,
    nll_gradient,
    nll_loss,
    product_zero_state,
    read_records_csv,
    sample_records,
    vqc_dense_state,
    vqc_output_state,
    write_records_csv,
)
from tnqc.tt import TTVector, to_dense_vector, tt_svd_vector


def random_mps(rng, n, r):
    bonds = [1] + [min(r, 2 ** min(k, n - k)) for k in range(1, n)] + [1]
    return TTVector([crandn(rng, bonds[k], 2, bonds[k + 1]) for k in range(n)])


@given(st.integers(1, 6), st.integers(0, 1000))
def test_probabilities_normalized(n, seed):
    rng = np.random.default_rng(seed)
    model = random_mps(rng, n, 3)
    basis = "".join(rng.choice(list("XYZ"), size=n))
    total = sum(
        model_probability(model, MeasurementRecord(basis, "".join(o)))
        for o in itertools.product("01", repeat=n)
    )
    assert abs(total - 1) <= 1e-10


def test_probability_matches_dense_born_rule(rng):
    from tnqc.simulator import _rotate

    model = random_mps(rng, 4, 2)
    v = to_dense_vector(model)
    psi = Statevector(4, v / np.linalg.norm(v))
    probs = np.abs(_rotate(psi, "XZYX")) ** 2
    for i in range(16):
        rec = MeasurementRecord("XZYX", format(i, "04b"))
        assert model_probability(model, rec) == pytest.approx(probs[i], abs=1e-14)


@given(st.integers(2, 5), st.integers(0, 1000))
def test_gradient_matches_finite_differences(n, seed):
    rng = np.random.default_rng(seed)
    model = random_mps(rng, n, 2)
    records = sample_records(random_mps(rng, n, 2), 40, seed)
    loss, grads = nll_gradient(model, records)
    assert loss == pytest.approx(nll_loss(model, records))
    k = seed % n
    d = crandn(rng, *model.cores[k].shape)
    h = 1e-6

    def f(t):
        cores = list(model.cores)
        cores[k] = cores[k] + t * d
        return nll_loss(TTVector(cores), records)

    fd = (f(h) - f(-h)) / (2 * h)
    an = 2 * np.vdot(grads[k], d).real
    assert abs(fd - an) <= 1e-4 * max(abs(an), 1e-3)


def test_vqc_matches_dense_circuit():
    spec = VQCSpec(5, 2, seed=3)
    v = to_dense_vector(vqc_output_state(spec))
    assert abs(np.vdot(v, vqc_dense_state(spec))) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert vqc_output_state(VQCSpec(4, 0, seed=0)).max_rank == 1


def test_sampling_matches_dense_distribution():
    state = vqc_output_state(VQCSpec(3, 2, seed=1))
    recs = sample_records(state, 20_000, seed=0, basis="ZXZ")
    psi = Statevector(3, to_dense_vector(state))
    ref = sample_measurements(psi, "ZXZ", 20_000, seed=1)
    c1 = np.bincount([int(r.outcome, 2) for r in recs], minlength=8) / 20_000
    c2 = np.bincount([int(o, 2) for o in ref], minlength=8) / 20_000
    assert np.abs(c1 - c2).max() < 0.02


def test_fidelity_examples():
    assert fidelity(ghz_state(3), ghz_state(3)) == pytest.approx(1.0)
    e1 = tt_svd_vector(np.eye(8)[1].astype(complex))
    e2 = tt_svd_vector(np.eye(8)[2].astype(complex))
    assert fidelity(e1, e2) == pytest.approx(0.0)
    assert fidelity(ghz_state(4), product_zero_state(4)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        fidelity(ghz_state(3), ghz_state(4))


def test_zero_state_from_z_records():
    truth = product_zero_state(4)
    recs = sample_records(truth, 200, seed=0, basis="ZZZZ")
    model, _ = fit_mps(recs, TomographyOptions(rank=1, seed=0))
    assert fidelity(model, truth) >= 0.999


def test_zero_learning_rate_leaves_model():
    recs = sample_records(ghz_state(3), 100, seed=0)
    opts = TomographyOptions(rank=2, learning_rate=0.0, max_epochs=5, seed=4)
    model, _ = fit_mps(recs, opts)
    assert fidelity(model, initial_model(3, 2, 4)) == pytest.approx(1.0, abs=1e-12)


def test_report_fields():
    truth = ghz_state(3)
    recs = sample_records(truth, 300, seed=0)
    _, rep = fit_mps(recs, TomographyOptions(rank=2, max_epochs=20), reference=truth)
    assert len(rep.train_loss) == len(rep.holdout_loss) == len(rep.fidelity_history)
    assert rep.n_records == 300
    assert rep.to_dict()["seed"] == 0


def test_min_records_bisection_monotone():
    truth = product_zero_state(3)
    opts = TomographyOptions(rank=1, seed=0)
    n = min_records_for_fidelity(truth, [10, 50, 200, 1000], opts, target=0.95)
    assert n is not None and n <= 1000


def test_records_csv_roundtrip(tmp_path):
    recs = sample_records(ghz_state(3), 20, seed=2)
    write_records_csv(tmp_path / "r.csv", recs)
    assert read_records_csv(tmp_path / "r.csv") == recs
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "basis,outcome"


def test_errors():
    with pytest.raises(ValueError):
        MeasurementRecord("ZQ", "01")
    with pytest.raises(ValueError):
        MeasurementRecord("ZZ", "012")
    with pytest.raises(ValueError):
        TomographyOptions(rank=0)
    with pytest.raises(ValueError):
        fit_mps([])
    with pytest.raises(ValueError):
        model_probability(ghz_state(3), MeasurementRecord("ZZ", "00"))
