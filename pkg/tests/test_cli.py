import csv
import json

import numpy as np
import pytest

from tnqc import __version__
from tnqc.cli import main
from tnqc.fit import UnitaryMPO
from tnqc.io import unitary_mpo_to_dict, write_json
from tnqc.circuit import circuit_from_unitary_mpo, circuit_to_dict
from tnqc.mpo_zoo import identity_mpo


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_encode_and_verify(tmp_path, capsys):
    out = str(tmp_path / "enc")
    code, stdout, _ = run(["encode", "--matrix", "mct", "--qubits", "4", "--rank", "4", "--out", out], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["epsilon"] <= 1e-8
    for name in ("report.json", "unitary_mpo.json", "circuit.json", "history.csv", "error_matrix.csv"):
        assert (tmp_path / "enc" / name).exists()
    report = json.loads((tmp_path / "enc" / "report.json").read_text())
    assert report["version"] == __version__ and len(report["config_hash"]) == 16
    code, stdout, _ = run(["verify", "--artifacts", out, "--out", out, "--shots", "10000"], capsys)
    assert code == 0
    v = json.loads(stdout)
    assert v["circuit_vs_mpo_max_dev"] <= 1e-10
    assert v["target_max_rel_dev"] <= 1e-6
    assert v["acceptance_within_3sigma"]
    assert v["success_exact"] == pytest.approx(v["success_circuit"], abs=1e-12)


def test_verify_identity_zero_deviation(tmp_path, capsys):
    a = UnitaryMPO(identity_mpo(3), 1.0, 1)
    write_json(tmp_path / "unitary_mpo.json", unitary_mpo_to_dict(a))
    write_json(tmp_path / "circuit.json", circuit_to_dict(circuit_from_unitary_mpo(a)))
    code, stdout, _ = run(["verify", "--artifacts", str(tmp_path), "--out", str(tmp_path)], capsys)
    assert code == 0
    v = json.loads(stdout)
    assert v["circuit_vs_mpo_max_dev"] == 0.0
    assert v["success_exact"] == pytest.approx(1.0)


def test_verify_missing_artifacts(tmp_path, capsys):
    code, _, err = run(["verify", "--artifacts", str(tmp_path / "none")], capsys)
    assert code != 0
    assert json.loads(err)["error"] == "ConfigError"


def test_unknown_matrix_error_json(tmp_path, capsys):
    code, _, err = run(["encode", "--matrix", "bogus", "--out", str(tmp_path)], capsys)
    assert code == 2
    msg = json.loads(err)
    assert msg["error"] == "ConfigError" and "bogus" in msg["message"]


def test_sweep_deterministic_and_resumable(tmp_path, capsys):
    args = ["sweep", "--matrix", "diag", "--sweep-qubits", "3", "--sweep-ranks", "1,2", "--iters", "50"]
    run(args + ["--out", str(tmp_path / "a")], capsys)
    run(args + ["--out", str(tmp_path / "b")], capsys)
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    _, stdout, _ = run(args + ["--out", str(tmp_path / "a")], capsys)
    assert json.loads(stdout)["new_rows"] == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == a
    rows = list(csv.DictReader(a.decode().splitlines()))
    assert [r["R"] for r in rows] == ["1", "2"]
    assert {r["version"] for r in rows} == {__version__}
    # interrupted sweep: drop the last row and resume
    lines = a.decode().splitlines(keepends=True)
    (tmp_path / "a" / "sweep.csv").write_text("".join(lines[:-1]))
    _, stdout, _ = run(args + ["--out", str(tmp_path / "a")], capsys)
    assert json.loads(stdout)["new_rows"] == 1
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == a


def test_yaml_config_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("matrix: laplace\nqubits: 3\nrank: 2\niters: 40\nseed: 1\n")
    code, stdout, _ = run(["encode", "--config", str(cfg), "--qubits", "2", "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    s = json.loads(stdout)
    assert s["matrix"] == "laplace" and s["n"] == 2


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"matrix": "diag", "speed": 3}))
    code, _, err = run(["encode", "--config", str(cfg)], capsys)
    assert code == 2 and "speed" in json.loads(err)["message"]


def test_heat_cli(tmp_path, capsys):
    out = tmp_path / "h"
    code, stdout, err = run(["heat", "--qubits", "4", "--steps", "20", "--dt", "0.001", "--out", str(out)], capsys)
    assert code == 0 and not err
    rows = list(csv.DictReader((out / "heat_history.csv").open()))
    assert len(rows) == 21
    norms = [float(r["norm"]) for r in rows]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert (out / "heat_profile.csv").exists()
    code, _, err = run(["heat", "--qubits", "4", "--steps", "1", "--dt", "0.1", "--out", str(out)], capsys)
    assert code == 0 and "CFL" in err


def test_power_cli(tmp_path, capsys):
    code, stdout, _ = run(["power", "--qubits", "5", "--function", "delta", "--index", "6", "--steps", "1",
                           "--shots", "100", "--out", str(tmp_path)], capsys)
    assert code == 0
    s = json.loads(stdout)
    assert s["argmax"] == 6 and s["sampled_argmax"] == 6


def test_evolution_cli(tmp_path, capsys):
    code, stdout, _ = run(["evolution", "--qubits", "3", "--dt-list", "1e-9,0.5", "--fit-ranks", "2",
                           "--iters", "20", "--polish", "50", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "evolution_ranks.csv").open()))
    assert rows[0]["max_rank"] == "1"
    errs = list(csv.DictReader((tmp_path / "evolution_errors.csv").open()))
    assert float(errs[0]["eps_trotter1"]) < 1e-12
    assert set(errs[0]) >= {"dt", "R", "eps_fit", "eps_trotter1", "eps_trotter2", "config_hash", "version"}


def test_evolution_guard(tmp_path, capsys):
    code, _, err = run(["evolution", "--qubits", "9", "--out", str(tmp_path)], capsys)
    assert code == 2 and json.loads(err)["error"] == "DenseGuardError"


def test_tomo_cli(tmp_path, capsys):
    code, stdout, _ = run(["tomo", "--qubits", "3", "--layers", "1", "--seeds", "0,1", "--records", "0,300",
                           "--out", str(tmp_path)], capsys)
    assert code == 0
    s = json.loads(stdout)
    assert set(s["mean_fidelity"]) == {"0", "300"}
    rows = list(csv.DictReader((tmp_path / "tomo.csv").open()))
    assert len(rows) == 4
