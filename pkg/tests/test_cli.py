import json

import numpy as np
import pytest

from distdiff import ddf
from distdiff.cli import EXIT_CONFIG, EXIT_INSUFFICIENT, EXIT_INVARIANT, EXIT_OK, main

SMALL = ["--resolution", "64", "--seed", "3"]


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--out", str(out), "-K", "8", "--samples", "60", *SMALL]) == EXIT_OK
    return out


def test_generate_outputs(generated):
    for name in ("dataset.ddf", "dataset.blind.ddf", "model.json", "provenance.json"):
        assert (generated / name).exists()
    prov = json.loads((generated / "provenance.json").read_text())
    assert prov["K"] == 8 and prov["samples"] == 60
    assert ddf.load_dataset(generated / "dataset.blind.ddf").blind


def test_generate_deterministic(generated, tmp_path):
    assert main(["generate", "--out", str(tmp_path), "-K", "8", "--samples", "60", *SMALL]) == EXIT_OK
    for name in ("dataset.ddf", "dataset.blind.ddf", "model.json", "provenance.json"):
        assert (tmp_path / name).read_bytes() == (generated / name).read_bytes()


def test_generate_blind_only(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "-K", "6", "--samples", "20", "--blind", *SMALL]) == EXIT_OK
    assert not (tmp_path / "dataset.ddf").exists()
    assert b"ground_truth" not in (tmp_path / "dataset.blind.ddf").read_bytes()


def test_verify_clean(generated, tmp_path):
    code = main(["verify", "--dataset", str(generated / "dataset.ddf"),
                 "--model", str(generated / "model.json"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    checks = json.loads((tmp_path / "verify.json").read_text())["checks"]
    assert all(c["passed"] for c in checks)


def test_verify_corrupted_exits_1(generated, tmp_path):
    ds = ddf.load_dataset(generated / "dataset.ddf")
    rho = ds.rho.copy()
    rho[2, 4] += 0.5
    ddf.save_dataset(ddf.with_samples(ds, rho, ds.ground_truth), tmp_path / "bad.ddf")
    code = main(["verify", "--dataset", str(tmp_path / "bad.ddf"), "--model", str(generated / "model.json")])
    assert code == EXIT_INVARIANT


def test_verify_blind_exits_2(generated):
    code = main(["verify", "--dataset", str(generated / "dataset.blind.ddf"),
                 "--model", str(generated / "model.json")])
    assert code == EXIT_INSUFFICIENT


def test_threshold_failure_still_exits_0(generated, capsys):
    code = main(["verify", "--dataset", str(generated / "dataset.ddf"),
                 "--model", str(generated / "model.json"), "--tol.eps_solver=1e-9"])
    assert code == EXIT_OK
    assert "[FAIL] threshold eps_solver" in capsys.readouterr().out


def test_config_errors(generated, tmp_path):
    assert main(["verify", "--dataset", str(generated / "dataset.ddf"), "--tol.nope=1"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["verify"]) == EXIT_CONFIG
    assert main(["reconstruct", "--dataset", str(tmp_path / "missing.ddf"), "--out", str(tmp_path)]) == EXIT_CONFIG
    truncated = tmp_path / "t.ddf"
    truncated.write_bytes((generated / "dataset.ddf").read_bytes()[:-50])
    assert main(["reconstruct", "--dataset", str(truncated), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["generate", "--model", "no-such-model", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_reconstruct_blind(generated, tmp_path):
    code = main(["reconstruct", "--dataset", str(generated / "dataset.blind.ddf"), "--out", str(tmp_path),
                 "--charts", "6"])
    assert code == EXIT_OK
    rec = json.loads((tmp_path / "reconstruction.json").read_text())
    assert rec["summary"]["samples"] == 60
    assert (tmp_path / "boundary_distances.csv").exists()


def test_wave_zero_events(tmp_path):
    assert main(["wave", "--events", "0", "--out", str(tmp_path), *SMALL]) == EXIT_INSUFFICIENT


def test_wave_small_run(tmp_path):
    code = main(["wave", "--events", "3", "-K", "6", "--out", str(tmp_path), *SMALL])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "wave_report.json").read_text())
    assert rep["events"] == 3 and rep["within_bound"] and rep["match_rate"] == 1.0
    assert ddf.load_dataset(tmp_path / "wave_dataset.blind.ddf").blind


def test_wave_events_file(tmp_path):
    from distdiff import wave

    wave.save_events([wave.SourceEvent(np.array([0.5, 0.5]), 0.4)], tmp_path / "ev.json")
    code = main(["wave", "--events-file", str(tmp_path / "ev.json"), "-K", "6", "--out", str(tmp_path / "o"),
                 *SMALL])
    assert code == EXIT_OK


def test_counterexample_cli(tmp_path):
    assert main(["counterexample", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "counterexample.json").read_text())["verdict"] == "PASS"
    assert (tmp_path / "G1_edges.csv").exists() and (tmp_path / "G2_edges.csv").exists()
    assert main(["counterexample", "--ranks", "1,1,1,1"]) == EXIT_INVARIANT
    assert main(["counterexample", "--arm-length", "5"]) == EXIT_CONFIG
