import json
import os

import pytest

from shadowcert import cli


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_certify_phase_certified(tmp_path, capsys):
    out = str(tmp_path / "certify.json")
    rc = cli.main(["certify", "--family", "phase", "--n", "4", "--seed", "1",
                   "--shots", "4000", "--out", out])
    assert rc == 0
    assert "Certified" in capsys.readouterr().out
    blob = read_json(out)
    assert blob["schema_version"] == 1
    assert len(blob["config_digest"]) == 16
    assert blob["config"]["n"] == 4
    assert blob["config"]["tau"] == 4.0
    assert blob["report"]["verdict"] == "Certified"
    assert blob["report"]["count"] == 4000
    assert os.path.exists(out + ".meta.json")


def test_certify_noisy_fails(tmp_path, capsys):
    out = str(tmp_path / "certify.json")
    rc = cli.main(["certify", "--family", "phase", "--n", "4", "--seed", "1",
                   "--noise", "white:0.9", "--shots", "4000", "--out", out])
    assert rc == 0
    assert read_json(out)["report"]["verdict"] == "Failed"


def test_gap_reports_relaxation_time(tmp_path, capsys):
    out = str(tmp_path / "gap.json")
    rc = cli.main(["gap", "--family", "phase", "--n", "8", "--out", out])
    assert rc == 0
    blob = read_json(out)
    assert abs(blob["spectral_report"]["tau"] - 8.0) < 1e-9
    assert abs(blob["spectral_report"]["gap"] - 1.0 / 8.0) < 1e-9
    assert blob["walk"]["n"] == 8
    assert "tau = " in capsys.readouterr().out


def test_benchmark_sweep_rows(tmp_path):
    out = str(tmp_path / "bench.csv")
    rc = cli.main(["benchmark", "--family", "haar", "--n", "4", "--seed", "2",
                   "--shots", "2000", "--noise-sweep", "white:0..1:11",
                   "--out", out])
    assert rc == 0
    with open(out) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    assert lines[0].startswith("# schema_version=1 config_digest=")
    assert lines[1].split(",")[:4] == ["noise_type", "p", "fidelity",
                                       "normalized_shadow_overlap"]
    assert len(lines) == 2 + 11
    first = lines[2].split(",")
    assert first[0] == "white" and float(first[1]) == 0.0
    assert abs(float(first[2]) - 1.0) < 1e-9  # p=0 keeps fidelity exact


def test_benchmark_uniform_target_is_runtime_error(tmp_path, capsys):
    out = str(tmp_path / "bench.csv")
    rc = cli.main(["benchmark", "--family", "phase", "--n", "4", "--seed", "2",
                   "--shots", "500", "--out", out])
    assert rc == 3
    assert "runtime error" in capsys.readouterr().err


def test_benchmark_deterministic_reruns(tmp_path):
    out = str(tmp_path / "a.csv")
    contents = []
    for _ in range(2):
        args = ["benchmark", "--family", "haar", "--n", "4", "--seed", "7",
                "--shots", "1000", "--noise-sweep", "white:0..1:3", "--out", out]
        assert cli.main(args) == 0
        with open(out, "rb") as fh:
            contents.append(fh.read())
    assert contents[0] == contents[1]  # sidecar timestamps may differ;
    # the data file must be byte-identical across reruns


def test_estimate_hamiltonian_and_purity(tmp_path, capsys):
    out = str(tmp_path / "est.json")
    rc = cli.main(["estimate", "--kind", "hamiltonian", "--family", "haar",
                   "--n", "4", "--terms", "3", "--eps", "0.5", "--delta",
                   "0.2", "--seed", "3", "--out", out])
    assert rc == 0
    blob = read_json(out)
    assert {"estimate_real", "B", "K", "samples"} <= set(blob)
    rc = cli.main(["estimate", "--kind", "purity", "--family", "haar",
                   "--n", "4", "--subsystem-size", "2", "--shots", "5000",
                   "--seed", "3", "--out", out])
    assert rc == 0
    blob = read_json(out)
    assert 0.0 < blob["purity"] <= 1.0 + 1e-9


def test_optimize_circuit_writes_trace(tmp_path, capsys):
    out = str(tmp_path / "opt.csv")
    rc = cli.main(["optimize-circuit", "--n", "4", "--seed", "1",
                   "--score-shots", "2000", "--out", out])
    assert rc == 0
    with open(out) as fh:
        lines = fh.read().splitlines()
    assert lines[1] == "step,action,fidelity,shadow"
    assert len(lines) >= 3
    assert "final fidelity = 1.0" in capsys.readouterr().out


def test_train_nqs_writes_artifacts(tmp_path):
    prefix = str(tmp_path / "run")
    rc = cli.main(["train-nqs", "--n", "6", "--seed", "4", "--examples",
                   "3000", "--epochs", "2", "--lr", "0.05", "--features", "4",
                   "--test-size", "500", "--out-prefix", prefix])
    assert rc == 0
    for suffix in ("_trace.csv", "_eval.csv", "_purity.csv", "_net.json"):
        assert os.path.exists(prefix + suffix)
    with open(prefix + "_trace.csv") as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 2 + 2  # header comment, column row, two epochs
    net = read_json(prefix + "_net.json")["net"]
    assert set(net) == {"W1", "b1", "W2", "b2"}


def test_congestion_report(tmp_path, capsys):
    out = str(tmp_path / "cong.csv")
    rc = cli.main(["congestion", "--n", "4", "--seed", "5", "--out", out])
    assert rc == 0
    text = capsys.readouterr().out
    assert "rho = " in text and "tau = " in text
    with open(out) as fh:
        lines = fh.read().splitlines()
    assert lines[1] == "edge_id,load"
    assert len(lines) > 2


def test_enforce_check_uniform_phase_unchanged(tmp_path):
    out = str(tmp_path / "enf.json")
    rc = cli.main(["enforce-check", "--family", "phase", "--n", "4",
                   "--seed", "6", "--out", out])
    assert rc == 0
    blob = read_json(out)
    assert blob["unchanged"] is True
    assert blob["changed_amplitudes"] == 0


def test_config_file_defaults_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "phase", "n": 4, "seed": 9}))
    out = str(tmp_path / "gap.json")
    rc = cli.main(["--config", str(cfg), "gap", "--out", out])
    assert rc == 0
    assert read_json(out)["config"]["n"] == 4
    rc = cli.main(["--config", str(cfg), "gap", "--n", "6", "--out", out])
    assert rc == 0
    blob = read_json(out)
    assert blob["config"]["n"] == 6  # explicit flag wins
    assert abs(blob["spectral_report"]["tau"] - 6.0) < 1e-9


def test_output_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("SHADOWCERT_OUTPUT_DIR", str(tmp_path))
    rc = cli.main(["gap", "--family", "phase", "--n", "4"])
    assert rc == 0
    assert os.path.exists(str(tmp_path / "gap_out.json"))


def test_config_errors_exit_2(tmp_path, capsys):
    out = str(tmp_path / "x.json")
    assert cli.main(["certify", "--family", "phase", "--n", "4",
                     "--noise", "white", "--out", out]) == 2
    assert cli.main(["certify", "--family", "nope", "--n", "4",
                     "--out", out]) == 2
    assert cli.main(["gap", "--family", "phase", "--n", "4",
                     "--threads", "-1", "--out", out]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.json"), "gap",
                     "--n", "4", "--out", out]) == 2
    err = capsys.readouterr().err
    assert err.count("config error") == 4
