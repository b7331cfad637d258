import json
import subprocess
import sys

import pytest

from toral_rigidity.cli import ExperimentConfig, load_config, main, summary_line
from toral_rigidity.errors import ParseError

SMALL = {
    "lyap_n": 1000,
    "n_samples": 8,
    "orbit_samples": 10,
    "n_pairs": 200,
    "transfer_points": 20,
    "distortion_points": 20,
    "distortion_n": 20,
    "livsic_max_period": 2,
    "regularity_grid": 256,
    "grid_n": 64,
}


def _records(out):
    return [json.loads(line) for line in (out / "records.ndjson").read_text().splitlines()]


@pytest.fixture
def matrix_file(tmp_path):
    def write(text, name="m.txt"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def test_check_exit_codes(tmp_path, matrix_file):
    assert main(["check", matrix_file("2\n2 1\n1 1\n"), "--out", str(tmp_path / "a")]) == 0
    blk = matrix_file("4\n2 1 0 0\n1 1 0 0\n0 0 2 1\n0 0 1 1\n", "blk.txt")
    assert main(["check", blk, "--out", str(tmp_path / "b")]) == 1
    (verdict,) = [r for r in _records(tmp_path / "b") if r["record"] == "check"]
    assert "reducible" in json.dumps(verdict)
    assert main(["check", matrix_file("2\n2 x\n1 1\n", "bad.txt"), "--out", str(tmp_path / "c")]) == 2


def test_usage_errors(tmp_path):
    assert main(["rigidity", "--preset", "nope", "--out", str(tmp_path)]) == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["perturb", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    with pytest.raises(ParseError):
        load_config(str(cfg), {})


def test_survey_ladder(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["survey", "--T", "3", "6", "12", "--out", str(out)]) == 0
    recs = _records(out)
    rows = [r for r in recs if r["record"] == "survey_row"]
    assert [r["T"] for r in rows] == [3, 6, 12]
    (fit,) = [r for r in recs if r["record"] == "decay_fit"]
    assert fit["delta"] > 0
    assert "fit:" in capsys.readouterr().out


def test_single_row_survey_keeps_rows(tmp_path):
    out = tmp_path / "s"
    assert main(["survey", "--T", "3", "--out", str(out)]) == 3
    recs = _records(out)
    assert [r["record"] for r in recs].count("survey_row") == 1
    assert recs[-1]["record"] == "error"


def test_seeded_sample_survey_is_reproducible(tmp_path):
    args = ["survey", "--d", "3", "--mode", "sample", "--n", "300", "--T", "4", "6", "8", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) in (0, 3)
    assert main(args + ["--out", str(tmp_path / "b")]) in (0, 3)
    a = (tmp_path / "a" / "records.ndjson").read_bytes()
    assert a == (tmp_path / "b" / "records.ndjson").read_bytes()
    assert json.loads(a.splitlines()[0])["caveat"]


def test_config_echo_and_hash(tmp_path):
    out = tmp_path / "p"
    assert main(["perturb", "--preset", "sheared-cat", "--out", str(out)]) == 0
    echo = json.loads((out / "config.json").read_text())
    cfg = ExperimentConfig(**echo)
    assert cfg.preset == "sheared-cat"
    (rec,) = _records(out)
    assert rec["config_hash"] == cfg.hash()
    assert ExperimentConfig(out="elsewhere", threads=4).hash() == ExperimentConfig().hash()
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["exit_code"] == 0


def test_mixed_configs_refused(tmp_path):
    out = str(tmp_path / "m")
    assert main(["perturb", "--preset", "sheared-cat", "--out", out]) == 0
    assert main(["perturb", "--preset", "conjugated-cat", "--out", out]) == 2
    assert main(["perturb", "--preset", "sheared-cat", "--out", out]) == 0


def test_identity_pipeline(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "preset": "identity"}))
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        assert main(["rigidity", "--config", str(cfg), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "spectra-matched: yes; regularity-band: [1.0000,1.0000]" in printed
    assert (outs[0] / "records.ndjson").read_bytes() == (outs[1] / "records.ndjson").read_bytes()
    (summary,) = [r for r in _records(outs[0]) if r["record"] == "summary"]
    assert summary["livsic_max_obstruction"] < 1e-12


def test_lyapunov_detects_sheared_spectrum(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "preset": "sheared-cat"}))
    assert main(["lyapunov", "--config", str(cfg), "--out", str(tmp_path / "l")]) == 0
    assert "spectra-matched: no" in capsys.readouterr().out


def test_summary_line_format():
    assert summary_line(True, (0.99941, 1.00052)) == "spectra-matched: yes; regularity-band: [0.9994,1.0005]"
    assert summary_line(False, None) == "spectra-matched: no; regularity-band: n/a"


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "toral_rigidity.cli", "--version"], capture_output=True, text=True, check=False
    )
    assert res.returncode == 0 and res.stdout.strip()
