import csv
import hashlib
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from nhberry.cli import COMMANDS, main, parse_config
from nhberry.errors import ConfigInvalid
from nhberry.io import RunWriter, atomic_write, csv_text, fmt, json_text, to_jsonable


@pytest.mark.parametrize("x", [0.1, 1 / 3, -2.5e-300, 1e308, np.pi, 5e-324])
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_csv_text_lf_and_header():
    text = csv_text(["a", "b"], [[1, 0.5], [2, 1 / 3]])
    assert "\r" not in text
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["a", "b"]
    assert float(rows[2][1]) == 1 / 3


def test_jsonable_complex_and_nonfinite():
    obj = to_jsonable({"z": 1 + 2j, "a": np.array([1.0, np.nan]), "n": np.int64(3)})
    assert obj == {"z": {"re": 1.0, "im": 2.0}, "a": [1.0, "nan"], "n": 3}
    json.loads(json_text({"z": 1j}))


def test_atomic_write_checksum(tmp_path):
    digest = atomic_write(tmp_path / "x" / "f.txt", "hello\n")
    assert digest == hashlib.sha256(b"hello\n").hexdigest()
    assert not [p for p in (tmp_path / "x").iterdir() if p.name.startswith(".tmp")]


def test_manifest_lists_every_file(tmp_path):
    w = RunWriter(tmp_path, "loop", {"z": 0.5})
    w.write_csv("a.csv", ["x"], [[1.0]])
    w.write_json("b.json", {"y": 2})
    man = json.loads(w.finish().read_text())
    assert set(man["files"]) == {"a.csv", "b.json"}
    for name, entry in man["files"].items():
        assert entry["sha256"] == hashlib.sha256((tmp_path / name).read_bytes()).hexdigest()
    assert man["status"] == "ok" and man["spec"] == {"z": 0.5}


# --------------------------------------------------------------------------
# configuration


def test_minimal_loop_config_fills_defaults(tmp_path):
    cfg = tmp_path / "loop.toml"
    cfg.write_text('kind = "RR"\nband = "+"\nz = 0.5\nr = 1\nz0 = 1\n')
    p = parse_config("loop", cfg)
    assert p["band"] == 1 and p["r"] == 1.0 and p["tol"] == 1e-8 and p["principal"] is True


def test_unknown_key_named(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("zeta = 1.0\n")
    with pytest.raises(ConfigInvalid, match="zeta"):
        parse_config("loop", cfg)


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("r = 2.0\nvalues = [0.5, 1.0]\n")
    p = parse_config("sweep", cfg, {"r": "3", "values": None})
    assert p["r"] == 3.0 and p["values"] == [0.5, 1.0]
    assert parse_config("sweep", None, {"values": "0.5, 1.5"})["values"] == [0.5, 1.5]


@pytest.mark.parametrize("key,val", [("r", "abc"), ("band", "0"), ("n_r", 2.5),
                                     ("principal", "maybe")])
def test_bad_values_rejected(key, val):
    cmd = "charges" if key == "n_r" else "loop"
    with pytest.raises(ConfigInvalid, match=key):
        parse_config(cmd, None, {key: val})


def test_missing_config_file():
    with pytest.raises(ConfigInvalid):
        parse_config("loop", "/nonexistent/file.toml")


def test_every_command_has_defaults():
    for cmd in COMMANDS:
        parse_config(cmd)


# --------------------------------------------------------------------------
# runs


def run_cli(capsys, *argv):
    code = main(list(argv) + ["--quiet"])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


def test_loop_command(tmp_path, capsys):
    code, out = run_cli(capsys, "loop", "--kind", "RR", "--z", "0.5", "--r", "1", "--z0", "0",
                        "--output-dir", str(tmp_path))
    assert code == 0
    expect = -np.pi * (1 - 0.5 / math.sqrt(1.25))
    assert out["summary"]["phase"]["re"] == pytest.approx(expect, abs=1e-7)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["files"]) == {"loop.csv", "summary.json"}


def test_charges_command(tmp_path, capsys):
    code, out = run_cli(capsys, "charges", "--kind", "TildeRR", "--z0", "1",
                        "--n-r", "16", "--n-phi", "8", "--output-dir", str(tmp_path))
    assert code == 0
    s = out["summary"]
    assert s["total"]["re"] == pytest.approx(-0.5, abs=1e-6)
    assert s["mu_S"]["re"] < -0.5 < 0 < s["mu_N"]["re"]
    rows = list(csv.DictReader(open(tmp_path / "disk_charges.csv")))
    assert len(rows) == 1 + 15 * 8
    assert sum(float(r["charge_re"]) for r in rows) == pytest.approx(-0.5, abs=1e-6)


def test_field_command_marks_singular_points(tmp_path, capsys):
    code, out = run_cli(capsys, "field", "--z0", "1", "--nx", "5", "--nz", "5",
                        "--output-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "field.csv")))
    assert len(rows) == 25
    on_disk = [r for r in rows if float(r["Z"]) == 0 and abs(float(r["X"])) <= 1]
    assert on_disk and all(r["valid"] == "0" and r["x_re"] == "nan" for r in on_disk)


def test_evolve_rejects_lower_half_space(tmp_path, capsys):
    code, out = run_cli(capsys, "evolve", "--z", "-0.5", "--output-dir", str(tmp_path))
    assert code == 2
    assert out["error"] == "ConfigInvalid" and out["exit_code"] == 2
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "error"


def test_unknown_flag_exit_code(capsys):
    code, out = run_cli(capsys, "loop", "--zeta", "1")
    assert code == 2 and "zeta" in out["message"]


def test_numeric_failure_exit_code(tmp_path, capsys):
    code, out = run_cli(capsys, "evolve", "--omega", "0.8", "--dt", "0.001",
                        "--output-dir", str(tmp_path))
    assert code == 3 and out["error"] == "AdiabaticityBroken"


def test_io_failure_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, out = run_cli(capsys, "loop", "--output-dir", str(blocker / "sub"))
    assert code == 4


def test_sweep_command_columns(tmp_path, capsys):
    code, out = run_cli(capsys, "sweep", "--kind", "radius", "--values", "0.5,1.0",
                        "--omega", "0.0628", "--dt", "0.0159", "--output-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "phase_sweep.csv")))
    assert [float(r["r"]) for r in rows] == [0.5, 1.0]
    for col in ("phi_g_re", "phi_g_im", "phi_g_tilde_re", "phi_g_tilde_im", "theory_rr_re",
                "theory_rr_im", "theory_tilde_re", "theory_tilde_im"):
        assert col in rows[0]


def test_deterministic_csv(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert run_cli(capsys, "evolve", "--omega", "0.1", "--dt", "0.01",
                       "--output-dir", str(d))[0] == 0
        outs.append((d / "trace.csv").read_bytes())
    assert outs[0] == outs[1]


def test_env_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NHBERRY_OUTPUT_DIR", str(tmp_path))
    assert run_cli(capsys, "loop")[0] == 0
    assert (tmp_path / "loop" / "manifest.json").exists()


def test_gpe_command(tmp_path, capsys):
    code, out = run_cli(capsys, "gpe", "--n-grid", "256", "--omega", "0.9425",
                        "--output-dir", str(tmp_path))
    assert code == 0
    assert "extracted_phase" in out["summary"]
    assert (tmp_path / "gpe_trace.csv").exists()


def test_verify_subset(tmp_path, capsys):
    code = main(["verify", "--criteria", "8", "--output-dir", str(tmp_path), "--quiet"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("[PASS]  8")
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report[0]["criterion"] == 8 and report[0]["passed"]


def test_verify_unknown_criterion(tmp_path, capsys):
    assert main(["verify", "--criteria", "99", "--output-dir", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "nhberry.cli", "loop", "--quiet",
                          "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["status"] == "ok"
    assert out.stderr == ""
