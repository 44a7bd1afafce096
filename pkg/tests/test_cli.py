from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from spectral_cs.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_OK, main, run
from spectral_cs.lab import ExperimentConfig, generate_triple
from spectral_cs.operators import save_matrix


def _cli(*args, tmp_path=None):
    proc = subprocess.run([sys.executable, "-m", "spectral_cs", *args], capture_output=True, text=True,
                          cwd=tmp_path)
    return proc.returncode, proc.stdout, proc.stderr


def test_expand_is_byte_identical():
    args = ("expand", "--seed", "7", "--dim", "3", "--K", "4", "--function", "gaussian")
    c1, out1, _ = _cli(*args)
    c2, out2, _ = _cli(*args)
    assert c1 == c2 == EXIT_OK
    assert out1 == out2
    rep = json.loads(out1)
    assert rep["schema"].startswith("spectral-cs/")
    assert len(rep["report"]["orders"]) == 4


def test_cocycle_check_exit_zero():
    code, out, _ = _cli("cocycle-check", "--dim", "2", "--orders", "4", "--trials", "5")
    assert code == EXIT_OK
    assert json.loads(out)["pass"]


def test_pairing_below_tolerance():
    code, out, _ = _cli("pairing", "--dim", "2", "--q", "2", "--Kmax", "4")
    assert code == EXIT_OK
    p = json.loads(out)["pairing"]
    assert p["abs_value"] <= p["tolerance"]
    assert p["branch"] == "principal"


def test_invalid_config_exit_code(capsys):
    assert main(["expand", "--dim", "0"]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["exit_code"] == EXIT_CONFIG


def test_bad_config_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    assert main(["expand", "--config", str(p)]) == EXIT_CONFIG
    assert main(["expand", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["expand", "--function", "{bad"]) == EXIT_CONFIG
    capsys.readouterr()


def test_guard_exit_code(capsys):
    assert main(["bench", "--dim", "60", "--n", "13"]) == EXIT_GUARD
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "guard" and err["exit_code"] == EXIT_GUARD
    assert main(["expand", "--dim", "60", "--K", "7"]) == EXIT_GUARD
    capsys.readouterr()


def test_out_directory(tmp_path):
    assert main(["expand", "--dim", "2", "--K", "2", "--out", str(tmp_path / "o")]) == EXIT_OK
    data = json.loads((tmp_path / "o" / "expand.json").read_text())
    assert data["config"]["dim"] == 2
    head = (tmp_path / "o" / "expand.csv").read_text().splitlines()[0]
    assert head == "K,lhs,partial_sum,abs_error,bound"


def test_config_overrides_flags(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"dim": 2, "K": 2}))
    assert main(["expand", "--config", str(p), "--dim", "4"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["config"]["dim"] == 2


def test_matrix_files_via_config(tmp_path, capsys):
    inst = generate_triple(0, 2)
    save_matrix(tmp_path / "D.json", inst.triple.D.matrix)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"dim": 2, "K": 2, "files": {"D": str(tmp_path / "D.json")}}))
    assert main(["expand", "--config", str(p)]) == EXIT_OK
    capsys.readouterr()


def test_csv_format():
    buf = io.StringIO()
    assert run("cocycle-check", ExperimentConfig(dim=2, trials=2, format="csv"), buf) == EXIT_OK
    assert buf.getvalue().startswith("identity,")


@pytest.mark.parametrize("cmd", ["moi-verify", "bench"])
def test_other_subcommands(cmd, capsys):
    args = [cmd, "--dim", "3", "--trials", "2"] if cmd == "moi-verify" else [cmd, "--dim", "3", "--n", "6"]
    code = main(args)
    out = json.loads(capsys.readouterr().out)
    if cmd == "moi-verify":
        assert code == EXIT_OK and out["pass"]
    else:
        assert out["bench"]["agreement"] <= 1e-9
