import json
import os

import pytest

from somd.cli import main

from conftest import PROGRAMS

GOLDEN = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")


def prog(name):
    return os.path.join(PROGRAMS, name)


def golden(name):
    with open(os.path.join(GOLDEN, name), encoding="utf-8") as fh:
        return fh.read()


def test_check_reports_a_clean_program(capsys):
    assert main(["check", prog("stencil.somd")]) == 0
    assert "0 error(s)" in capsys.readouterr().out


def test_check_reports_errors_with_locations(tmp_path, capsys):
    bad = tmp_path / "bad.somd"
    bad.write_text("int[] f(dist int[] a) {\n  for (int i = 0; i < a.length; i++) a[i] = 1;\n  return b;\n}\n")
    assert main(["check", str(bad)]) == 1
    assert f"{bad}:3:" in capsys.readouterr().out


def test_check_diag_json(tmp_path, capsys):
    bad = tmp_path / "bad.somd"
    bad.write_text("int f( {")
    assert main(["check", str(bad), "--diag-json"]) == 1
    diags = json.loads(capsys.readouterr().out)
    assert diags and diags[0]["severity"] == "error"


def test_stencil_plan_matches_the_golden_file(capsys):
    assert main(["inspect", prog("stencil.somd"), "--emit-plan", "--slaves", "4"]) == 0
    assert capsys.readouterr().out == golden("stencil_plan_4.txt")


def test_emit_kernels(capsys):
    assert main(["inspect", prog("vector_add.somd"), "--emit-kernels"]) == 0
    out = capsys.readouterr().out
    assert "if (i >= 0 && i < a.length)" in out


def test_run_prints_json(capsys):
    assert main(["run", prog("vector_add.somd"), "--args", "[[1,2],[3,4]]", "--slaves", "2"]) == 0
    assert json.loads(capsys.readouterr().out) == [4, 6]


@pytest.mark.parametrize("backend", ["seq", "sm", "gpu-sim"])
def test_run_every_backend(backend, capsys):
    assert main(["run", prog("array_sum.somd"), "--backend", backend, "--args", "[[1,2,3,4]]"]) == 0
    assert json.loads(capsys.readouterr().out) == 10


def test_run_writes_the_device_ledger(tmp_path, capsys):
    out = tmp_path / "ledger.json"
    assert main(["run", prog("array_sum.somd"), "--backend", "gpu-sim", "--args", "[[1,2,3]]",
                 "--ledger-json", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [t["direction"] for t in doc["transfers"]] == ["h2d", "d2h"]


def test_run_with_rules(tmp_path, capsys):
    rules = tmp_path / "rules.txt"
    rules.write_text("array_sum.sum:seq\n")
    assert main(["run", prog("array_sum.somd"), "--rules", str(rules), "--args", "[[5]]"]) == 0
    assert capsys.readouterr().out.strip() == "5"


def test_run_errors_exit_nonzero(capsys):
    assert main(["run", prog("array_sum.somd"), "--args", "not json"]) == 1
    assert "not valid JSON" in capsys.readouterr().err
    assert main(["run", prog("array_sum.somd"), "--args", "[[1]]", "--entry", "nope"]) == 1


def test_bench_writes_json(tmp_path, capsys):
    out = tmp_path / "bench.json"
    assert main(["bench", "sum", "--size", "100", "--reps", "3", "--slaves", "2", "--json", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["program"] == "sum" and report["checksum"] == report["oracle_checksum"]
    assert "middle tier" in capsys.readouterr().out


def test_plugin_registers_a_strategy(tmp_path, monkeypatch, capsys):
    (tmp_path / "halves.py").write_text(
        "def register(registry):\n"
        "    registry.register_strategy('Halves', lambda n, k: [(n * r // k, n * (r + 1) // k) for r in range(k)])\n")
    src = tmp_path / "p.somd"
    src.write_text("int[] f(dist(Halves) int[] a) {\n  for (int i = 0; i < a.length; i++) a[i] = a[i] * 2;\n"
                   "  return a;\n}\n")
    monkeypatch.chdir(tmp_path)
    assert main(["check", str(src)]) == 1
    capsys.readouterr()
    assert main(["run", str(src), "--plugin", "halves", "--slaves", "3", "--args", "[[1,2,3,4]]"]) == 0
    assert json.loads(capsys.readouterr().out) == [2, 4, 6, 8]
