import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cyclic_afp import RunOptions, bundled_spec_text, execute, render_text
from cyclic_afp.cli import main

GOLDEN = Path(__file__).parent / "golden"

# (spec, command) -> (exit code, exit code with --strict)
EXIT_CODES = {
    ("example_3_8", "check"): (0, 0),
    ("example_3_8", "classify"): (0, 0),
    ("example_3_8", "solve"): (0, 0),
    ("example_3_8", "fset"): (0, 0),
    ("example_3_8", "verify"): (0, 0),
    ("example_3_8", "report"): (0, 0),
    ("example_4_15", "check"): (0, 1),
    ("example_4_15", "classify"): (0, 0),
    ("example_4_15", "solve"): (0, 0),
    ("example_4_15", "fset"): (0, 0),
    ("example_4_15", "verify"): (0, 1),
    ("example_4_12", "check"): (0, 1),
    ("example_4_12", "classify"): (0, 0),
    ("example_4_12", "solve"): (3, 3),
    ("example_4_12", "fset"): (0, 1),
    ("example_4_12", "verify"): (0, 1),
    ("example_cyclic_seq", "check"): (0, 0),
    ("example_cyclic_seq", "solve"): (0, 0),
    ("example_cyclic_seq", "fset"): (0, 0),
}


@pytest.mark.parametrize("spec, command", sorted(EXIT_CODES))
def test_exit_code_contract(spec, command):
    plain, strict = EXIT_CODES[(spec, command)]
    assert execute(command, spec).exit_code == plain
    assert execute(command, spec, RunOptions(strict=True)).exit_code == strict


@pytest.mark.parametrize(
    "argv, golden",
    [
        (["solve", "example_3_8", "--epsilon", "0.01", "--x0", "0.8"], "solve_example_3_8.json"),
        (["check", "example_4_12"], "check_example_4_12.json"),
        (["verify", "example_3_8"], "verify_example_3_8.json"),
        (["fset", "example_4_15"], "fset_example_4_15.json"),
    ],
)
def test_golden_reports(tmp_path, capsys, argv, golden):
    out = tmp_path / "r.json"
    code = main(argv + ["--json", str(out)])
    assert out.read_text() == (GOLDEN / "reports" / golden).read_text()
    assert code == json.loads(out.read_text())["exit_code"]
    capsys.readouterr()


def test_json_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["report", "example_4_12", "--json", str(a)])
    main(["report", "example_4_12", "--json", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_verify_quarter_map():
    rep = execute("verify", "example_3_8")
    assert rep.exit_code == 0
    mohseni = rep.results["classification"]["GMohseni"]
    assert mohseni["empirical_constant"] == pytest.approx(0.2, abs=1e-9)
    assert mohseni["rate"] == pytest.approx(0.5)
    assert rep.results["diameters"] and all(d["pass"] for d in rep.results["diameters"])
    assert not rep.failures and not rep.errors


def test_check_pins_cyclicity_witness():
    rep = execute("check", "example_4_12")
    assert rep.exit_code == 0
    warnings = [w for w in rep.warnings if w["kind"] == "cyclicity"]
    first = next(w for w in warnings if w["witness"]["set"] == 1)
    assert [0.3, 0.0] in first["witness"]["pairs"]
    assert first["witness"]["target"] == 2
    assert "[0.1, 1]" in first["message"]
    assert execute("check", "example_4_12", RunOptions(strict=True)).exit_code == 1


def test_solve_reports_hit_index():
    rep = execute("solve", "example_3_8", RunOptions(epsilon=0.01, x0=0.8))
    assert rep.exit_code == 0
    assert rep.results["solve"]["hit_index"] == 3


def test_solve_fault_keeps_partial_trace():
    rep = execute("solve", "example_4_12")
    assert rep.exit_code == 3
    assert rep.errors[0]["kind"] == "OrbitExitFault"
    assert rep.results["solve"]["outcome"] == "left_domain"


def test_power_flag():
    rep = execute("solve", "example_3_8", RunOptions(epsilon=0.1, x0=0.8, k=2))
    assert rep.results["solve"]["hit_index"] == 2 and rep.results["solve"]["k"] == 2


def test_trace_csv_written(tmp_path):
    path = tmp_path / "trace.csv"
    assert main(["solve", "example_3_8", "--epsilon", "0.01", "--x0", "0.8", "--csv", str(path)]) == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["n", "x_n", "delta_n", "ratio_n"]
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2, 3]


def test_fset_members_csv(tmp_path):
    path = tmp_path / "members.csv"
    main(["fset", "example_3_8", "--epsilon", "0.3", "--csv", str(path)])
    rows = list(csv.reader(path.open()))
    assert len(rows) == 40 and rows[1] == ["0.3", "0.01"]


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.spec"
    bad.write_text("[map]\nT = x//4\n")
    out = tmp_path / "r.json"
    assert main(["check", str(bad), "--json", str(out)]) == 2
    err = json.loads(out.read_text())["errors"][0]
    assert (err["kind"], err["line"], err["column"]) == ("parse", 2, 7)
    assert "line 2, column 7" in capsys.readouterr().out


def test_missing_file_exit_code():
    assert execute("check", "no/such/file.spec").exit_code == 2


def test_grid_override_changes_settings():
    rep = execute("fset", "example_3_8", RunOptions(grid=0.001, epsilon=0.3))
    assert rep.results["settings"]["grid"] == 0.001
    assert rep.results["fset"][0]["count"] == 399


def test_custom_metric_failing_axioms_blocks_pipeline(tmp_path):
    spec = bundled_spec_text("example_3_8").replace("gmetric = max 0.5", "gmetric = custom abs(x - y)")
    p = tmp_path / "custom.spec"
    p.write_text(spec)
    rep = execute("classify", str(p))
    assert rep.exit_code == 1
    assert "classification" not in rep.results
    assert any(f["kind"] == "axiom" and f["witness"] for f in rep.failures)


def test_every_warning_carries_a_witness():
    for spec in ("example_4_12", "example_4_15"):
        rep = execute("report", spec)
        assert rep.warnings
        assert all(w["witness"] is not None for w in rep.warnings)


def test_text_rendering():
    text = render_text(execute("solve", "example_3_8", RunOptions(epsilon=0.01, x0=0.8)))
    assert "hit_index 3" in text and text.rstrip().endswith("exit 0")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cyclic_afp", "solve", "example_3_8", "--epsilon", "0.01", "--x0", "0.8"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "hit_index 3" in proc.stdout


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["explode", "example_3_8"])
    assert info.value.code == 2
    assert main(["solve", "example_3_8", "--k", "0"]) == 2
    capsys.readouterr()
