import subprocess
import sys

import numpy as np
import pytest

from mbmlab.cli import _outputs, main

SMALL = """
hurst.kind = sine
a = 0.45
b = 0.55
j_min = -3
j_max = 5
k_window = 8
t_points = 9
replicates = 3
psi.x_max = 32
psi.theta_nodes = 12
psi.quadrature_points = 1024
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def _body(path):
    return path.read_bytes()


def test_region_has_resolution_squared_rows(tmp_path):
    assert main(["region", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "region.csv").read_text().splitlines()
    data = [ln for ln in lines if not ln.startswith("#")]
    assert data[0] == "a,b,feasible"
    assert len(data) == 1 + 100 * 100
    assert lines[0].startswith("# mbmlab 0.1.0 region")


def test_synthesize_is_deterministic(tmp_path, cfg_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synthesize", "--config", str(cfg_file), "--out", str(a)]) == 0
    assert main(["synthesize", "--config", str(cfg_file), "--out", str(b)]) == 0
    assert _body(a / "paths.csv") == _body(b / "paths.csv")
    text = (a / "paths.csv").read_text()
    assert "# seed = 0" in text and "replicate,t,X" in text
    assert main(["synthesize", "--config", str(cfg_file), "--out", str(b), "--seed", "1"]) == 0
    assert _body(a / "paths.csv") != _body(b / "paths.csv")


def test_residual_columns(tmp_path, cfg_file):
    assert main(["residual", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    header = [ln for ln in (tmp_path / "residual.csv").read_text().splitlines() if not ln.startswith("#")][0]
    assert header == "replicate,t,X,Z,R"


def test_exponent_prints_and_writes(tmp_path, capsys):
    p = tmp_path / "e.cfg"
    p.write_text("a = 0.45\nb = 0.55\nhurst.kind = sine\n")
    assert main(["exponent", "--config", str(p), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("feasible=True d=0.742018")
    assert "d,0.742018" in (tmp_path / "exponent.csv").read_text()


def test_outside_hypotheses_is_labelled(tmp_path, cfg_file):
    cfg_file.write_text(SMALL.replace("a = 0.45", "a = 0.2").replace("b = 0.55", "b = 0.8"))
    assert main(["residual", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    assert "outside the residual-smoothing hypotheses" in (tmp_path / "residual.csv").read_text()


def test_config_error_exits_nonzero(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("a = 0.6\nb = 0.5\n")
    assert main(["region", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "a must be" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_failed_run_leaves_no_partial_files(tmp_path):
    with pytest.raises(RuntimeError):
        with _outputs(tmp_path, []) as o:
            o.path("x.csv").write_text("half")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


def test_coverage_error_exit(tmp_path, cfg_file):
    cfg_file.write_text(SMALL + "psi.theta_lo = 0.5\n")
    assert main(["synthesize", "--config", str(cfg_file), "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "paths.csv").exists()


def test_diagnostics_and_tangent(tmp_path, cfg_file):
    cfg_file.write_text(SMALL + "diag.j_values = 0, 2, 4\nrho = 2^-6..2^-4\nreplicates = 200\n")
    assert main(["diagnostics", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    a = (tmp_path / "diagnostics_A.csv").read_text()
    assert "j_max,value" in a
    assert "slope" in (tmp_path / "diagnostics_G.csv").read_text()
    assert main(["tangent", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    rows = [ln for ln in (tmp_path / "tangent.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "rho,frobenius_rel_error" and len(rows) == 4


def test_estimate_holder(tmp_path, cfg_file):
    cfg_file.write_text(SMALL + "replicates = 200\nt = 0.25\n")
    assert main(["estimate-holder", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "holder.csv").exists() and (tmp_path / "variogram.csv").exists()


def test_psi_table_command(tmp_path, cfg_file):
    assert main(["psi-table", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "psi_table.bin").stat().st_size > 0
    assert "localization_constant" in (tmp_path / "psi_summary.csv").read_text()


def test_validate_single_check(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mbmlab.cli", "validate", "--only", "1", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    # the determinism check (12) always runs alongside the selected ones
    assert "[PASS] 01 partition_of_unity" in r.stdout and "2/2 checks passed" in r.stdout
    assert (tmp_path / "summary.csv").exists()
