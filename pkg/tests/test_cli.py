import shutil
import subprocess

import numpy as np
import pytest

from esdg.cli import main
from esdg.experiments import read_csv, write_csv


def test_verify_operators(capsys, tmp_path):
    out = tmp_path / "ops.csv"
    assert main(["verify-operators", "--dim", "2", "--degree", "1", "2", "--out", str(out)]) == 0
    assert "OK" in capsys.readouterr().out
    rows = read_csv(out)
    assert [r["N"] for r in rows] == ["1", "2"]


def test_verify_geometry_csv(tmp_path, capsys):
    out = tmp_path / "geo.csv"
    rc = main(["verify-geometry", "--dim", "2", "--warp", "cos2d", "--degree", "3",
               "--cells", "2", "--out", str(out)])
    assert rc == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["element_id", "gcl_residual", "min_J", "h_k"]
    assert len(rows) == 8
    assert max(float(r["gcl_residual"]) for r in rows) < 1e-10
    assert "max_gcl" in capsys.readouterr().err


def test_verify_geometry_reports_gcl_violation(tmp_path, capsys):
    rc = main(["verify-geometry", "--warp", "vortex3d", "--mode", "cross", "--cells", "2",
               "--nonperiodic", "--out", str(tmp_path / "g.csv")])
    assert rc == 2
    assert "FAIL" in capsys.readouterr().err
    rc = main(["verify-geometry", "--warp", "vortex3d", "--mode", "curlNp1", "--cells", "2",
               "--nonperiodic", "--out", str(tmp_path / "g.csv")])
    assert rc == 0


def test_verify_geometry_on_msh_file(tmp_path, data_dir):
    rc = main(["verify-geometry", str(data_dir / "four_tets.msh"), "--degree", "2",
               "--out", str(tmp_path / "g.csv")])
    assert rc == 0
    assert len(read_csv(tmp_path / "g.csv")) == 4


def test_run_freestream_preset(tmp_path):
    assert main(["run", "freestream3d", "--out", str(tmp_path), "--quiet",
                 "--set", "run.steps=2"]) == 0
    diag = read_csv(tmp_path / "freestream3d_N3_L0_diagnostics.csv")
    assert len(diag) == 3
    summary = read_csv(tmp_path / "freestream3d_summary.csv")
    assert float(summary[0]["err_total"]) < 1e-10


def test_run_from_file(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('name = "tiny"\n[mesh]\nlevels = [1.0]\n[run]\ndegree = 1\nsteps = 1\n'
                   '[physics]\ninitial_condition = "constant"\n'
                   '[physics.params]\nvelocity = [0.2, 0.1]\n')
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert (tmp_path / "o" / "tiny_summary.csv").is_file()


def test_positivity_abort_exit_code(tmp_path, capsys):
    rc = main(["run", "pulse2d", "--out", str(tmp_path), "--quiet",
               "--set", "run.CFL=50", "--set", "run.degree=2"])
    assert rc == 3
    assert "pulse2d" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["run", "nosuchpreset"],
                                  ["run", "pulse2d", "--set", "run.bogus=1"],
                                  ["run", "missing.toml"],
                                  ["verify-geometry", "missing.msh"]])
def test_config_error_exit_code(argv, capsys):
    assert main(argv) == 4
    assert "config error" in capsys.readouterr().err


def test_dump_ops(tmp_path):
    assert main(["dump-ops", "--dim", "2", "--degree", "2", "--out", str(tmp_path)]) == 0
    files = list(tmp_path.glob("*.csv"))
    assert files
    M = np.loadtxt(tmp_path / "M.csv", delimiter=",")
    assert np.allclose(M, np.eye(6))


def test_study_projection_stdout(capsys):
    assert main(["study", "projection", "--degree", "2", "--levels", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "preset,N,h,err_l2proj,err_wadg,err_diff"
    assert len(lines) == 3


def test_study_geoterms_files(tmp_path):
    assert main(["study", "geoterms", "--degree", "2", "--levels", "2",
                 "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "geoterms_N2.csv")
    assert len(rows) == 2
    assert float(rows[1]["err_curlNp1"]) < float(rows[0]["err_curlNp1"])


def test_report_strict(tmp_path, capsys):
    f = write_csv(tmp_path / "c.csv", ["preset", "N", "h", "err_total"],
                  [["vortex2d", 2, 1.0, 1e-2], ["vortex2d", 2, 0.5, 1.25e-3],
                   ["vortex2d", 2, 0.25, 5e-4]])
    assert main(["report", str(f)]) == 0
    assert "3.00" in capsys.readouterr().out
    assert main(["report", str(f), "--strict"]) == 2


@pytest.mark.skipif(shutil.which("esdg") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["esdg", "verify-operators", "--dim", "2", "--degree", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "OK" in res.stdout
