import json
import subprocess
import sys

import numpy as np
import pytest

from curv4.cli import main

RUN = [sys.executable, "-m", "curv4.cli"]


def run_cli(args, **kw):
    return subprocess.run(RUN + args, capture_output=True, text=True, **kw)


def test_analyze_product(tmp_path):
    out = tmp_path / "rep.json"
    csvp = tmp_path / "pts.csv"
    code = main(["analyze", "--metric", "product(a=1,b=1)", "--grid", "3",
                 "--no-sectional", "--out", str(out), "--csv", str(csvp)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert abs(rep["conditions"]["margins"]["s6_minus_wplus"]) < 1e-6
    assert abs(rep["volume"] - 16 * np.pi ** 2) / (16 * np.pi ** 2) < 1e-3
    rows = csvp.read_text().strip().splitlines()
    assert len(rows) - 1 == rep["conditions"]["npoints"]


def test_analyze_round_sphere(tmp_path):
    out = tmp_path / "rep.json"
    code = main(["analyze", "--metric", "round4(r=1)", "--grid", "3",
                 "--no-sectional", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert abs(rep["conditions"]["margins"]["s6_minus_wplus"] - 2.0) < 1e-8


def test_exit_code_parse_error():
    proc = run_cli(["analyze", "--metric", "nonsense(r=1)"])
    assert proc.returncode == 2
    assert "parse error" in proc.stderr


def test_exit_code_construction_error():
    proc = run_cli(["analyze", "--metric", "twisted(t=0.2,eps=99)"])
    assert proc.returncode == 3
    assert "construction error" in proc.stderr


def test_verify_identities_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["verify-identities", "--seed", "42", "--quad", "16",
                 "--sections", "2", "--out", str(a)]) == 0
    assert main(["verify-identities", "--seed", "42", "--quad", "16",
                 "--sections", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["failures"] == []
    assert all(r["pass"] for r in rep["identities"])


def test_verify_identities_tolerance_override(tmp_path):
    out = tmp_path / "strict.json"
    code = main(["verify-identities", "--seed", "1", "--quad", "16",
                 "--sections", "1", "--tol", "1e-12", "--out", str(out)])
    # quadrature-limited identities must now fail, with named offenders
    assert code == 1
    rep = json.loads(out.read_text())
    assert rep["failures"]


def test_surface_command(tmp_path):
    out = tmp_path / "surf.json"
    code = main(["surface", "--metric", "product(a=1,b=1)",
                 "--surface", "slice(factor=1)", "--quad", "24",
                 "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert abs(rep["c1"]) < 1e-3
    assert rep["morse_index"] == 0
    assert abs(rep["averaged_second_variation"]["lhs"]) < 1e-6


def test_surface_nonminimal_warning(tmp_path):
    out = tmp_path / "surf.json"
    code = main(["surface", "--metric", "product(a=1,b=1)",
                 "--surface", "perturbed-slice(c=0.15)", "--quad", "16",
                 "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert "warning" in rep
    assert "morse_index" not in rep


def test_scan_family_small(tmp_path):
    out = tmp_path / "fam.json"
    csvp = tmp_path / "fam.csv"
    code = main(["scan-family", "--t-values", "0,1", "--grid", "3",
                 "--quad", "16", "--pd-grid", "8",
                 "--out", str(out), "--csv", str(csvp)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert len(rep["cells"]) == 4
    for cell in rep["cells"]:
        assert "error" not in cell
        assert abs(cell["volume"] - 16 * np.pi ** 2) / (16 * np.pi ** 2) < 1e-3
        assert cell["margins"]["s6_minus_wplus"] >= -1e-6
    rows = csvp.read_text().strip().splitlines()
    assert len(rows) == 5


def test_threads_do_not_change_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["analyze", "--metric", "product(a=1,b=1)", "--grid", "3",
            "--seed", "7"]
    assert main(base + ["--threads", "1", "--out", str(a)]) == 0
    assert main(base + ["--threads", "3", "--out", str(b)]) == 0
    ja = json.loads(a.read_text())
    jb = json.loads(b.read_text())
    # reduction results identical; only the echoed thread count differs
    assert ja["conditions"] == jb["conditions"]


def test_version_flag():
    proc = run_cli(["--version"])
    assert proc.returncode == 0
