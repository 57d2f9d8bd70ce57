import subprocess
import sys
from pathlib import Path

import pytest

from irkswe.harness import read_csv

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def _run(name, *args, cwd):
    out = subprocess.run([sys.executable, str(SCRIPTS / name), *args], cwd=cwd, capture_output=True, text=True,
                         check=True)
    return out.stdout


def test_convergence_script(tmp_path):
    out = _run("convergence.py", "--schemes", "gl1", "--dts", "600,300,150", "--level", "1", "--tf", "1800",
               "--out", "c.csv", cwd=tmp_path)
    assert out.startswith("gl1: slope eta")
    assert len(read_csv(tmp_path / "c.csv")) == 3


def test_robustness_script(tmp_path):
    out = _run("robustness.py", "--schemes", "radau1", "--dts", "600,1200,2400", "--level", "1", "--tf", "2400",
               "--out", "r.csv", cwd=tmp_path)
    assert "flat=" in out and len(read_csv(tmp_path / "r.csv")) == 3


def test_mesh_robustness_script(tmp_path):
    out = _run("mesh_robustness.py", "--levels", "1,2", cwd=tmp_path).splitlines()
    assert out[0] == "level,dt,iterations,converged" and out[-1].startswith("# spread")


@pytest.mark.parametrize("name, args", [
    ("stability.py", ["--level", "2", "--dts", "60,7200", "--steps", "20", "--schemes", "radau1", "--factor", "2"]),
    ("tc2_refinement.py", ["--levels", "1,2", "--scheme", "radau1", "--dt", "600", "--steps", "2"]),
])
def test_other_scripts(tmp_path, name, args):
    out = _run(name, *args, cwd=tmp_path)
    assert out.strip()
    assert list(tmp_path.glob("*.csv"))
