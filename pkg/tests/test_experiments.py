import numpy as np
import pytest
from hypothesis import given, strategies as st

from irkswe.experiments import (
    dt_robust,
    fit_slope,
    mesh_robustness,
    reproducible,
    self_convergence,
    tc2_deviation,
)
from irkswe.harness import ExperimentConfig, ResultRow


def _row(dt, its, steps=10, status="ok"):
    return ResultRow("gl2", 4, dt, steps, steps, its * steps, 0.0, 0.0, 0.0, 0.0, 0.0, status)


@given(st.floats(-6, 6), st.floats(-20, 20))
def test_fit_slope_recovers_power_law(p, logc):
    dts = np.array([400.0, 200.0, 100.0, 50.0])
    assert fit_slope(dts, np.exp(logc) * dts**p) == pytest.approx(p, abs=1e-9)


def test_fit_slope_needs_two_points():
    with pytest.raises(ValueError):
        fit_slope([1.0], [1.0])


def test_dt_robust_pattern():
    rows = [_row(300, 4), _row(600, 5), _row(1200, 9), _row(2400, 12)]
    assert dt_robust(rows) == (True, True)
    assert dt_robust([_row(300, 2), _row(600, 5), _row(1200, 9)]) == (False, True)
    assert dt_robust([_row(300, 4), _row(600, 4), _row(1200, 9), _row(2400, 9)]) == (True, False)
    # failed rows are ignored; order of input rows does not matter
    rows = [_row(2400, 0, status="failed"), _row(1200, 9), _row(300, 4), _row(600, 4)]
    assert dt_robust(rows) == (True, True)
    assert dt_robust(rows[:2]) == (False, False)


def test_self_convergence_rejects_non_halving():
    with pytest.raises(ValueError):
        self_convergence("gl1", [300.0, 200.0, 100.0], level=1)
    with pytest.raises(ValueError):
        self_convergence("gl1", [300.0, 150.0], level=1)


@pytest.mark.parametrize("scheme, order", [("gl1", 2), ("radau1", 1), ("ark2", 2)])
def test_self_convergence_on_linear_waves(scheme, order):
    # coarse mesh, small dt: the linear problem is in the asymptotic regime
    study = self_convergence(scheme, [120.0, 60.0, 30.0, 15.0], level=1, tf=1200.0, case="linear",
                             solver="direct", rtol=1e-12, atol=1e-14)
    assert study.slope == pytest.approx(order, abs=0.15)
    assert len(study.rows) == 4 and np.isnan(study.rows[-1].err_eta)
    assert study.rows[0].err_eta == study.diff_eta[0]


def test_mesh_robustness_record():
    res = mesh_robustness(levels=(1, 2), courant=2.0)
    assert all(res.converged)
    # fixed Courant number: dt halves with the mesh spacing
    assert res.dts[0] / res.dts[1] == pytest.approx(2.0, rel=0.05)
    assert res.spread == abs(res.iterations[0] - res.iterations[1])


def test_tc2_deviation_rows():
    rows = tc2_deviation(levels=(1, 2), scheme="gl1", dt=600.0, steps=2, solver="direct")
    assert [r.level for r in rows] == [1, 2]
    assert all(r.status == "ok" and r.err_eta > 0 for r in rows)


def test_reproducible_run():
    cfg = ExperimentConfig(scheme="gl1", level=2, dt=900.0, tf=1800.0, ref_dt=112.5)
    assert reproducible(cfg)
