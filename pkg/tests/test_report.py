import json

import numpy as np
import pytest

from hilbertsbf import backfit, report
from hilbertsbf.bandwidth import CbsConfig, cbs_select
from hilbertsbf.scores import hpca
from hilbertsbf.simulate import Sim2Config, run_sim2
from hilbertsbf.spaces import EuclideanSpace


@pytest.fixture
def small_fit(rng):
    x = rng.uniform(0, 1, 40)
    y = np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal(40)
    data = backfit.RegressionData.from_coords(
        [x], y[:, None], [[(0.0, 1.0)]], EuclideanSpace(1)
    )
    return backfit.fit(data, [0.3], backfit.default_grids(data.domains, 11))


def test_fmt_17_digits():
    assert report.fmt(1 / 3) == "0.33333333333333331"
    assert float(report.fmt(np.pi)) == np.pi  # round-trips exactly


def test_write_fit_outputs(tmp_path, small_fit):
    written = report.write_fit(small_fit, tmp_path)
    names = {p.split("/")[-1] for p in written}
    assert {"fit.json", "component_1.csv", "component_1.png"} <= names
    blob = json.loads((tmp_path / "fit.json").read_text())
    for key in ("bandwidths", "p0", "iterations", "convergence", "f0",
                "grids", "weights", "components"):
        assert key in blob
    assert len(blob["weights"][0]) == 40


def test_fit_json_reload_predicts(tmp_path, small_fit):
    report.write_fit(small_fit, tmp_path, figures=False)
    from hilbertsbf.cli import _fit_from_json

    loaded = _fit_from_json(tmp_path / "fit.json")
    for x in (0.1, 0.77):
        a = backfit.predict(small_fit, [x]).coeffs[0]
        b = backfit.predict(loaded, [x]).coeffs[0]
        assert b == pytest.approx(a, abs=1e-12)


def test_write_scores(tmp_path, rng):
    model = hpca(rng.standard_normal((15, 4)), 2, space=EuclideanSpace(4))
    written = report.write_scores(model, tmp_path)
    names = {p.split("/")[-1] for p in written}
    assert {"scores.csv", "spectrum.csv", "scores.png"} <= names


def test_write_bandwidth(tmp_path, rng):
    x = rng.uniform(0, 1, 60)
    y = np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal(60)
    data = backfit.RegressionData.from_coords(
        [x], y[:, None], [[(0.0, 1.0)]], EuclideanSpace(1)
    )
    res = cbs_select(data, CbsConfig([np.array([0.2, 0.3])], seed=1))
    written = report.write_bandwidth(res, tmp_path)
    names = {p.split("/")[-1] for p in written}
    assert {"bandwidths.json", "cv_trace.csv", "cv_trace.png"} <= names


def test_write_simulation_identity_and_layout(tmp_path):
    rep = run_sim2(Sim2Config(n=250, reps=1, seed=3))
    written = report.write_simulation([rep], tmp_path, seed=3)
    names = {p.split("/")[-1] for p in written}
    assert {"report.csv", "report.json", "report.png"} <= names
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "arm,criterion,j1,j2,j3"
    assert len(lines) == 4


def test_byte_identical_outputs(tmp_path, small_fit):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    report.write_fit(small_fit, a, figures=False)
    report.write_fit(small_fit, b, figures=False)
    assert (a / "fit.json").read_bytes() == (b / "fit.json").read_bytes()
