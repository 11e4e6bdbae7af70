import json

import numpy as np
import pytest

from skewdiff import io
from skewdiff.analysis import laminar_window
from skewdiff.cli import EXIT_CONFIG, EXIT_DATA, main

MINIMAL = """\
[group]
type = {group}

[dynamics]
gamma = {gamma}

[ensemble]
n_traj = {n_traj}
n_steps = {n_steps}
record_stride = {stride}
burn_in = 100
"""


def write_cfg(tmp_path, name="run.ini", group="aniso", gamma=0.7, n_traj=2, n_steps=100, stride=1):
    f = tmp_path / name
    f.write_text(MINIMAL.format(group=group, gamma=gamma, n_traj=n_traj, n_steps=n_steps, stride=stride))
    return f


def manifest(run):
    return json.loads((run / io.MANIFEST).read_text())


class TestSimulate:
    def test_row_count_contract(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
        lines = (tmp_path / "r" / io.TRAJECTORIES).read_text().splitlines()
        assert lines[0] == "traj_index,step,p_1"
        idx = [int(ln.split(",")[0]) for ln in lines[1:]]
        assert idx.count(0) == 101 and idx.count(1) == 101

    def test_idempotent(self, tmp_path):
        cfg = write_cfg(tmp_path)
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")])
        assert manifest(tmp_path / "a")["content_hash"] == manifest(tmp_path / "b")["content_hash"]

    def test_gamma_rejected(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, gamma=1.2)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
        assert "gamma out of range [0,1)" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "r")]) == EXIT_CONFIG

    def test_unwritable_output(self, tmp_path):
        cfg = write_cfg(tmp_path)
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")]) == EXIT_DATA

    def test_env_overrides(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path, n_traj=6, n_steps=2000, stride=100)
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
        monkeypatch.setenv("SKEWDIFF_WORKERS", "3")
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")])
        assert manifest(tmp_path / "b")["run"]["workers"] == 3
        assert manifest(tmp_path / "a")["content_hash"] == manifest(tmp_path / "b")["content_hash"]
        monkeypatch.setenv("SKEWDIFF_BASE_SEED", "12345")
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c")])
        assert manifest(tmp_path / "c")["config"]["base_seed"] == 12345
        assert manifest(tmp_path / "c")["content_hash"] != manifest(tmp_path / "a")["content_hash"]

    def test_bad_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SKEWDIFF_BASE_SEED", "lots")
        assert main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(tmp_path / "r")]) == EXIT_CONFIG


class TestAnalyzeAndReport:
    def test_missing_run(self, tmp_path):
        assert main(["analyze", "--run", str(tmp_path)]) == EXIT_DATA

    def test_small_run_report(self, tmp_path):
        cfg = write_cfg(tmp_path, n_traj=120, n_steps=20000, stride=100)
        run = tmp_path / "r"
        main(["simulate", "--config", str(cfg), "--out", str(run)])
        acfg = tmp_path / "a.ini"
        acfg.write_text("[analysis]\nlaminar_steps = 100000\nacf_max_lag = 1000\nacf_fit_min = 10\nacf_fit_max = 1000\n")
        assert main(["analyze", "--run", str(run), "--analysis", str(acfg)]) == 0
        report = json.loads((run / io.ANALYSIS).read_text())
        for key in ("drift", "scaling", "tails", "laminar", "autocorrelation", "classification"):
            assert key in report
        assert set(report["drift"]) >= {"value", "stderr"}
        assert report["scaling"]["median_abs"]["stderr"] > 0
        assert report["content_hash"] == manifest(run)["content_hash"]

    def test_label_stable_across_workers(self, tmp_path):
        cfg = write_cfg(tmp_path, n_traj=150, n_steps=20000, stride=100, gamma=0.2)
        labels = []
        for w in ("1", "4"):
            run = tmp_path / f"r{w}"
            main(["simulate", "--config", str(cfg), "--out", str(run), "--workers", w])
            main(["analyze", "--run", str(run)])
            labels.append(json.loads((run / io.ANALYSIS).read_text())["classification"])
        assert labels[0] == labels[1]

    def test_fig1_odd_is_linear(self, tmp_path):
        run = tmp_path / "r"
        main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(run)])
        assert main(["report", "--run", str(run), "--figure", "fig1"]) == 0
        names, data = io.read_columns(run / io.FIGURES / "fig1_odd.dat")
        assert names == ["t", "p_1", "p_2", "p_3"]
        slope = data[-1, 1] / data[-1, 0]
        np.testing.assert_allclose(data[:, 1], slope * data[:, 0], rtol=1e-14, atol=1e-14)
        assert np.max(np.hypot(data[:, 2], data[:, 3])) <= 2.0 * np.sqrt(2.0 / 3.0) + 1e-12
        header = (run / io.FIGURES / "fig1_odd.dat").read_text().splitlines()[1]
        assert header == f"# config_hash {manifest(run)['content_hash']}"
        _, even = io.read_columns(run / io.FIGURES / "fig1_even.dat")
        assert np.max(np.hypot(even[:, 1], even[:, 2])) <= 2.0 + 1e-12

    def test_wrong_run_type(self, tmp_path):
        run = tmp_path / "r"
        main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(run)])
        assert main(["report", "--run", str(run), "--figure", "fig2"]) == EXIT_DATA


@pytest.mark.slow
class TestDeskRuns:
    @pytest.mark.parametrize(
        "fixture,label",
        [("aniso_strong_ensemble", "drift+diffusive"), ("e2_weak_ensemble", "diffusive"), ("e3_weak_ensemble", "superdiffusive")],
    )
    def test_classification(self, request, tmp_path, fixture, label):
        io.write_run(request.getfixturevalue(fixture), tmp_path)
        assert main(["analyze", "--run", str(tmp_path)]) == 0
        report = json.loads((tmp_path / io.ANALYSIS).read_text())
        assert report["classification"] == label

    def test_fig4_flights_downward(self, aniso_weak_ensemble, tmp_path):
        io.write_run(aniso_weak_ensemble, tmp_path)
        assert main(["report", "--run", str(tmp_path), "--figure", "fig4"]) == 0
        _, data = io.read_columns(tmp_path / io.FIGURES / "fig4.dat")
        inc = np.diff(data[:, 1:], axis=0).ravel()
        top = inc[np.argsort(-np.abs(inc))[:10]]
        assert np.all(top < 0)

    def test_fig3_inset_loops_bounded(self, e2_weak_ensemble, tmp_path):
        io.write_run(e2_weak_ensemble, tmp_path)
        assert main(["report", "--run", str(tmp_path), "--figure", "fig3"]) == 0
        names, data = io.read_columns(tmp_path / io.FIGURES / "fig3_inset.dat")
        assert names == ["step", "x", "p_1", "p_2"] and np.all(np.diff(data[:, 0]) == 1)
        _, _, _, exc, bound = laminar_window(e2_weak_ensemble.config)
        assert bound == 4.0
        assert exc.shape[0] > 100 and exc[:, 1].max() < bound

    def test_fig2_traces(self, e3_weak_ensemble, tmp_path):
        io.write_run(e3_weak_ensemble, tmp_path)
        assert main(["report", "--run", str(tmp_path), "--figure", "fig2"]) == 0
        names, data = io.read_columns(tmp_path / io.FIGURES / "fig2.dat")
        assert names[:4] == ["step", "t0_p_1", "t0_p_2", "t0_p_3"]
        assert data.shape[0] == e3_weak_ensemble.steps.size
