import csv
import math

import numpy as np
import pytest

from pnpkit import bench
from pnpkit.bench import (
    ConfigError,
    ExperimentConfig,
    SummaryTable,
    builtin_kernels,
    make_kernel,
    run_experiment,
    run_single,
    run_theorem1,
)
from pnpkit.cli import main
from pnpkit.core import psnr
from pnpkit.io import load_image


class TestKernels:
    def test_four_builtins_normalized(self):
        ks = builtin_kernels()
        assert [name.split(":")[0] for name, _ in ks] == ["gaussian", "box", "disk", "motion"]
        for _, k in ks:
            assert abs(k.sum() - 1) <= 1e-12 and k.min() >= 0

    def test_gaussian_rotation_symmetric(self):
        k = make_kernel("gaussian:1.6,9")
        assert k.shape == (9, 9)
        np.testing.assert_allclose(np.rot90(k), k, atol=1e-15)

    def test_disk_support(self):
        k = make_kernel("disk:3")
        for i in range(k.shape[0]):
            for j in range(k.shape[1]):
                inside = (i - 3) ** 2 + (j - 3) ** 2 <= 9
                assert (k[i, j] > 0) == inside

    def test_motion_and_box(self):
        np.testing.assert_allclose(make_kernel("motion:7"), np.eye(7) / 7)
        np.testing.assert_allclose(make_kernel("box:5"), np.full((5, 5), 0.04))

    @pytest.mark.parametrize("spec", ["blob", "box:x", "box:4,4", "motion:6"])
    def test_bad_specs(self, spec):
        with pytest.raises(ConfigError):
            make_kernel(spec)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"imagez": ["squares"]})

    @pytest.mark.parametrize("bad", [dict(images=[]), dict(noise_levels=[0.0]),
                                     dict(solvers=["pgd"]), dict(denoisers=["dncnn"]),
                                     dict(gamma="big"), dict(gamma=-1.0), dict(sigma="x"),
                                     dict(max_iter=0), dict(kernels=["nope"])])
    def test_invalid_values(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)

    def test_prior_spec(self):
        cfg = ExperimentConfig.from_dict({"prior": {"gmm_mmse": {"component": [
            {"weight": 0.3, "mean": [0.1], "iso": 0.01},
            {"weight": 0.7, "mean": [0.9], "diag": [0.02]}]}}})
        p = cfg.built_priors["gmm_mmse"]
        assert p.n_components == 2 and p.covariances[1, 0, 0] == 0.02

    def test_prior_spec_errors(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"prior": {"gmm_mmse": {"component": [
                {"weight": 1.0, "mean": [0.0], "iso": 1.0, "diag": [1.0]}]}}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"prior": {"gmm_mmse": {"component": [
                {"weight": 1.0, "mean": [0.0], "iso": -1.0}]}}})

    def test_shipped_config_loads(self):
        cfg = ExperimentConfig.load("configs/default_sweep.toml")
        assert cfg.noise_levels == [0.01, 0.02, 0.03]
        assert len(bench.enumerate_cells(cfg)) == 2 * 4 * 3 * 2 * 2

    def test_cli_exit_2_on_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('images = ["squares"]\ncolour = "blue"\n')
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "colour" in capsys.readouterr().err

    def test_cli_exit_2_on_unparseable(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("images = [\n")
        assert main(["sweep", "--config", str(path)]) == 2


def test_trivial_problem_exact():
    truth = load_image("squares")
    cfg = ExperimentConfig(denoisers=["identity"], gamma=1.0, max_iter=50)
    _, y, x, _, _ = run_single(truth, make_kernel("delta"), 0.0, "admm", "identity", cfg, 0)
    assert psnr(x, truth) > 100


def test_fista_step_and_sigma_policy():
    truth = load_image("squares")[:16, :16]
    cfg = ExperimentConfig(sigma=0.05, gamma="sigma2", max_iter=3)
    tr, *_, gamma, sigma = run_single(truth, make_kernel("box:3"), 0.02, "fista", "gmm_mmse", cfg, 0)
    assert sigma == 0.05 and gamma == pytest.approx(0.0025)


SMALL = """
images = ["squares"]
kernels = ["gaussian:1.0,5"]
noise_levels = [0.02, 0.03]
solvers = ["admm", "fista"]
denoisers = ["gmm_mmse", "gaussian_linear"]
gamma = "sigma2"
max_iter = 15
seed = 3
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def _files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestSweep:
    def test_outputs_and_recomputed_summary(self, small_config, tmp_path):
        out = tmp_path / "run"
        assert main(["sweep", "--config", str(small_config), "--out", str(out)]) == 0
        runs = list(csv.DictReader(open(out / "runs.csv")))
        assert len(runs) == 8 and all(r["status"] == "ok" for r in runs)
        for r in runs:
            cell = list(csv.DictReader(open(out / "cells" / f"{r['cell']}.csv")))
            assert len(cell) == 16
            assert float(cell[-1]["psnr"]) == float(r["psnr"])
        summary = {row["method"]: row for row in csv.DictReader(open(out / "summary.csv"))}
        for (solver, den), label in [(("admm", "gmm_mmse"), "ADMM (gmm_mmse)"),
                                     (("fista", "gaussian_linear"), "FISTA (gaussian_linear)")]:
            vals = {n: [float(r["psnr"]) for r in runs if r["solver"] == solver
                        and r["denoiser"] == den and float(r["noise"]) == n] for n in (0.02, 0.03)}
            for n in (0.02, 0.03):
                assert abs(float(summary[label][f"{n:g}"]) - np.mean(vals[n])) <= 1e-12
            allv = vals[0.02] + vals[0.03]
            assert abs(float(summary[label]["avg"]) - np.mean(allv)) <= 1e-12
        text = (out / "summary.txt").read_text().splitlines()
        assert len({len(line) for line in text}) == 1  # aligned columns
        assert "using 1:6" in (out / "plot_rel_change.gp").read_text()

    def test_byte_identical_across_runs_and_threads(self, small_config, tmp_path, monkeypatch):
        monkeypatch.setenv("PNPKIT_THREADS", "1")
        assert main(["sweep", "--config", str(small_config), "--out", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("PNPKIT_THREADS", "4")
        assert main(["sweep", "--config", str(small_config), "--out", str(tmp_path / "b")]) == 0
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert a.keys() == b.keys() and a == b

    def test_cell_failure_recorded(self, tmp_path, capsys):
        cfg = ExperimentConfig(images=["squares", "missing.pnpk"], kernels=["box:3"],
                               noise_levels=[0.03], solvers=["fista"], denoisers=["identity"],
                               max_iter=3)
        table, runs = run_experiment(cfg, tmp_path)
        status = {r["image"]: r["status"] for r in runs}
        assert status == {"squares": "ok", "missing.pnpk": "error"}
        assert "missing.pnpk" in [r for r in runs if r["status"] == "error"][0]["error"]

    def test_cli_exit_1_on_cell_failure(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('images = ["nowhere.png"]\nkernels = ["box:3"]\nnoise_levels = [0.03]\n'
                        'solvers = ["fista"]\ndenoisers = ["identity"]\nmax_iter = 2\n')
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 1

    def test_noise_streams_differ_per_data_cell(self):
        assert bench.noise_seed(0, 0) != bench.noise_seed(0, 1) != bench.noise_seed(1, 1)


def test_summary_table_means():
    runs = [dict(status="ok", solver="admm", denoiser="x", noise=0.01, psnr=p) for p in (20.0, 22.0)]
    runs += [dict(status="ok", solver="admm", denoiser="x", noise=0.02, psnr=30.0),
             dict(status="error", solver="admm", denoiser="x", noise=0.02)]
    t = SummaryTable.from_runs(runs, [0.01, 0.02])
    assert t.means(("admm", "x")) == [21.0, 30.0]
    assert t.average(("admm", "x")) == pytest.approx(24.0)


def test_deblur_cli(tmp_path, capsys):
    out = tmp_path / "d"
    code = main(["deblur", "--image", "disks", "--kernel", "box:5", "--noise", "0.03",
                 "--solver", "fista", "--denoiser", "gaussian_linear", "--max-iter", "5",
                 "--out", str(out)])
    assert code == 0
    assert {p.name for p in out.iterdir()} >= {"trace.csv", "restored.pnpk", "restored.png"}
    assert "PSNR input" in capsys.readouterr().out


def test_deblur_cli_bad_kernel(tmp_path):
    assert main(["deblur", "--kernel", "star:3", "--out", str(tmp_path)]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["deblur", "--solver", "sgd"])
    assert exc.value.code == 2


class TestVerify:
    def test_tweedie_suite(self, capsys):
        assert main(["verify", "--suite", "tweedie"]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 4 and "[FAIL]" not in out

    def test_widened_sample_box_trips_guard(self, capsys):
        assert main(["verify", "--suite", "theorem1", "--sample-margin", "0.5"]) == 1
        out = capsys.readouterr().out
        assert "[FAIL] step rule" in out and "note:" in out and "eta = -" in out

    def test_step_rule_independent_of_gamma(self):
        # h_mmse carries a 1/gamma factor, so gamma * M is the same at every step size
        res_a, a = run_theorem1(max_iter=5)
        res_b, b = run_theorem1(gamma=10.0, max_iter=5)
        assert a["gamma"] * a["M"] == pytest.approx(b["gamma"] * b["M"], rel=1e-6)

    def test_report_has_relative_change_metric(self, tmp_path):
        res, det = run_theorem1(max_iter=20, trace_csv=tmp_path / "t.csv")
        header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
        assert "rel_change" in header
        assert any("relative change" in line for line in res.lines)
