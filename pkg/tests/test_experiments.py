import csv
import json
import math

import numpy as np
import pytest
import yaml

from fypum.data import ChoiceDataset, write_csv
from fypum.experiments import (ConfigError, derive_seed, load_config, read_report_rows, run_convergence,
                               run_monte_carlo, run_scaling_validation, run_subsample_benchmark)
from fypum.experiments.cli import main
from fypum.experiments.config import nonseparable_matrix, parse_family
from fypum.experiments.harness import monte_carlo_plots
from fypum.experiments.plot import write_plot
from fypum.perturbation import Family

BETA = [1.0, 2.0, 0.5]


def mc_config(**kw):
    cfg = {"beta_true": BETA, "K": 3, "N_grid": [20, 40], "reps": 4, "seed": 7,
           "estimators": [{"kind": "fy", "name": "mle"}, {"kind": "l2"}, {"kind": "hinge"}]}
    cfg.update(kw)
    return cfg


def synthetic_bench(**kw):
    cfg = {"dataset": {"synthetic": {"N": 360, "beta_true": BETA, "rows_per_id": 9}}, "mode": "rows",
           "grid": [30, 360], "reps": 2, "seed": 5, "estimators": ["fy", "l2"]}
    cfg.update(kw)
    return cfg


class TestConfig:
    def test_derive_seed_stable(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
        assert 0 <= derive_seed(2 ** 64 - 1, 5) < 2 ** 64

    def test_derive_seed_rejects_negative(self):
        with pytest.raises(ConfigError):
            derive_seed(-1)

    def test_load_yaml_and_json(self, tmp_path):
        (tmp_path / "a.yaml").write_text("reps: 3\nN_grid: [20]\n")
        (tmp_path / "a.json").write_text(json.dumps({"reps": 3, "N_grid": [20]}))
        assert load_config(tmp_path / "a.yaml") == load_config(tmp_path / "a.json")

    @pytest.mark.parametrize("text", ["- 1\n- 2\n", "reps: [\n"])
    def test_load_bad(self, tmp_path, text):
        (tmp_path / "c.yaml").write_text(text)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.yaml")

    def test_nonseparable_family_from_seed(self):
        pert = parse_family({"name": "nonseparable", "mu": 2.0, "q_seed": 4}, 5)
        assert pert.family is Family.NONSEPARABLE_QUADRATIC
        np.testing.assert_array_equal(pert.Q, nonseparable_matrix(5, 4))
        assert np.linalg.eigvalsh(pert.Q).min() >= 1.0 - 1e-12

    @pytest.mark.parametrize("rec", ["nope", {"name": "quadratic", "mu": -1}, {"name": "nonseparable", "Q": [[1.0, 2.0]]}])
    def test_bad_family(self, rec):
        with pytest.raises(ConfigError):
            parse_family(rec, 3)


class TestConvergence:
    def test_one_iteration(self):
        for kind in ("extragradient", "fy"):
            rep = run_convergence({"N": 30, "K": 3, "d": 3, "iterations": 1, "seed": 2,
                                   "estimator": {"kind": kind}})
            assert len(rep.rows) == 1 and rep.rows[0]["iteration"] == 1
            assert rep.summary["trace_length"] == 1

    def test_dro_small_sample_instance(self):
        rep = run_convergence({"family": {"name": "nonseparable", "mu": 1.0}, "N": 50, "K": 10, "d": 10,
                               "seed": 1, "iterations": 5000, "tol_kkt": 1e-4,
                               "estimator": {"kind": "dro", "epsilon": 0.1, "kappa": 1.0}})
        assert rep.summary["status"] == "ok" and rep.summary["converged"]
        assert rep.rows[-1]["kkt"] < 1e-4
        assert rep.check_summary()

    def test_solver_failure_recorded(self):
        rep = run_convergence({"N": 20, "K": 3, "d": 3, "iterations": 5, "estimator": {"kind": "l2", "lambda_reg": -1}})
        assert rep.rows == [] and rep.summary["status"].startswith("ValueError")

    def test_unknown_estimator(self):
        with pytest.raises(ConfigError):
            run_convergence({"N": 20, "K": 3, "d": 3, "estimator": {"kind": "newton"}})


class TestMonteCarlo:
    def test_baseline_only(self):
        rep = run_monte_carlo(mc_config(N_grid=[20], reps=2, estimators=["fy"]))
        assert len(rep.rows) == 2
        assert "win" not in rep.columns and "win" not in rep.rows[0]
        assert "comparisons" not in rep.summary

    def test_row_count_and_order(self):
        rep = run_monte_carlo(mc_config())
        assert len(rep.rows) == 2 * 4 * 3
        keys = [(r["N"], r["rep"]) for r in rep.rows]
        assert keys == sorted(keys)
        assert all(r["status"] == "ok" for r in rep.rows)

    def test_summary_matches_rows(self):
        rep = run_monte_carlo(mc_config())
        assert rep.check_summary()
        per = rep.summary["per_N"]["20"]["l2"]
        mses = [r["mse"] for r in rep.rows if r["N"] == 20 and r["estimator"] == "l2"]
        assert per["mean_mse"] == math.fsum(mses) / 4

    def test_summary_from_written_rows(self, tmp_path):
        rep = run_monte_carlo(mc_config())
        rep.write(tmp_path)
        rows = read_report_rows(tmp_path / "report.csv")
        assert rep.summarize(rows, rep.config_echo) == rep.summary

    def test_adding_estimator_keeps_existing_rows(self):
        a = run_monte_carlo(mc_config(estimators=[{"kind": "fy", "name": "mle"}]))
        b = run_monte_carlo(mc_config())
        mle_b = [r["mse"] for r in b.rows if r["estimator"] == "mle"]
        assert [r["mse"] for r in a.rows] == mle_b

    def test_failures_excluded_and_counted(self, monkeypatch):
        from fypum.experiments import harness
        stack = harness.accelerated_stack

        def failing_stack(*args, lam=None, **kw):
            if lam is not None:
                raise FloatingPointError("batched solve failed")
            return stack(*args, **kw)

        def failing_single(pert, data, lam, *args, **kw):
            if data.y[0] == 0:
                raise FloatingPointError("diverged")
            return harness.estimate_fy_nag(pert, data, *args, **kw)

        monkeypatch.setattr(harness, "accelerated_stack", failing_stack)
        monkeypatch.setattr(harness, "estimate_l2_limit", failing_single)
        rep = run_monte_carlo(mc_config(N_grid=[20], reps=6, estimators=["fy", "l2"]))
        l2 = [r for r in rep.rows if r["estimator"] == "l2"]
        failed = [r for r in l2 if r["status"] != "ok"]
        assert failed and all(r["mse"] is None and r["win"] is None for r in failed)
        per = rep.summary["per_N"]["20"]["l2"]
        assert per["n_failed"] == len(failed) and per["n_ok"] == 6 - len(failed)
        assert rep.check_summary()

    def test_bad_dro_settings(self):
        with pytest.raises(ConfigError):
            run_monte_carlo(mc_config(estimators=["fy", {"kind": "dro", "epsilon": -0.1}]))

    @pytest.mark.parametrize("cfg", [dict(reps=1), dict(estimators=[]), dict(N_grid=[]),
                                     dict(estimators=[{"kind": "svm"}]), dict(beta_true="x")])
    def test_config_errors(self, cfg):
        with pytest.raises(ConfigError):
            run_monte_carlo(mc_config(**cfg))

    def test_misspecified_mle_worst(self):
        rep = run_monte_carlo({"beta_true": BETA, "K": 3, "N_grid": [20, 60, 100, 140, 180], "reps": 100,
                               "seed": 31, "family": {"name": "quadratic", "mu": 1.0},
                               "estimators": [{"kind": "fy", "name": "sparse_mle"}, {"kind": "l2"}, {"kind": "hinge"},
                                              {"kind": "fy", "name": "misspecified", "family": "shannon"}]})
        for N, per in rep.summary["per_N"].items():
            worst = max(per, key=lambda name: per[name]["mean_mse"])
            assert worst == "misspecified", N


class TestScaling:
    def test_ratio_at_least_one(self):
        rep = run_scaling_validation({"cases": 3, "reps": 4, "seed": 2, "grid_points": 5})
        assert len(rep.rows) == 15
        for case in rep.summary["per_case"].values():
            assert case["ratio"] >= 1.0
            assert case["mse_opt"] <= case["mse_pred"]
        assert rep.check_summary()

    def test_even_grid_gets_center(self):
        rep = run_scaling_validation({"cases": 1, "reps": 2, "grid_points": 4})
        assert sorted(r["log2_factor"] for r in rep.rows).count(0.0) == 1


class TestSubsample:
    def test_full_size_zero_gap(self):
        rep = run_subsample_benchmark(synthetic_bench(estimators=["fy"]))
        full = [r for r in rep.rows if r["size"] == 360]
        assert all(r["gap"] <= 1e-8 for r in full)
        assert all(r["loglik"] < 0 for r in rep.rows)

    def test_robust_gap_not_worse_at_small_n(self):
        cfg = {"dataset": {"synthetic": {"N": 2000, "beta_true": BETA}}, "mode": "rows",
               "grid": [20, 40, 60, 100, 200, 400], "reps": 30, "seed": 3, "estimators": ["fy", "l2", "hinge"]}
        per = run_subsample_benchmark(cfg).summary["per_size"]
        for n in ("20", "40", "60", "100"):
            for name in ("l2", "hinge"):
                assert per[n][name]["mean_gap"] <= per[n]["fy"]["mean_gap"], (n, name)
        assert per["20"]["l2"]["mean_gap"] < per["20"]["fy"]["mean_gap"]

    def test_decision_maker_grid(self):
        cfg = synthetic_bench(mode="decision_makers", grid=[6, 10, 20, 40],
                              dataset={"synthetic": {"N": 405, "beta_true": BETA, "rows_per_id": 9}})
        rep = run_subsample_benchmark(cfg)
        assert len(rep.rows) == 4 * 2 * 2
        assert {r["n_rows"] for r in rep.rows} == {54, 90, 180, 360}
        assert rep.check_summary()

    def test_csv_dataset(self, tmp_path):
        rng = np.random.default_rng(0)
        data = ChoiceDataset(rng.normal(size=(60, 3, 2)), rng.integers(0, 3, 60), np.arange(60) // 6)
        schema = write_csv(tmp_path / "d.csv", data)
        cfg = synthetic_bench(grid=[12], estimators=["fy"],
                              dataset={"path": str(tmp_path / "d.csv"),
                                       "schema": {"alternative_columns": schema.alternative_columns,
                                                  "choice_column": schema.choice_column,
                                                  "id_column": schema.id_column}})
        rep = run_subsample_benchmark(cfg)
        assert rep.summary["oracle"]["N_full"] == 60 and len(rep.rows) == 2

    def test_grid_too_large(self):
        with pytest.raises(ConfigError):
            run_subsample_benchmark(synthetic_bench(grid=[1000]))


class TestReport:
    def test_plot_has_sibling_csv(self, tmp_path):
        svg, path = write_plot(tmp_path / "p.svg", {"a": ([1, 2, 3], [0.5, 0.25, 0.0])}, logy=True)
        assert svg.read_text().startswith("<svg")
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows == [["series", "x", "y"], ["a", "1.0", "0.5"], ["a", "2.0", "0.25"], ["a", "3.0", "0.0"]]

    def test_plots_match_summary(self, tmp_path):
        rep = run_monte_carlo(mc_config())
        for svg in monte_carlo_plots(rep, tmp_path):
            with open(svg.replace(".svg", ".csv")) as fh:
                rows = list(csv.DictReader(fh))
            for r in rows:
                assert float(r["y"]) == rep.summary["per_N"][str(int(float(r["x"])))][r["series"]]["mean_mse"]

    def test_deterministic_rows(self):
        a, b = run_monte_carlo(mc_config()), run_monte_carlo(mc_config())
        assert a.csv_text() == b.csv_text()
        c = run_monte_carlo(mc_config(seed=8))
        assert a.csv_text() != c.csv_text()


class TestCli:
    def write(self, tmp_path, cfg, name="c.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(cfg))
        return str(path)

    def test_success_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["monte-carlo", "--config", self.write(tmp_path, mc_config()), "--out", str(out),
                     "--reps", "2", "--seed", "9"])
        assert code == 0
        assert {p.name for p in out.iterdir()} >= {"report.csv", "summary.json", "timing.json", "mse.svg", "mse.csv"}
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["reps"] == 2 and summary["config"]["seed"] == 9
        assert "wrote" in capsys.readouterr().out

    def test_every_plot_has_csv(self, tmp_path):
        cfg = synthetic_bench()
        out = tmp_path / "out"
        assert main(["subsample", "--config", self.write(tmp_path, cfg), "--out", str(out)]) == 0
        svgs = list(out.glob("*.svg"))
        assert svgs
        for svg in svgs:
            assert svg.with_suffix(".csv").exists()

    def test_no_plots(self, tmp_path):
        out = tmp_path / "out"
        assert main(["scaling", "--config", self.write(tmp_path, {"cases": 1, "reps": 2, "grid_points": 3}),
                     "--out", str(out), "--no-plots"]) == 0
        assert not list(out.glob("*.svg"))

    def test_config_error_exit_code(self, tmp_path, capsys):
        code = main(["monte-carlo", "--config", self.write(tmp_path, mc_config(reps=1)), "--out", str(tmp_path)])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["convergence", "--config", str(tmp_path / "none.yaml")]) == 2

    def test_dataset_error_exit_code(self, tmp_path, capsys):
        cfg = synthetic_bench(dataset={"path": str(tmp_path / "missing.csv")})
        assert main(["subsample", "--config", self.write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
        assert "dataset error" in capsys.readouterr().err

    def test_bad_seed(self, tmp_path):
        assert main(["monte-carlo", "--config", self.write(tmp_path, mc_config()), "--seed", "-3",
                     "--out", str(tmp_path)]) == 2
