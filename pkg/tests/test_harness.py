"""Harness tests: pinned configs, determinism, report formats, CLI surface."""

import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sparseproc import harness
from sparseproc.cli import main
from sparseproc.harness import (CaseConfig, builtin_case, emit_histogram, run_case,
                                run_hawkes_support, report_to_json, write_per_rep_csv)
from sparseproc.simulate import HawkesSpec, InarSpec


class TestBuiltinCases:
    def test_case1_pins(self):
        cfg = builtin_case("case1")
        assert cfg.n == 2000 and cfg.p == 10 and cfg.tau == 0.05
        assert_allclose(cfg.model.alpha[:4], [0.3, 0.2, 0.2, 0.2])
        assert np.all(cfg.model.alpha[4:] == 0)
        assert cfg.model.mu_eps == 0.5
        assert cfg.support_true == (0, 1, 2, 3)

    def test_case2_order(self):
        cfg = builtin_case("case2")
        assert cfg.p == 20 and cfg.model.alpha.size == 20

    def test_case3_block_matrix(self):
        cfg = builtin_case("case3")
        a = cfg.model.a_matrix
        assert a.shape == (100, 100)
        block = np.array([[0.3, 0.2, 0.2, 0.2],
                          [0.2, 0.3, 0.2, 0.2],
                          [0.0, 0.2, 0.3, 0.2],
                          [0.0, 0.0, 0.2, 0.3]])
        for b in range(25):
            assert_array_equal(a[4 * b: 4 * b + 4, 4 * b: 4 * b + 4], block)
        # nothing off the diagonal blocks
        assert a.sum() == pytest.approx(25 * block.sum())
        assert_array_equal(cfg.model.eta, np.full(100, 0.5))

    def test_case4_dimension(self):
        assert builtin_case("case4").p == 200

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            builtin_case("case9")

    def test_config_json_roundtrip(self):
        cfg = builtin_case("case3", reps=5)
        back = CaseConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back.case_id == "case3"
        assert_array_equal(back.model.a_matrix, cfg.model.a_matrix)
        assert back.support_true == cfg.support_true


class TestRunCase:
    def test_single_rep_aggregates(self):
        cfg = builtin_case("case1", n=600, reps=1)
        rep = run_case(cfg)
        record = rep.per_rep[0]
        assert rep.reps == 1 and rep.failures == 0
        assert rep.mean_linf_first == pytest.approx(record["linf1"])
        assert rep.mean_l2_two == pytest.approx(record["l22"])
        assert rep.selection_proportion == float(record["sel"])

    def test_deterministic_reports(self):
        cfg = builtin_case("case1", n=500, reps=6)
        a = run_case(cfg, jobs=1)
        b = run_case(cfg, jobs=1)
        assert report_to_json(a) == report_to_json(b)

    def test_jobs_invariance(self):
        cfg = builtin_case("case1", n=500, reps=6)
        a = run_case(cfg, jobs=1)
        b = run_case(cfg, jobs=2)
        assert report_to_json(a) == report_to_json(b)

    def test_failure_accounting(self, monkeypatch):
        cfg = builtin_case("case1", n=500, reps=5)
        real = harness._count_rep

        def flaky(config, rep, u):
            if rep == 3:
                raise RuntimeError("synthetic failure")
            return real(config, rep, u)

        monkeypatch.setattr(harness, "_count_rep", flaky)
        rep = run_case(cfg, jobs=1)
        assert rep.failures == 1
        assert len(rep.per_rep) == 5
        failed = [r for r in rep.per_rep if r["failed"]]
        assert len(failed) == 1 and "synthetic failure" in failed[0]["error"]

    def test_rate_lambda_mode(self):
        cfg = builtin_case("case1", n=500, reps=2, lambda_mode="rate")
        cfg.rate_c = 2.0
        rep = run_case(cfg)
        expected = 2.0 * np.sqrt(np.log(10) / 500)
        assert rep.per_rep[0]["lambda"] == pytest.approx(expected)


class TestHawkesSupport:
    def test_zero_kernel_mostly_empty_support(self):
        spec = HawkesSpec(eta=1.0, kernel_breakpoints=np.array([1.0]),
                          kernel_values=np.array([0.0]), horizon=400.0)
        cfg = CaseConfig(case_id="hawkes", model=spec, n=4000, p=20, reps=20,
                         lambda_mode="cv", tau=0.05, base_seed=5,
                         hawkes_bin_delta=0.1)
        rep = run_hawkes_support(cfg, jobs=2)
        zero_frac = rep["zero_support_fraction"]
        assert zero_frac >= 0.9

    def test_halved_delta_stable_tau(self):
        spec = HawkesSpec(eta=1.0, kernel_breakpoints=np.array([1.0]),
                          kernel_values=np.array([0.8]), horizon=600.0)
        out = {}
        for delta, p in ((0.1, 20), (0.05, 40)):
            cfg = CaseConfig(case_id="hawkes", model=spec, n=int(600 / delta), p=p,
                             reps=10, lambda_mode="cv", tau=0.05, base_seed=11,
                             hawkes_bin_delta=delta)
            out[delta] = run_hawkes_support(cfg, jobs=2)["mean_tau_hat"]
        # s_hat roughly doubles so tau_hat = s_hat * delta stays put
        assert abs(out[0.05] - out[0.1]) <= 0.3 * out[0.1]

    def test_wrong_model_rejected(self):
        cfg = builtin_case("case1", reps=1)
        with pytest.raises(ValueError):
            run_hawkes_support(cfg)


class TestOutputs:
    def test_histogram_empty(self, tmp_path):
        path = tmp_path / "h.csv"
        emit_histogram([], 5, path)
        rows = list(csv.reader(open(path)))
        assert rows == [["bin_left", "bin_right", "count"]]

    def test_histogram_constant_input(self, tmp_path):
        path = tmp_path / "h.csv"
        emit_histogram([2.0] * 7, 4, path)
        rows = list(csv.reader(open(path)))[1:]
        counts = [int(r[2]) for r in rows]
        assert sum(counts) == 7
        assert sum(c > 0 for c in counts) == 1

    def test_histogram_counts_sum(self, tmp_path):
        rng = np.random.default_rng(0)
        stats = rng.standard_normal(257)
        path = tmp_path / "h.csv"
        emit_histogram(stats, 12, path)
        rows = list(csv.reader(open(path)))[1:]
        assert sum(int(r[2]) for r in rows) == 257
        assert len(rows) == 12

    def test_per_rep_csv_columns(self, tmp_path):
        cfg = builtin_case("case1", n=500, reps=3)
        rep = run_case(cfg)
        path = tmp_path / "reps.csv"
        write_per_rep_csv(rep, path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["rep", "linf1", "l21", "sel", "linf2", "l22",
                           "proj_stat", "failed"]
        assert len(rows) == 4

    def test_report_json_schema(self):
        cfg = builtin_case("case1", n=500, reps=2)
        doc = json.loads(report_to_json(run_case(cfg)))
        assert doc["schema"] == 1
        assert doc["case_id"] == "case1"
        assert len(doc["per_rep"]) == 2


class TestCli:
    def test_simulate_fit_cv_pipeline(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        json.dump({"model": "inar", "mu_eps": 0.5,
                   "alpha": [0.3, 0.2, 0.2, 0.2, 0, 0, 0, 0, 0, 0],
                   "burn_in": 200}, open(spec_path, "w"))
        series = tmp_path / "series.csv"
        assert main(["simulate", "--config", str(spec_path), "--n", "600",
                     "--seed", "3", "--out", str(series)]) == 0
        fit_path = tmp_path / "fit.json"
        assert main(["fit", "--series", str(series), "--order", "10",
                     "--lambda", "0.15", "--out", str(fit_path)]) == 0
        fit = json.load(open(fit_path))
        assert "support" in fit and fit["first_step"]["status"] == "optimal"
        cv_path = tmp_path / "cv.json"
        assert main(["cv", "--series", str(series), "--order", "10",
                     "--folds", "4", "--out", str(cv_path)]) == 0
        assert json.load(open(cv_path))["chosen_lambda"] > 0

    def test_experiment_and_artifacts(self, tmp_path):
        out = tmp_path / "report.json"
        hist = tmp_path / "hist.csv"
        per = tmp_path / "reps.csv"
        rc = main(["experiment", "--case", "case1", "--reps", "3", "--n", "500",
                   "--seed", "7", "--out", str(out), "--hist", str(hist),
                   "--per-rep", str(per)])
        assert rc == 0
        assert json.load(open(out))["reps"] == 3
        assert open(hist).readline().startswith("bin_left")
        assert len(list(csv.reader(open(per)))) == 4

    def test_hawkes_support_verb(self, tmp_path):
        out = tmp_path / "hk.json"
        rc = main(["hawkes-support", "--reps", "2", "--n", "200", "--seed", "1",
                   "--jobs", "1", "--out", str(out)])
        assert rc == 0
        assert json.load(open(out))["tau_true"] == 1.0

    def test_finfty_verb(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        json.dump({"model": "inar", "mu_eps": 1.0, "alpha": [0.4, 0.2],
                   "burn_in": 100}, open(spec_path, "w"))
        series = tmp_path / "s.csv"
        main(["simulate", "--config", str(spec_path), "--n", "500",
              "--seed", "2", "--out", str(series)])
        out = tmp_path / "f.json"
        rc = main(["finfty", "--series", str(series), "--order", "2",
                   "--support", "0,1", "--samples", "500", "--out", str(out)])
        assert rc == 0
        assert json.load(open(out))["value"] > 0

    def test_config_error_exit_code(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
        bad = tmp_path / "bad.json"
        json.dump({"model": "inar", "mu_eps": 0.5, "alpha": [0.9, 0.9]}, open(bad, "w"))
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_numeric_error_exit_code(self, tmp_path):
        # constant diffusion path -> degenerate quadratic variation
        series = tmp_path / "flat.csv"
        with open(series, "w") as fh:
            fh.write("t,x1\n")
            for k in range(20):
                fh.write(f"{k * 0.1},1.0\n")
        rc = main(["fit", "--series", str(series), "--model", "diffusion",
                   "--delta", "0.1", "--lambda", "0.1"])
        assert rc == 3
