import json
import math

import numpy as np
import pytest
from scipy import stats

from activecert.errors import ConfigError
from activecert.harness import (
    ExperimentConfig,
    clopper_pearson,
    run_comparison,
    run_coverage,
    run_experiment,
    run_tightness_sweep,
)

QUAD4 = {"kind": "quadratic", "A": np.diag([2.0, 1.0, 0.5, 0.25]).tolist()}


def config(seed=7, **kw):
    d = {"experiment": "coverage", "function": QUAD4, "trials": 50, "epsilon": 0.5, "delta": 0.1}
    d.update(kw)
    return ExperimentConfig.from_dict(d, master_seed=seed)


class TestClopperPearson:
    def test_zero_successes(self):
        lo, hi = clopper_pearson(0, 1000)
        assert lo == 0.0
        assert hi == pytest.approx(1 - 0.025 ** (1 / 1000), rel=1e-10)

    def test_all_successes(self):
        lo, hi = clopper_pearson(20, 20)
        assert hi == 1.0
        assert lo == pytest.approx(0.025 ** (1 / 20), rel=1e-10)

    def test_interior_matches_binomial_tails(self):
        lo, hi = clopper_pearson(7, 40)
        assert stats.binom.sf(6, 40, lo) == pytest.approx(0.025, rel=1e-8)
        assert stats.binom.cdf(7, 40, hi) == pytest.approx(0.025, rel=1e-8)

    @pytest.mark.parametrize("trials", [10, 100, 1000])
    def test_width_shrinks_when_trials_double(self, trials):
        lo1, hi1 = clopper_pearson(trials // 10, trials)
        lo2, hi2 = clopper_pearson(2 * (trials // 10), 2 * trials)
        assert hi2 - lo2 < hi1 - lo1


class TestConfig:
    def test_field_level_messages(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict(
                {"experiment": "coverage", "function": {"kind": "cubic"}, "trials": 0,
                 "epsilon": 1.5, "delta": 0.1, "bogus": 1},
                master_seed=1,
            )
        msg = str(exc.value)
        for field in ("function:", "trials:", "epsilon:", "bogus: unknown field"):
            assert field in msg

    def test_missing_fields(self):
        with pytest.raises(ConfigError, match="delta: required"):
            ExperimentConfig.from_dict({"experiment": "coverage", "function": QUAD4, "trials": 1, "epsilon": 0.5})

    def test_comparison_needs_pad_dims(self):
        with pytest.raises(ConfigError, match="pad_dims"):
            ExperimentConfig.from_dict(
                {"experiment": "comparison", "function": QUAD4, "epsilon": 0.5, "delta": 0.1}, master_seed=1
            )

    def test_seed_required_to_run(self):
        cfg = ExperimentConfig.from_dict(
            {"experiment": "coverage", "function": QUAD4, "trials": 1, "epsilon": 0.5, "delta": 0.1}
        )
        with pytest.raises(ConfigError, match="master_seed"):
            run_coverage(cfg)

    def test_hash_depends_on_seed(self):
        assert config(seed=1).config_hash() != config(seed=2).config_hash()
        assert config(seed=1).config_hash() == config(seed=1).config_hash()


class TestCoverage:
    def test_linear_zero_exceedance(self):
        cfg = ExperimentConfig.from_dict(
            {"experiment": "coverage", "function": {"kind": "linear", "c": [1.0, -1.0, 2.0]},
             "trials": 30, "samples": [1, 5, 40], "epsilon": 0.5, "delta": 0.1},
            master_seed=3,
        )
        report = run_coverage(cfg)
        assert report.passed
        for row in report.rows:
            assert row["rel_err_max"] == 0.0
            assert row["exceed_eps_count"] == 0 and row["exceed_bound_count"] == 0
            assert row["exceed_eps_cp_low"] == 0.0

    def test_plan_mode_row(self):
        report = run_coverage(config(trials=40))
        (row,) = report.rows
        assert row["n"] == row["planned_n"] == 169
        assert row["guaranteed"]
        assert 0 <= row["exceed_eps_rate"] <= 1
        assert report.passed

    def test_width_shrinks_with_trials(self):
        widths = []
        for trials in (100, 200):
            row = run_coverage(config(trials=trials, samples=[5])).rows[0]
            widths.append(row["exceed_eps_cp_high"] - row["exceed_eps_cp_low"])
        assert widths[1] < widths[0]

    def test_angle_columns_in_valid_regime(self):
        report = run_coverage(config(trials=100, epsilon=0.15, k=1))
        (row,) = report.rows
        assert row["angle_assumptions_ok"]
        assert row["angle_bound"] == pytest.approx(4 * (4 / 3) * 0.15 / 1.0, rel=1e-14)
        assert row["ill_defined_nonexceed"] == 0
        assert report.passed
        assert any("angle" in name for name in report.checks)

    def test_angle_outside_regime_not_asserted(self):
        report = run_coverage(config(trials=20, k=1))
        assert not report.rows[0]["angle_assumptions_ok"]
        assert not any("angle" in name for name in report.checks)

    def test_bad_k(self):
        with pytest.raises(ConfigError, match="k:"):
            run_coverage(config(trials=1, k=4))

    def test_csv_header_documents_columns(self):
        report = run_coverage(config(trials=5))
        lines = report.to_csv().splitlines()
        n_cols = len(report.columns)
        assert all(line.startswith("# ") for line in lines[:n_cols])
        assert lines[n_cols].split(",") == list(report.columns)
        assert len(lines) == n_cols + 2


class TestTightness:
    def test_sweep_soundness_and_exponent(self):
        cfg = ExperimentConfig.from_dict(
            {"experiment": "tightness", "function": QUAD4, "trials": 300,
             "samples": [25, 50, 100, 200, 400, 800, 1600], "epsilon": 0.5, "delta": 0.1},
            master_seed=11,
        )
        report = run_tightness_sweep(cfg)
        assert report.passed
        assert -0.6 <= report.summary["fitted_exponent"] <= -0.4
        for row in report.rows:
            assert row["predicted_t2"] >= row["observed_q"]
            assert row["slack_t2"] >= 1.0

    def test_markov_flag_for_small_intdim(self):
        cfg = ExperimentConfig.from_dict(
            {"experiment": "tightness", "function": QUAD4, "trials": 10,
             "samples": [20], "epsilon": 0.5, "delta": 0.1},
            master_seed=1,
        )
        assert run_tightness_sweep(cfg).rows[0]["markov_assumptions_ok"] is False


class TestComparison:
    def cfg(self, **kw):
        d = {"experiment": "comparison", "function": QUAD4, "epsilon": 0.5, "delta": 0.1,
             "pad_dims": [4, 8, 16], "nu_samples": 20_000}
        d.update(kw)
        return ExperimentConfig.from_dict(d, master_seed=5)

    def test_padding(self):
        report = run_comparison(self.cfg())
        assert report.passed
        t4 = [r["t4_samples"] for r in report.rows]
        assert t4 == [169, 169, 169]
        ratio = report.rows[-1]["t5_samples"] / report.rows[0]["t5_samples"]
        assert ratio == pytest.approx(math.log(32) / math.log(8), rel=1e-12)

    def test_pad_below_dim(self):
        with pytest.raises(ConfigError):
            run_comparison(self.cfg(pad_dims=[2]))


class TestReproducibility:
    @pytest.mark.parametrize("experiment", ["coverage", "tightness", "comparison"])
    def test_byte_identical(self, experiment, tmp_path):
        d = {"experiment": experiment, "function": QUAD4, "trials": 20, "samples": [30, 60],
             "epsilon": 0.3, "delta": 0.1, "k": 1, "pad_dims": [4, 6], "nu_samples": 5000,
             "name": "rep"}
        if experiment != "coverage":
            d.pop("k")
        outs = []
        for run in ("a", "b"):
            cfg = ExperimentConfig.from_dict(d, master_seed=2024)
            csv_path, json_path = run_experiment(cfg).write(tmp_path / run)
            outs.append((csv_path.read_bytes(), json_path.read_bytes()))
        assert outs[0] == outs[1]

    def test_seed_changes_output(self):
        a = run_coverage(config(trials=10, seed=1)).to_json()
        b = run_coverage(config(trials=10, seed=2)).to_json()
        assert a != b

    def test_json_has_provenance(self):
        d = json.loads(run_coverage(config(trials=3)).to_json())
        prov = d["provenance"]
        assert prov["master_seed"] == 7
        assert len(prov["config_hash"]) == 64
        assert len(prov["trial_seeds"][0]) == 3
