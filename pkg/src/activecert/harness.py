"""Repeated-trial experiments: coverage, tightness and planner comparison.

Each trial draws its own batch from a seed derived from the master seed
and the trial's coordinates ``(experiment code, row index, trial index)``,
so trials are independent and the report is a deterministic function of
the configuration.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import stats

from .bounds import (
    GapInfo,
    ProblemParams,
    angle_certificate,
    estimate_nu,
    expectation_markov_bound,
    prior_work_samples,
    relative_error_bound,
    required_samples,
)
from .errors import ActiveCertError, ArgumentError, ConfigError
from .perturbation import GAP_RTOL
from .sampling import (
    RNG_ALGORITHM,
    derive_seed,
    draw_batch,
    estimate,
    function_from_spec,
    pad_function_spec,
)
from .spectral import eig_sym, principal_angle_sin, spectral_norm

EXPERIMENTS = ("coverage", "tightness", "comparison")
_EXPERIMENT_CODE = {"coverage": 1, "tightness": 2, "comparison": 3}
CONFIDENCE = 0.95
SEED_RULE = (
    "trial seed = first uint64 of numpy SeedSequence(master_seed, "
    "spawn_key=(experiment_code, row_index, trial_index)); "
    "experiment_code coverage=1 tightness=2 comparison=3; the comparison nu estimate uses key (3, 0, 0)"
)


def clopper_pearson(successes: int, trials: int, confidence: float = CONFIDENCE):
    """Exact two-sided binomial confidence interval."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ArgumentError(f"invalid binomial counts {successes}/{trials}")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lo, hi


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    function: dict
    trials: int
    samples: Union[str, tuple]
    epsilon: float
    delta: float
    k: Optional[int] = None
    master_seed: Optional[int] = None
    name: str = "experiment"
    pad_dims: tuple = ()
    nu_samples: int = 100_000

    @property
    def plan_mode(self) -> bool:
        return self.samples == "plan"

    @classmethod
    def from_dict(cls, d: dict, master_seed: Optional[int] = None) -> ExperimentConfig:
        """Validate a JSON-style mapping; every problem is reported by field name."""
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        errors = []

        def get(name, default=None, required=True):
            if name in d:
                return d[name]
            if required:
                errors.append(f"{name}: required field missing")
            return default

        known = {
            "experiment", "function", "trials", "samples", "epsilon", "delta",
            "k", "name", "pad_dims", "nu_samples", "master_seed",
        }
        for key in sorted(set(d) - known):
            errors.append(f"{key}: unknown field")

        experiment = get("experiment")
        if experiment is not None and experiment not in EXPERIMENTS:
            errors.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
        function = get("function")
        if function is not None:
            try:
                function_from_spec(function)
            except ActiveCertError as exc:
                errors.append(f"function: {exc}")
        trials = get("trials", 1, required=experiment != "comparison")
        if not (isinstance(trials, int) and not isinstance(trials, bool) and trials >= 1):
            errors.append("trials: must be an integer >= 1")
        samples = get("samples", "plan", required=False)
        if samples == "plan":
            pass
        elif isinstance(samples, list) and samples and all(
            isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in samples
        ):
            samples = tuple(samples)
        else:
            errors.append('samples: must be "plan" or a non-empty list of integers >= 1')
        for name in ("epsilon", "delta"):
            val = get(name)
            if val is not None and not (isinstance(val, (int, float)) and 0 < val < 1):
                errors.append(f"{name}: must be a number in (0, 1)")
        k = get("k", None, required=False)
        if k is not None and not (isinstance(k, int) and k >= 1):
            errors.append("k: must be an integer >= 1")
        name = get("name", "experiment", required=False)
        if not (isinstance(name, str) and name and all(c.isalnum() or c in "-_." for c in name)):
            errors.append("name: must be a non-empty string of [A-Za-z0-9._-]")
        pad_dims = get("pad_dims", [], required=experiment == "comparison")
        if not (isinstance(pad_dims, list) and all(isinstance(m, int) and m >= 1 for m in pad_dims)):
            errors.append("pad_dims: must be a list of positive integers")
            pad_dims = []
        elif experiment == "comparison" and not pad_dims:
            errors.append("pad_dims: comparison needs at least one dimension")
        nu_samples = get("nu_samples", 100_000, required=False)
        if not (isinstance(nu_samples, int) and nu_samples >= 2):
            errors.append("nu_samples: must be an integer >= 2")
        seed = master_seed if master_seed is not None else d.get("master_seed")
        if seed is not None and not (isinstance(seed, int) and seed >= 0):
            errors.append("master_seed: must be a non-negative integer")
        if errors:
            raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
        return cls(
            experiment=experiment,
            function=function,
            trials=trials,
            samples=samples,
            epsilon=float(d["epsilon"]),
            delta=float(d["delta"]),
            k=k,
            master_seed=seed,
            name=name,
            pad_dims=tuple(pad_dims),
            nu_samples=nu_samples,
        )

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "function": self.function,
            "trials": self.trials,
            "samples": self.samples if self.plan_mode else list(self.samples),
            "epsilon": self.epsilon,
            "delta": self.delta,
            "k": self.k,
            "master_seed": self.master_seed,
            "name": self.name,
            "pad_dims": list(self.pad_dims),
            "nu_samples": self.nu_samples,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ExperimentReport:
    experiment: str
    name: str
    columns: dict
    rows: list
    checks: dict
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return _json_safe(
            {
                "experiment": self.experiment,
                "name": self.name,
                "passed": self.passed,
                "checks": self.checks,
                "summary": self.summary,
                "rows": self.rows,
                "provenance": self.provenance,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        for col, doc in self.columns.items():
            buf.write(f"# {col}: {doc}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.columns))
        for row in self.rows:
            w.writerow([_csv_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        json_path = out / f"{self.name}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(self.to_json())
        return csv_path, json_path


def _csv_cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return ""
    return str(x)


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# --- shared pieces -----------------------------------------------------------


def _setup(cfg: ExperimentConfig):
    if cfg.master_seed is None:
        raise ConfigError("master_seed: required (pass --seed)")
    f = function_from_spec(cfg.function)
    if f.analytic_E is None:
        raise ConfigError("function: experiment needs an analytic E")
    params = ProblemParams.from_function(f, delta=cfg.delta, epsilon=cfg.epsilon)
    return f, params


def _sample_sizes(cfg, params):
    if cfg.plan_mode:
        return [required_samples(params)]
    return list(cfg.samples)


def _provenance(cfg, seeds_by_row):
    return {
        "master_seed": cfg.master_seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "rng": RNG_ALGORITHM,
        "seed_rule": SEED_RULE,
        "trial_seeds": seeds_by_row,
    }


def _run_trials(f, e, n, trials, master, code, row, k=None, s_true=None):
    rel = np.empty(trials)
    sin = np.full(trials, np.nan)
    well = np.ones(trials, dtype=bool)
    seeds = []
    for t in range(trials):
        seed = derive_seed(master, code, row, t)
        seeds.append(seed)
        res = estimate(draw_batch(f, n, seed), e)
        rel[t] = res.rel_error
        if k is not None:
            ges = res.e_hat.eigensystem()
            pgap = float(ges.values[k - 1] - ges.values[k])
            well[t] = pgap > GAP_RTOL * max(abs(float(ges.values[0])), spectral_norm(e))
            if well[t]:
                sin[t] = principal_angle_sin(s_true, ges.leading(k))
    return rel, sin, well, seeds


def _rate_cols(prefix, count, trials):
    lo, hi = clopper_pearson(count, trials)
    return {
        f"{prefix}_count": count,
        f"{prefix}_rate": count / trials,
        f"{prefix}_cp_low": lo,
        f"{prefix}_cp_high": hi,
    }


COVERAGE_COLUMNS = {
    "n": "sample count per trial",
    "trials": "number of independent trials",
    "planned_n": "sample-size planner output at (epsilon, delta)",
    "guaranteed": "true when n >= planned_n",
    "epsilon": "target relative tolerance",
    "delta": "target failure probability",
    "rel_bound": "relative-error bound at n holding with prob. 1-delta",
    "exceed_eps_count": "trials with rel_err > epsilon",
    "exceed_eps_rate": "empirical P[rel_err > epsilon]",
    "exceed_eps_cp_low": "Clopper-Pearson 95% lower limit",
    "exceed_eps_cp_high": "Clopper-Pearson 95% upper limit",
    "exceed_bound_count": "trials with rel_err > rel_bound",
    "exceed_bound_rate": "empirical P[rel_err > rel_bound]",
    "exceed_bound_cp_low": "Clopper-Pearson 95% lower limit",
    "exceed_bound_cp_high": "Clopper-Pearson 95% upper limit",
    "rel_err_mean": "mean of ||E_hat - E||_2 / ||E||_2",
    "rel_err_q50": "median relative error",
    "rel_err_q90": "0.9-quantile of relative error",
    "rel_err_q_1mdelta": "(1-delta)-quantile of relative error",
    "rel_err_max": "largest relative error",
    "k": "dominant subspace dimension (blank if not requested)",
    "gap": "lambda_k - lambda_k+1 of E",
    "angle_bound": "4 ||E||_2 epsilon / gap",
    "angle_assumptions_ok": "epsilon < gap / (4 ||E||_2)",
    "exceed_angle_count": "trials with sin angle > angle_bound or ill-defined subspace",
    "exceed_angle_rate": "empirical P[sin angle > angle_bound]",
    "exceed_angle_cp_low": "Clopper-Pearson 95% lower limit",
    "exceed_angle_cp_high": "Clopper-Pearson 95% upper limit",
    "sin_mean": "mean sine of largest principal angle (well-defined trials)",
    "sin_q50": "median sine",
    "sin_max": "largest sine",
    "ill_defined_count": "trials where E_hat has no gap at k",
    "ill_defined_nonexceed": "ill-defined trials among those with rel_err <= epsilon",
}


def run_coverage(cfg: ExperimentConfig) -> ExperimentReport:
    """Empirical failure rates of the relative-error (and angle) guarantees."""
    f, params = _setup(cfg)
    e = f.analytic_E
    planned = required_samples(params)
    k = cfg.k
    s_true = cert = None
    if k is not None:
        es = eig_sym(e)
        if not 1 <= k < f.dim:
            raise ConfigError(f"k: must lie in [1, {f.dim - 1}]")
        g = GapInfo.from_eigensystem(es, k)
        cert = angle_certificate(params, g)
        s_true = es.leading(k)

    rows, checks, seeds_by_row = [], {}, []
    for i, n in enumerate(_sample_sizes(cfg, params)):
        rel, sin, well, seeds = _run_trials(
            f, e, n, cfg.trials, cfg.master_seed, _EXPERIMENT_CODE["coverage"], i, k, s_true
        )
        seeds_by_row.append(seeds)
        bound = relative_error_bound(params.replace(n=n)).value
        exceed_eps = rel > cfg.epsilon
        row = {
            "n": n,
            "trials": cfg.trials,
            "planned_n": planned,
            "guaranteed": n >= planned,
            "epsilon": cfg.epsilon,
            "delta": cfg.delta,
            "rel_bound": bound,
            **_rate_cols("exceed_eps", int(exceed_eps.sum()), cfg.trials),
            **_rate_cols("exceed_bound", int((rel > bound).sum()), cfg.trials),
            "rel_err_mean": float(rel.mean()),
            "rel_err_q50": float(np.quantile(rel, 0.5)),
            "rel_err_q90": float(np.quantile(rel, 0.9)),
            "rel_err_q_1mdelta": float(np.quantile(rel, 1 - cfg.delta)),
            "rel_err_max": float(rel.max()),
        }
        tag = f"n={n}"
        checks[f"{tag}: rel_bound exceedance cp_low <= delta"] = row["exceed_bound_cp_low"] <= cfg.delta
        if row["guaranteed"]:
            checks[f"{tag}: epsilon exceedance cp_low <= delta"] = row["exceed_eps_cp_low"] <= cfg.delta
        if k is not None:
            exceed_angle = ~well | (np.nan_to_num(sin, nan=np.inf) > cert.value)
            finite = sin[well]
            row.update(
                {
                    "k": k,
                    "gap": cert.intermediates["gap"],
                    "angle_bound": cert.value,
                    "angle_assumptions_ok": cert.assumptions_ok,
                    **_rate_cols("exceed_angle", int(exceed_angle.sum()), cfg.trials),
                    "sin_mean": float(finite.mean()) if finite.size else None,
                    "sin_q50": float(np.quantile(finite, 0.5)) if finite.size else None,
                    "sin_max": float(finite.max()) if finite.size else None,
                    "ill_defined_count": int((~well).sum()),
                    "ill_defined_nonexceed": int((~well & ~exceed_eps).sum()),
                }
            )
            if row["guaranteed"] and cert.assumptions_ok:
                checks[f"{tag}: angle exceedance cp_low <= delta"] = row["exceed_angle_cp_low"] <= cfg.delta
                checks[f"{tag}: subspace well-defined in non-exceedance trials"] = row["ill_defined_nonexceed"] == 0
        rows.append(row)

    summary = {
        "L": params.L,
        "norm_E": params.norm_E,
        "intdim_E": params.intdim_E,
        "smoothness": params.smoothness,
        "planned_n": planned,
    }
    if cert is not None:
        summary["angle_certificate"] = cert.to_dict()
    return ExperimentReport(
        "coverage", cfg.name, COVERAGE_COLUMNS, rows, checks, summary,
        _provenance(cfg, seeds_by_row),
    )


TIGHTNESS_COLUMNS = {
    "n": "sample count per trial",
    "trials": "number of independent trials",
    "delta": "failure probability",
    "predicted_t2": "relative-error bound from the exponential tail bound",
    "predicted_markov": "relative error from expectation bound plus Markov",
    "markov_assumptions_ok": "intdim(E) >= 2",
    "observed_q": "observed (1-delta)-quantile of relative error",
    "slack_t2": "predicted_t2 / observed_q",
    "slack_markov": "predicted_markov / observed_q",
}


def run_tightness_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Compare both predicted tolerances with the observed error quantile per n."""
    f, params = _setup(cfg)
    e = f.analytic_E
    rows, checks, seeds_by_row = [], {}, []
    for i, n in enumerate(_sample_sizes(cfg, params)):
        rel, _, _, seeds = _run_trials(
            f, e, n, cfg.trials, cfg.master_seed, _EXPERIMENT_CODE["tightness"], i
        )
        seeds_by_row.append(seeds)
        p_n = params.replace(n=n)
        t2 = relative_error_bound(p_n).value
        mk = expectation_markov_bound(p_n)
        q = float(np.quantile(rel, 1 - cfg.delta))
        rows.append(
            {
                "n": n,
                "trials": cfg.trials,
                "delta": cfg.delta,
                "predicted_t2": t2,
                "predicted_markov": mk.value / params.norm_E,
                "markov_assumptions_ok": mk.assumptions_ok,
                "observed_q": q,
                "slack_t2": t2 / q if q > 0 else None,
                "slack_markov": mk.value / params.norm_E / q if q > 0 else None,
            }
        )
        checks[f"n={n}: predicted_t2 >= observed (1-delta)-quantile"] = t2 >= q

    summary = {"intdim_E": params.intdim_E, "smoothness": params.smoothness}
    ns = np.array([r["n"] for r in rows], dtype=float)
    qs = np.array([r["observed_q"] for r in rows])
    if len(rows) >= 2 and np.all(qs > 0) and np.unique(ns).size >= 2:
        slope, _ = np.polyfit(np.log(ns), np.log(qs), 1)
        summary["fitted_exponent"] = float(slope)
    return ExperimentReport(
        "tightness", cfg.name, TIGHTNESS_COLUMNS, rows, checks, summary,
        _provenance(cfg, seeds_by_row),
    )


COMPARISON_COLUMNS = {
    "m": "ambient dimension after zero padding",
    "L": "gradient norm bound",
    "norm_E": "||E||_2",
    "intdim_E": "intrinsic dimension of E",
    "smoothness": "L^2 / ||E||_2",
    "t4_samples": "dimension-free planner output",
    "nu": "Monte Carlo estimate of the variance norm nu",
    "t5_samples": "prior-work expression with implied constant 1",
    "t5_branch_L": "L^2 / (lambda_1 epsilon)",
    "t5_branch_nu": "nu / (lambda_1^2 epsilon^2)",
    "log_2m": "ln(2m)",
}


def run_comparison(cfg: ExperimentConfig) -> ExperimentReport:
    """Planner outputs side by side as the function is padded to higher m.

    Zero padding leaves ``nu`` unchanged, so it is estimated once on the
    unpadded function and reused for every ``m``.
    """
    f0, _ = _setup(cfg)
    nu_seed = derive_seed(cfg.master_seed, _EXPERIMENT_CODE["comparison"], 0, 0)
    nu = estimate_nu(f0, cfg.nu_samples, nu_seed)
    rows = []
    for m in cfg.pad_dims:
        if m < f0.dim:
            raise ConfigError(f"pad_dims: {m} is below the function dimension {f0.dim}")
        f = function_from_spec(pad_function_spec(cfg.function, m))
        params = ProblemParams.from_function(f, delta=cfg.delta, epsilon=cfg.epsilon)
        t5 = prior_work_samples(params.norm_E, nu.value, params.L, cfg.epsilon, m)
        rows.append(
            {
                "m": m,
                "L": params.L,
                "norm_E": params.norm_E,
                "intdim_E": params.intdim_E,
                "smoothness": params.smoothness,
                "t4_samples": required_samples(params),
                "nu": nu.value,
                "t5_samples": t5.value,
                "t5_branch_L": t5.intermediates["branch_L"],
                "t5_branch_nu": t5.intermediates["branch_nu"],
                "log_2m": t5.intermediates["log_2m"],
            }
        )
    checks = {
        "t4 planner unchanged by padding": len({r["t4_samples"] for r in rows}) == 1,
    }
    base = rows[0]
    checks["t5 expression scales with ln(2m)"] = all(
        math.isclose(r["t5_samples"] / base["t5_samples"], r["log_2m"] / base["log_2m"], rel_tol=1e-12)
        for r in rows
    )
    summary = {
        "nu": nu.value,
        "nu_stderr": nu.stderr,
        "nu_samples": nu.n_ref,
        "nu_seed": nu.seed,
        "notes": [
            "prior-work expression: comparison only - implied constant unknown",
            "prior-work success probability unspecified; no delta attached",
        ],
    }
    return ExperimentReport(
        "comparison", cfg.name, COMPARISON_COLUMNS, rows, checks, summary,
        _provenance(cfg, [[nu_seed]]),
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    runner = {
        "coverage": run_coverage,
        "tightness": run_tightness_sweep,
        "comparison": run_comparison,
    }[cfg.experiment]
    return runner(cfg)
