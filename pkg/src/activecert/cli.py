"""Command-line interface.

Exit codes: 0 ok, 1 experiment soundness check failed, 2 usage or input
error, 3 domain error (e.g. no eigenvalue gap), 4 hypothesis not satisfied.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .bounds import (
    KINDS,
    GapInfo,
    ProblemParams,
    angle_certificate,
    bernstein_tail,
    expectation_markov_bound,
    gamma,
    prior_work_samples,
    relative_error_bound,
    required_samples,
    sample_size_certificate,
)
from .errors import (
    ActiveCertError,
    ConfigError,
    DomainError,
    EigenConvergenceError,
    MatrixFormatError,
    TheoremViolation,
)
from .harness import SEED_RULE, ExperimentConfig, run_experiment
from .perturbation import theorem_t1_check
from .sampling import RNG_ALGORITHM, function_from_spec
from .spectral import TOL_PSD, eig_sym, read_matrix

EXIT_OK = 0
EXIT_SOUNDNESS = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_HYPOTHESIS = 4


class UsageError(ActiveCertError):
    pass


def _add_problem_flags(p):
    p.add_argument("--L", type=float, help="gradient norm bound L")
    p.add_argument("--norm-E", type=float, dest="norm_E", help="||E||_2")
    p.add_argument("--intdim", type=float, help="intrinsic dimension of E")
    p.add_argument("--function", help="builtin function spec as inline JSON")
    p.add_argument("--config", help="JSON file whose 'function' field is a builtin spec")
    p.add_argument("--k", type=int, help="dominant subspace dimension")
    p.add_argument("--gap", type=float, help="lambda_k - lambda_k+1 (explicit mode)")
    p.add_argument("--lambda-k", type=float, dest="lambda_k", help="lambda_k (explicit mode)")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activecert",
        description="Certificates and experiments for Monte Carlo estimates of E = E[grad f grad f^T].",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="number of samples for a target relative error")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    _add_problem_flags(p)

    p = sub.add_parser("certify", help="evaluate a single bound with its intermediates")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--samples", type=int, help="sample count n")
    p.add_argument("--norm-P", type=float, dest="norm_P")
    p.add_argument("--intdim-P", type=float, dest="intdim_P")
    p.add_argument("--beta", type=float)
    p.add_argument("--eps-abs", type=float, dest="eps_abs")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--m", type=int)
    _add_problem_flags(p)

    p = sub.add_parser("verify", help="check the gap-based subspace guarantee on two matrices")
    p.add_argument("matrix_a", help="matrix file for E")
    p.add_argument("matrix_b", help="matrix file for E_hat")
    p.add_argument("--k", type=int, required=True)

    p = sub.add_parser("experiment", help="run a repeated-trial experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True, help="master seed (required)")
    p.add_argument("--out-dir", default=".", dest="out_dir")

    p = sub.add_parser("info", help="print version, RNG and tolerances")
    p.add_argument("--format", choices=("json", "text"), default="text")
    return parser


def _load_function(args):
    spec = None
    if args.function:
        try:
            spec = json.loads(args.function)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--function: invalid JSON ({exc})") from None
    elif args.config:
        try:
            spec = json.loads(Path(args.config).read_text()).get("function")
        except (OSError, json.JSONDecodeError, AttributeError) as exc:
            raise UsageError(f"--config: cannot read function spec ({exc})") from None
        if spec is None:
            raise UsageError("--config: no 'function' field")
    return function_from_spec(spec) if spec is not None else None


def _resolve(args, **extra):
    """ProblemParams plus an optional GapInfo from either a function spec or explicit flags."""
    f = _load_function(args)
    gap = None
    if f is not None:
        params = ProblemParams.from_function(f, **extra)
        if args.k is not None:
            gap = GapInfo.from_eigensystem(eig_sym(f.analytic_E), args.k)
        return params, gap
    missing = [flag for flag, val in (("--L", args.L), ("--norm-E", args.norm_E), ("--intdim", args.intdim)) if val is None]
    if missing:
        raise UsageError(f"missing {', '.join(missing)} (or give --function/--config)")
    params = ProblemParams(L=args.L, norm_E=args.norm_E, intdim_E=args.intdim, **extra)
    if args.k is not None:
        if args.gap is None:
            raise UsageError("--k in explicit mode needs --gap")
        lam_k = args.lambda_k if args.lambda_k is not None else args.norm_E
        gap = GapInfo(args.k, lam_k, lam_k - args.gap)
    return params, gap


def _emit(record: dict, fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(record, indent=2) + "\n")
    elif fmt == "csv":
        flat = _flatten(record)
        w = csv.writer(out, lineterminator="\n")
        w.writerow(list(flat))
        w.writerow([repr(v) if isinstance(v, float) else v for v in flat.values()])
    else:
        for key, val in _flatten(record).items():
            out.write(f"{key}: {val!r}\n" if isinstance(val, float) else f"{key}: {val}\n")


def _flatten(d, prefix=""):
    flat = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            flat.update(_flatten(val, name + "."))
        elif isinstance(val, list):
            flat[name] = "; ".join(str(v) for v in val)
        else:
            flat[name] = val
    return flat


def cmd_plan(args) -> int:
    params, gap = _resolve(args, delta=args.delta, epsilon=args.epsilon)
    n = required_samples(params)
    record = {
        "n": n,
        "gamma": gamma(params.replace(n=n)),
        "rel_bound_at_n": relative_error_bound(params.replace(n=n)).value,
        "L": params.L,
        "norm_E": params.norm_E,
        "intdim_E": params.intdim_E,
        "smoothness": params.smoothness,
        "epsilon": params.epsilon,
        "delta": params.delta,
    }
    code = EXIT_OK
    if gap is not None:
        cert = angle_certificate(params, gap)
        record["angle"] = cert.to_dict()
        if not cert.assumptions_ok:
            for v in cert.violations:
                print(f"hypothesis violated: {v}", file=sys.stderr)
            code = EXIT_HYPOTHESIS
    _emit(record, args.format)
    return code


def cmd_certify(args) -> int:
    kind = args.kind
    if kind == "bernstein_tail":
        need = {"--norm-P": args.norm_P, "--intdim-P": args.intdim_P, "--beta": args.beta, "--eps-abs": args.eps_abs}
        _require(need)
        cert = bernstein_tail(args.norm_P, args.intdim_P, args.beta, args.eps_abs)
    elif kind == "prior_work":
        need = {"--lambda1": args.lambda1, "--nu": args.nu, "--L": args.L, "--epsilon": args.epsilon, "--m": args.m}
        _require(need)
        cert = prior_work_samples(args.lambda1, args.nu, args.L, args.epsilon, args.m)
    else:
        extra = {"delta": args.delta}
        if kind in ("relative_error", "expectation_markov"):
            _require({"--samples": args.samples, "--delta": args.delta})
            extra["n"] = args.samples
        else:
            _require({"--epsilon": args.epsilon, "--delta": args.delta})
            extra["epsilon"] = args.epsilon
        params, gap = _resolve(args, **extra)
        if kind == "relative_error":
            cert = relative_error_bound(params)
        elif kind == "expectation_markov":
            cert = expectation_markov_bound(params)
        elif kind == "sample_size":
            cert = sample_size_certificate(params)
        else:
            if gap is None:
                raise UsageError("angle certificate needs --k (and --gap in explicit mode)")
            cert = angle_certificate(params, gap)
    _emit(cert.to_dict(), args.format)
    return EXIT_OK


def _require(flags: dict):
    missing = [k for k, v in flags.items() if v is None]
    if missing:
        raise UsageError(f"missing {', '.join(missing)}")


def cmd_verify(args) -> int:
    e = read_matrix(args.matrix_a)
    e_hat = read_matrix(args.matrix_b)
    report = theorem_t1_check(e, e_hat, args.k)
    _emit(report.to_dict(), "json")
    if not report.hypothesis_ok:
        print(
            f"hypothesis failed: ||E_hat - E||_2 = {report.tau!r} >= gap/4 = {report.gap_info.gap / 4!r}",
            file=sys.stderr,
        )
        return EXIT_HYPOTHESIS
    if report.violations:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_SOUNDNESS
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    cfg = ExperimentConfig.from_dict(raw, master_seed=args.seed)
    report = run_experiment(cfg)
    csv_path, json_path = report.write(args.out_dir)
    print(f"experiment: {cfg.experiment} ({cfg.name}), seed {cfg.master_seed}")
    for name, ok in report.checks.items():
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK if report.passed else EXIT_SOUNDNESS


def cmd_info(args) -> int:
    record = {
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seed_rule": SEED_RULE,
        "eigensolver": "cyclic Jacobi, row-wise sweep order",
        "tol_psd": TOL_PSD,
        "builtins": ["linear", "quadratic", "ridge_sum"],
        "certificate_kinds": list(KINDS),
        "exit_codes": {"0": "ok", "1": "soundness check failed", "2": "usage", "3": "domain", "4": "hypothesis failed"},
    }
    _emit(record, args.format)
    return EXIT_OK


_COMMANDS = {
    "plan": cmd_plan,
    "certify": cmd_certify,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, ConfigError, MatrixFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TheoremViolation, EigenConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_SOUNDNESS
    except ActiveCertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
