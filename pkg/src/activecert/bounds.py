"""Closed-form probability bounds, sample-size planning and angle certificates.

All functions are pure.  Each certificate records the quantities its
formula uses (``intermediates``) and lists violated hypotheses instead of
raising, so that sweeps can chart a bound across its validity boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, DomainError
from .sampling import SampledFunction, draw_batch
from .spectral import EigenSystem, eig_sym, intrinsic_dimension, spectral_norm

KINDS = (
    "relative_error",
    "sample_size",
    "angle",
    "bernstein_tail",
    "expectation_markov",
    "prior_work",
)

# Slack on L^2 >= ||E||_2 and intdim >= 1 for values that come out of floating point.
_PARAM_RTOL = 1e-12


@dataclass(frozen=True)
class ProblemParams:
    """Inputs shared by the bounds.

    ``n``, ``delta`` and ``epsilon`` are optional because each bound needs a
    different subset of them.
    """

    L: float
    norm_E: float
    intdim_E: float
    n: Optional[int] = None
    delta: Optional[float] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise ArgumentError(f"L must be positive, got {self.L}")
        if not (math.isfinite(self.norm_E) and self.norm_E > 0):
            raise ArgumentError(f"||E||_2 must be positive, got {self.norm_E}")
        if self.norm_E > self.L**2 * (1 + _PARAM_RTOL):
            raise ArgumentError(f"||E||_2 = {self.norm_E} exceeds L^2 = {self.L ** 2}")
        if not (math.isfinite(self.intdim_E) and self.intdim_E >= 1 - _PARAM_RTOL):
            raise ArgumentError(f"intdim(E) must be >= 1, got {self.intdim_E}")
        if self.n is not None and (int(self.n) != self.n or self.n < 1):
            raise ArgumentError(f"n must be a positive integer, got {self.n}")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ArgumentError(f"delta must lie in (0, 1), got {self.delta}")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ArgumentError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def smoothness(self) -> float:
        """``L^2 / ||E||_2``, at least 1."""
        return self.L**2 / self.norm_E

    def replace(self, **changes) -> ProblemParams:
        kw = dict(
            L=self.L, norm_E=self.norm_E, intdim_E=self.intdim_E,
            n=self.n, delta=self.delta, epsilon=self.epsilon,
        )
        kw.update(changes)
        return ProblemParams(**kw)

    @classmethod
    def from_function(cls, f: SampledFunction, **kw) -> ProblemParams:
        if f.analytic_E is None:
            raise ArgumentError("function has no analytic E")
        return cls(
            L=f.lipschitz_L,
            norm_E=spectral_norm(f.analytic_E),
            intdim_E=intrinsic_dimension(f.analytic_E),
            **kw,
        )

    def _need(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ArgumentError(f"missing parameter(s): {', '.join(missing)}")


@dataclass(frozen=True)
class GapInfo:
    """Eigenvalue split at 1-based index ``k``."""

    k: int
    lambda_k: float
    lambda_k1: float

    @property
    def gap(self) -> float:
        return self.lambda_k - self.lambda_k1

    @classmethod
    def from_eigensystem(cls, es: EigenSystem, k: int) -> GapInfo:
        if not 1 <= k < es.dim:
            raise ArgumentError(f"split index k={k} outside [1, {es.dim - 1}]")
        return cls(k, float(es.values[k - 1]), float(es.values[k]))


@dataclass(frozen=True)
class BoundCertificate:
    kind: str
    value: float
    intermediates: dict
    violations: tuple = ()
    notes: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown certificate kind {self.kind!r}")

    @property
    def assumptions_ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "assumptions_ok": self.assumptions_ok,
            "assumptions": list(self.violations),
            "intermediates": dict(self.intermediates),
            "notes": list(self.notes),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def csv_header(self) -> list:
        return ["kind", "value", "assumptions_ok"] + sorted(self.intermediates)

    def csv_row(self) -> list:
        return [self.kind, repr(self.value), str(self.assumptions_ok).lower()] + [
            repr(self.intermediates[k]) for k in sorted(self.intermediates)
        ]


def bernstein_tail(norm_P: float, intdim_P: float, beta: float, eps_abs: float) -> BoundCertificate:
    """Intrinsic-dimension matrix Bernstein tail bound on ``P[||sum X_j||_2 >= eps]``.

    ``value`` is clamped to [0, 1]; the unclamped bound is ``intermediates["raw"]``.
    The tolerance hypothesis ``eps >= sqrt(||P||_2) + beta/3`` is checked
    and reported, not enforced.
    """
    if not norm_P > 0:
        raise ArgumentError(f"||P||_2 must be positive, got {norm_P}")
    if not beta > 0:
        raise ArgumentError(f"beta must be positive, got {beta}")
    if not eps_abs > 0:
        raise ArgumentError(f"tolerance must be positive, got {eps_abs}")
    raw = 4.0 * intdim_P * math.exp(-(eps_abs * eps_abs / 2.0) / (norm_P + beta * eps_abs / 3.0))
    threshold = math.sqrt(norm_P) + beta / 3.0
    violations = []
    if eps_abs < threshold:
        violations.append(
            f"sufficient tolerance: eps = {eps_abs!r} < sqrt(||P||_2) + beta/3 = {threshold!r}"
        )
    if intdim_P < 1 - _PARAM_RTOL:
        violations.append(f"intdim(P) = {intdim_P!r} < 1")
    return BoundCertificate(
        kind="bernstein_tail",
        value=min(max(raw, 0.0), 1.0),
        intermediates={
            "raw": raw,
            "norm_P": norm_P,
            "intdim_P": intdim_P,
            "beta": beta,
            "eps_abs": eps_abs,
            "tolerance_threshold": threshold,
        },
        violations=tuple(violations),
    )


def gamma(p: ProblemParams) -> float:
    """``(1/(3n)) (L^2/||E||_2) ln(4 intdim(E) / delta)``."""
    p._need("n", "delta")
    return p.smoothness * math.log(4.0 * p.intdim_E / p.delta) / (3.0 * p.n)


def _rel_from_gamma(g: float) -> float:
    return g + math.sqrt(g * (g + 6.0))


def relative_error_bound(p: ProblemParams) -> BoundCertificate:
    """Relative error ``||E_hat - E||_2 / ||E||_2`` that holds with probability ``1 - delta``."""
    p._need("n", "delta")
    g = gamma(p)
    value = _rel_from_gamma(g)
    beta = p.L**2 / p.n
    norm_P = p.L**2 * p.norm_E / p.n
    # Lower end of the admissible tolerance range for the Bernstein bound.
    eps_floor = beta / (3.0 * p.norm_E) + math.sqrt(norm_P) / p.norm_E
    violations = []
    if value < eps_floor:
        violations.append(f"sufficient tolerance: {value!r} < {eps_floor!r}")
    return BoundCertificate(
        kind="relative_error",
        value=value,
        intermediates={
            "gamma": g,
            "beta": beta,
            "norm_P": norm_P,
            "intdim_P": p.intdim_E,
            "smoothness": p.smoothness,
            "eps_floor": eps_floor,
            "n": p.n,
            "delta": p.delta,
        },
        violations=tuple(violations),
    )


def sample_count_real(p: ProblemParams) -> float:
    """Unrounded ``(8/(3 eps^2)) (L^2/||E||_2) ln(4 intdim(E) / delta)``."""
    p._need("delta", "epsilon")
    return 8.0 / (3.0 * p.epsilon**2) * p.smoothness * math.log(4.0 * p.intdim_E / p.delta)


def required_samples(p: ProblemParams) -> int:
    """Smallest integer ``n`` at or above the sample-size lower bound.

    The ceiling is bumped if rounding would otherwise leave the relative
    error bound at ``n`` above ``epsilon`` (possible only for epsilon
    within rounding of 1).
    """
    p._need("delta", "epsilon")
    n = max(1, math.ceil(sample_count_real(p)))
    while relative_error_bound(p.replace(n=n)).value > p.epsilon:
        n += 1
    return n


def sample_size_certificate(p: ProblemParams) -> BoundCertificate:
    n = required_samples(p)
    return BoundCertificate(
        kind="sample_size",
        value=float(n),
        intermediates={
            "n_real": sample_count_real(p),
            "gamma_at_n": gamma(p.replace(n=n)),
            "rel_bound_at_n": relative_error_bound(p.replace(n=n)).value,
            "smoothness": p.smoothness,
            "intdim_E": p.intdim_E,
            "epsilon": p.epsilon,
            "delta": p.delta,
        },
    )


def angle_threshold(p: ProblemParams, g: GapInfo) -> float:
    """Largest admissible epsilon (exclusive): ``gap / (4 ||E||_2)``."""
    return g.gap / (4.0 * p.norm_E)


def angle_certificate(p: ProblemParams, g: GapInfo) -> BoundCertificate:
    """Bound ``4 ||E||_2 eps / gap`` on the sine of the largest principal angle.

    Raises
    ------
    DomainError
        If the gap is not positive.
    """
    p._need("delta", "epsilon")
    if not g.gap > 0:
        raise DomainError(f"dominant subspace undefined: gap at k={g.k} is {g.gap!r}")
    threshold = angle_threshold(p, g)
    violations = []
    if not p.epsilon < threshold:
        violations.append(
            f"0 < epsilon < (lambda_k - lambda_k+1)/(4 ||E||_2) fails: "
            f"epsilon = {p.epsilon!r}, threshold = {threshold!r}"
        )
    return BoundCertificate(
        kind="angle",
        value=4.0 * p.norm_E * p.epsilon / g.gap,
        intermediates={
            "k": g.k,
            "lambda_k": g.lambda_k,
            "lambda_k1": g.lambda_k1,
            "gap": g.gap,
            "epsilon": p.epsilon,
            "epsilon_threshold": threshold,
            "required_n": required_samples(p),
        },
        violations=tuple(violations),
    )


def expectation_markov_bound(p: ProblemParams) -> BoundCertificate:
    """Absolute error from the intrinsic-dimension expectation bound plus Markov.

    The value scales like ``1/delta``, against ``ln(1/delta)`` for the
    exponential tail bound.
    """
    p._need("n", "delta")
    beta = p.L**2 / p.n
    norm_P = p.L**2 * p.norm_E / p.n
    theta = math.log1p(p.intdim_E)
    expected = (10.0 / 3.0) * (math.sqrt(norm_P * theta) + beta * theta)
    violations = []
    if p.intdim_E < 2:
        violations.append(f"intdim(P) >= 2 fails: intdim = {p.intdim_E!r}")
    return BoundCertificate(
        kind="expectation_markov",
        value=expected / p.delta,
        intermediates={
            "theta": theta,
            "beta": beta,
            "norm_P": norm_P,
            "expected_norm_bound": expected,
            "relative_value": expected / p.delta / p.norm_E,
            "delta": p.delta,
        },
        violations=tuple(violations),
    )


def prior_work_samples(lambda1: float, nu: float, L: float, eps: float, m: int) -> BoundCertificate:
    """``max{L^2/(lambda1 eps), nu/(lambda1^2 eps^2)} ln(2m)`` with implied constant 1.

    The reference result is asymptotic with an unspecified constant and an
    unspecified success probability, so the number is for comparison only.
    """
    for name, val in (("lambda1", lambda1), ("L", L), ("eps", eps), ("m", m)):
        if not val > 0:
            raise ArgumentError(f"{name} must be positive, got {val}")
    if nu < 0:
        raise ArgumentError(f"nu must be non-negative, got {nu}")
    branch_L = L**2 / (lambda1 * eps)
    branch_nu = nu / (lambda1**2 * eps**2)
    log_factor = math.log(2 * m)
    return BoundCertificate(
        kind="prior_work",
        value=max(branch_L, branch_nu) * log_factor,
        intermediates={
            "branch_L": branch_L,
            "branch_nu": branch_nu,
            "log_2m": log_factor,
            "implied_constant": 1.0,
            "lambda1": lambda1,
            "nu": nu,
            "m": m,
        },
        notes=(
            "comparison only - implied constant unknown",
            "success probability unspecified ('with high probability'); no delta attached",
        ),
    )


@dataclass(frozen=True)
class NuEstimate:
    value: float
    stderr: float
    n_ref: int
    seed: int
    notes: tuple = field(default=("spectral norm used for ||.||",))


_NU_CHUNK = 1 << 15


def estimate_nu(f: SampledFunction, n_ref: int, seed: int) -> NuEstimate:
    """Monte Carlo estimate of ``|| E[(z z^T - E)^2] ||_2``.

    Uses ``(z z^T - E)^2 = |z|^2 z z^T - z z^T E - E z z^T + E^2`` so only
    second and fourth moments are accumulated.  The standard error is that
    of the scalar ``v^T (z z^T - E)^2 v`` along the leading eigenvector
    ``v`` of the estimate.
    """
    if f.analytic_E is None:
        raise ArgumentError("estimating nu needs the function's analytic E")
    if n_ref < 2:
        raise ArgumentError(f"n_ref must be >= 2, got {n_ref}")
    batch = draw_batch(f, n_ref, seed)
    e = f.analytic_E.entries
    z = batch.vectors
    m = z.shape[1]
    second = np.zeros((m, m))
    fourth = np.zeros((m, m))
    for s in range(0, n_ref, _NU_CHUNK):
        zc = z[s : s + _NU_CHUNK]
        sq = np.einsum("ij,ij->i", zc, zc)
        second += zc.T @ zc
        fourth += (zc * sq[:, None]).T @ zc
    second /= n_ref
    fourth /= n_ref
    mean_sq = fourth - second @ e - e @ second + e @ e
    es = eig_sym(mean_sq)
    value = float(max(abs(es.values[0]), abs(es.values[-1])))
    v = es.vectors[:, 0] if abs(es.values[0]) >= abs(es.values[-1]) else es.vectors[:, -1]
    # v^T (z z^T - E)^2 v = |(z z^T - E) v|^2 = |z (z.v) - E v|^2
    ev = e @ v
    w = z * (z @ v)[:, None] - ev[None, :]
    scalars = np.einsum("ij,ij->i", w, w)
    stderr = float(np.std(scalars, ddof=1) / math.sqrt(n_ref))
    return NuEstimate(value=value, stderr=stderr, n_ref=int(n_ref), seed=int(seed))

