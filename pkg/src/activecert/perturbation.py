"""Deterministic subspace perturbation checks for a pair (E, E_hat).

Given a symmetric ``E`` with an eigenvalue gap after index ``k`` and a
symmetric perturbation ``E_hat``, the functions here measure how far the
dominant k-dimensional invariant subspace moves, and check the
gap-based guarantees on concrete matrices.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .bounds import GapInfo
from .errors import ArgumentError, DomainError, TheoremViolation
from .spectral import (
    SymmetricMatrix,
    as_symmetric,
    eig_sym,
    principal_angle_sin,
    rect_two_norm,
    spectral_norm,
)

GAP_RTOL = 1e-12
# Absolute slack for comparisons between sines (values in [0, 1]).
ANGLE_SLACK = 1e-10
INTERLACE_RTOL = 1e-10


@dataclass(frozen=True)
class FBlocks:
    """Two-norms of ``F = V^T (E_hat - E) V`` and its blocks, split after column k."""

    k: int
    norm_F: float
    norm_F11: float
    norm_F12: float
    norm_F22: float


@dataclass
class PerturbationReport:
    k: int
    tau: float
    gap_info: GapInfo
    blocks: FBlocks
    eta: float
    hypothesis_ok: bool
    lemma_conditions_ok: bool
    perturbed_gap: float
    subspace_well_defined: bool
    sin_angle: Optional[float]
    bound_t1: float
    bound_l1: float
    eigen_deviation: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.hypothesis_ok and not self.violations

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gap_info"] = {
            "k": self.gap_info.k,
            "lambda_k": self.gap_info.lambda_k,
            "lambda_k1": self.gap_info.lambda_k1,
            "gap": self.gap_info.gap,
        }
        d["bound_l1"] = _finite_or_none(self.bound_l1)
        d["subspace_hat"] = "well-defined" if self.subspace_well_defined else "ill-defined"
        d["ok"] = self.ok
        return d


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def _require_gap(es, k, scale):
    if not 1 <= k < es.dim:
        raise ArgumentError(f"split index k={k} outside [1, {es.dim - 1}]")
    g = GapInfo.from_eigensystem(es, k)
    if not g.gap > GAP_RTOL * scale:
        raise DomainError(
            f"no eigenvalue gap at k={k}: lambda_k - lambda_k+1 = {g.gap!r} "
            f"(needs > {GAP_RTOL:g} * ||E||_2)"
        )
    return g


def _pair(e, e_hat):
    e = as_symmetric(e)
    e_hat = as_symmetric(e_hat)
    if e.dim != e_hat.dim:
        raise ArgumentError(f"dimension mismatch: {e.dim} vs {e_hat.dim}")
    return e, e_hat


def f_partition(e, e_hat, k: int) -> FBlocks:
    """Block norms of the perturbation expressed in the eigenbasis of ``E``."""
    e, e_hat = _pair(e, e_hat)
    es = eig_sym(e)
    _require_gap(es, k, spectral_norm(e))
    v = es.vectors
    f = SymmetricMatrix(v.T @ (e_hat.entries - e.entries) @ v)
    fe = f.entries
    return FBlocks(
        k=k,
        norm_F=spectral_norm(f),
        norm_F11=spectral_norm(fe[:k, :k]),
        norm_F12=rect_two_norm(fe[:k, k:]),
        norm_F22=spectral_norm(fe[k:, k:]),
    )


def interlacing_check(e, e_hat) -> float:
    """``max_j |lambda_j - lambda_hat_j|``, verified to be at most ``||E_hat - E||_2``."""
    e, e_hat = _pair(e, e_hat)
    dev = float(np.max(np.abs(eig_sym(e).values - eig_sym(e_hat).values)))
    tau = spectral_norm(e_hat - e)
    if dev > tau + INTERLACE_RTOL * spectral_norm(e):
        raise TheoremViolation(f"eigenvalue deviation {dev!r} exceeds ||E_hat - E||_2 = {tau!r}")
    return dev


def theorem_t1_check(e, e_hat, k: int) -> PerturbationReport:
    """Evaluate the gap-based subspace guarantee on a concrete pair.

    When ``||E_hat - E||_2 < gap/4`` the report checks that ``E_hat`` keeps a
    gap at ``k``, that both dominant subspaces exist, and that the sine of
    the largest principal angle is at most ``4 tau / gap``.  Failures land
    in ``violations``.  The lemma bound ``2 ||F12|| / eta`` is checked
    whenever its own conditions hold, and ``eta >= gap/2`` under the
    hypothesis.
    """
    e, e_hat = _pair(e, e_hat)
    norm_e = spectral_norm(e)
    es = eig_sym(e)
    ges = eig_sym(e_hat)
    g = _require_gap(es, k, norm_e)
    gap = g.gap

    tau = spectral_norm(e_hat - e)
    blocks = f_partition(e, e_hat, k)
    eta = gap - blocks.norm_F11 - blocks.norm_F22
    hypothesis_ok = tau < gap / 4.0
    lemma_ok = eta > 0 and blocks.norm_F12 / gap < 0.5

    perturbed_gap = float(ges.values[k - 1] - ges.values[k])
    norm_hat = float(max(abs(ges.values[0]), abs(ges.values[-1])))
    well_defined = perturbed_gap > GAP_RTOL * max(norm_hat, norm_e)

    sin_angle = None
    if well_defined:
        sin_angle = principal_angle_sin(es.leading(k), ges.leading(k))

    bound_t1 = 4.0 * tau / gap
    bound_l1 = 2.0 * blocks.norm_F12 / eta if eta > 0 else float("inf")

    dev = float(np.max(np.abs(es.values - ges.values)))
    violations = []
    if dev > tau + INTERLACE_RTOL * norm_e:
        violations.append(f"interlacing: max |lambda_j - lambda_hat_j| = {dev!r} > tau = {tau!r}")
    if hypothesis_ok:
        if not perturbed_gap > 0:
            violations.append(f"conclusion 1: perturbed gap {perturbed_gap!r} not positive")
        if not well_defined:
            violations.append("conclusion 2: perturbed dominant subspace ill-defined")
        elif sin_angle > bound_t1 + ANGLE_SLACK:
            violations.append(f"conclusion 3: sin angle {sin_angle!r} > 4 tau/gap = {bound_t1!r}")
        if eta < gap / 2.0 - INTERLACE_RTOL * norm_e:
            violations.append(f"eta = {eta!r} < gap/2 = {gap / 2.0!r}")
    if lemma_ok and sin_angle is not None and sin_angle > bound_l1 + ANGLE_SLACK:
        violations.append(f"lemma: sin angle {sin_angle!r} > 2||F12||/eta = {bound_l1!r}")

    return PerturbationReport(
        k=k,
        tau=tau,
        gap_info=g,
        blocks=blocks,
        eta=eta,
        hypothesis_ok=hypothesis_ok,
        lemma_conditions_ok=lemma_ok,
        perturbed_gap=perturbed_gap,
        subspace_well_defined=well_defined,
        sin_angle=sin_angle,
        bound_t1=bound_t1,
        bound_l1=bound_l1,
        eigen_deviation=dev,
        violations=violations,
    )


def haar_orthogonal(rng: np.random.Generator, m: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian with sign-fixed R diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def random_instance(rng: np.random.Generator, spectrum, tau: float):
    """Return ``(E, E_hat)`` with ``E = Q diag(spectrum) Q^T`` and ``||E_hat - E||_2 = tau``.

    ``Q`` is Haar-random and the perturbation is a symmetrized Gaussian
    matrix rescaled to the target two-norm.
    """
    spectrum = np.asarray(spectrum, dtype=float)
    m = spectrum.size
    q = haar_orthogonal(rng, m)
    e = (q * spectrum) @ q.T
    g = rng.standard_normal((m, m))
    delta = SymmetricMatrix(g + g.T)
    scale = spectral_norm(delta)
    e_hat = e + delta.entries * (tau / scale)
    return SymmetricMatrix(e), SymmetricMatrix(e_hat)
