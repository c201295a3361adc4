"""Dense symmetric linear algebra.

Everything here works on small dense matrices (m up to a few hundred).
Eigendecompositions come from a cyclic Jacobi solver so that results are
reproducible bit for bit for a fixed input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._jacobi import cyclic_jacobi
from .errors import (
    ArgumentError,
    DomainError,
    EigenConvergenceError,
    MatrixFormatError,
    TheoremViolation,
)

TOL_PSD = 1e-10
TOL_ORTHO = 1e-10
TOL_RESIDUAL = 1e-8
TOL_ANGLE_CROSSCHECK = 1e-10
RANK_TOL = 1e-12

JACOBI_REL_TOL = 1e-15
JACOBI_MAX_SWEEPS = 60


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


class SymmetricMatrix:
    """Dense real symmetric matrix.

    The input is symmetrized as ``(A + A^T) / 2`` on construction and the
    stored entries are read-only.  With ``psd_hint=True`` the smallest
    eigenvalue is checked against ``-TOL_PSD * ||A||_2``.

    The eigensystem is computed lazily and cached, so repeated spectral
    queries on the same matrix cost one Jacobi solve.
    """

    __slots__ = ("_entries", "_psd_hint", "_eig")

    def __init__(self, entries, psd_hint=False):
        a = np.asarray(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ArgumentError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ArgumentError("matrix has non-finite entries")
        self._entries = _readonly((a + a.T) / 2.0)
        self._psd_hint = bool(psd_hint)
        self._eig = None
        if self._psd_hint:
            vals = self.eigensystem().values
            scale = float(np.max(np.abs(vals)))
            if vals[-1] < -TOL_PSD * scale:
                raise DomainError(
                    f"matrix flagged PSD has eigenvalue {vals[-1]:.3e} < -{TOL_PSD:g}*||A||_2"
                )

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def psd_hint(self) -> bool:
        return self._psd_hint

    def eigensystem(self) -> EigenSystem:
        if self._eig is None:
            self._eig = _jacobi_eigensystem(self._entries)
        return self._eig

    def __sub__(self, other):
        return SymmetricMatrix(self._entries - _as_array(other))

    def __add__(self, other):
        return SymmetricMatrix(self._entries + _as_array(other))

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim}, psd_hint={self._psd_hint})"


def _as_array(a) -> np.ndarray:
    if isinstance(a, SymmetricMatrix):
        return a.entries
    return np.asarray(a, dtype=np.float64)


def as_symmetric(a, psd_hint=False) -> SymmetricMatrix:
    if isinstance(a, SymmetricMatrix):
        return a
    return SymmetricMatrix(a, psd_hint=psd_hint)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues sorted non-increasing, with paired orthonormal eigenvectors
    in the columns of ``vectors``."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def leading(self, k: int) -> SubspaceBasis:
        """Basis of the span of the first ``k`` eigenvectors."""
        return SubspaceBasis(self.vectors[:, :k])

    def gap(self, k: int) -> float:
        """``lambda_k - lambda_{k+1}`` with 1-based ``k``."""
        if not 1 <= k < self.dim:
            raise ArgumentError(f"split index k={k} outside [1, {self.dim - 1}]")
        return float(self.values[k - 1] - self.values[k])

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def _jacobi_eigensystem(a: np.ndarray) -> EigenSystem:
    d, v, _, off, converged = cyclic_jacobi(
        np.ascontiguousarray(a), JACOBI_REL_TOL, JACOBI_MAX_SWEEPS
    )
    scale = float(np.max(np.abs(d))) if d.size else 0.0
    # Frobenius residual bounds the spectral one from above.
    residual = float(np.linalg.norm(a @ v - v * d))
    if not converged or residual > TOL_RESIDUAL * scale:
        raise EigenConvergenceError(
            f"Jacobi did not converge (off-diagonal norm {off:.3e})", residual
        )
    # Stable sort keeps the sweep order among ties.
    order = np.argsort(-d, kind="stable")
    return EigenSystem(_readonly(d[order]), _readonly(v[:, order]))


def eig_sym(a) -> EigenSystem:
    """Eigendecomposition ``A = V diag(values) V^T`` with values descending."""
    return as_symmetric(a).eigensystem()


def spectral_norm(a) -> float:
    """Two-norm of a symmetric matrix, ``max_i |lambda_i|``."""
    vals = eig_sym(a).values
    return float(max(abs(vals[0]), abs(vals[-1])))


def rect_two_norm(x) -> float:
    """Two-norm of a rectangular matrix via its smaller Gram matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    g = x.T @ x if x.shape[1] <= x.shape[0] else x @ x.T
    return math.sqrt(max(spectral_norm(g), 0.0))


def trace(a) -> float:
    # fsum makes the result independent of summation order (and of zero padding).
    return math.fsum(np.diag(_as_array(a)).tolist())


def numerical_rank(a, rel_tol: float = RANK_TOL) -> int:
    vals = eig_sym(a).values
    scale = float(max(abs(vals[0]), abs(vals[-1])))
    return int(np.count_nonzero(vals > rel_tol * scale))


def intrinsic_dimension(a) -> float:
    """Effective rank ``trace(A) / ||A||_2`` of a nonzero PSD matrix.

    Raises
    ------
    DomainError
        If ``A`` is zero or has an eigenvalue below ``-TOL_PSD * ||A||_2``.
    """
    a = as_symmetric(a)
    vals = a.eigensystem().values
    norm = float(max(abs(vals[0]), abs(vals[-1])))
    if norm == 0.0:
        raise DomainError("intdim undefined for zero matrix")
    if vals[-1] < -TOL_PSD * norm:
        raise DomainError(f"intdim requires a PSD matrix (min eigenvalue {vals[-1]:.3e})")
    return trace(a) / norm


def psd_sqrt(a) -> SymmetricMatrix:
    """Symmetric square root of a PSD matrix (tiny negative eigenvalues clipped)."""
    es = eig_sym(a)
    root = np.sqrt(np.clip(es.values, 0.0, None))
    return SymmetricMatrix((es.vectors * root) @ es.vectors.T)


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a k-dimensional subspace of R^m, ``1 <= k < m``."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.ndim != 2:
            raise ArgumentError("basis must be an m x k array")
        m, k = b.shape
        if not 1 <= k < m:
            raise ArgumentError(f"subspace dimension k={k} must satisfy 1 <= k < m={m}")
        dev = np.max(np.abs(b.T @ b - np.eye(k)))
        if dev > TOL_ORTHO:
            raise ArgumentError(f"basis columns not orthonormal (max deviation {dev:.3e})")
        object.__setattr__(self, "basis", _readonly(b))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def projector(s: SubspaceBasis) -> SymmetricMatrix:
    """Orthogonal projector ``B B^T`` onto the subspace."""
    return SymmetricMatrix(s.basis @ s.basis.T)


def _check_pair(s1: SubspaceBasis, s2: SubspaceBasis):
    if s1.dim != s2.dim or s1.k != s2.k:
        raise ArgumentError(
            f"subspaces must match in shape: ({s1.dim}, {s1.k}) vs ({s2.dim}, {s2.k})"
        )


def principal_angle_sin_cross_gram(s1: SubspaceBasis, s2: SubspaceBasis) -> float:
    """``sqrt(1 - sigma_min(B1^T B2)^2)``, via numpy's SVD."""
    _check_pair(s1, s2)
    sigma = np.linalg.svd(s1.basis.T @ s2.basis, compute_uv=False)
    smin = min(float(sigma[-1]), 1.0)
    return math.sqrt(max(0.0, 1.0 - smin * smin))


def principal_angle_sin(s1: SubspaceBasis, s2: SubspaceBasis) -> float:
    """Sine of the largest principal angle, ``||B1 B1^T - B2 B2^T||_2``.

    The value is cross-checked against the cross-Gram formula.  The check
    compares squared sines, since ``sqrt(1 - sigma^2)`` loses about half the
    digits near zero angles while ``1 - sigma^2`` does not.
    """
    _check_pair(s1, s2)
    diff = s1.basis @ s1.basis.T - s2.basis @ s2.basis.T
    value = min(spectral_norm(diff), 1.0)
    other = principal_angle_sin_cross_gram(s1, s2)
    if abs(value * value - other * other) > TOL_ANGLE_CROSSCHECK:
        raise TheoremViolation(
            f"sin-angle formulas disagree: projector {value!r} vs cross-Gram {other!r}"
        )
    return value


# --- matrix text format -------------------------------------------------------


def parse_matrix(text: str) -> SymmetricMatrix:
    """Parse ``m`` followed by ``m`` rows of ``m`` numbers; result is symmetrized."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MatrixFormatError("empty matrix file")
    try:
        m = int(lines[0])
    except ValueError:
        raise MatrixFormatError(f"first line must be the dimension, got {lines[0]!r}") from None
    if m < 1:
        raise MatrixFormatError(f"dimension must be positive, got {m}")
    rows = lines[1:]
    if len(rows) != m:
        raise MatrixFormatError(f"expected {m} rows, found {len(rows)}")
    data = []
    for i, row in enumerate(rows, start=1):
        fields = row.split()
        if len(fields) != m:
            raise MatrixFormatError(f"row {i}: expected {m} entries, found {len(fields)}")
        try:
            data.append([float(x) for x in fields])
        except ValueError as exc:
            raise MatrixFormatError(f"row {i}: {exc}") from None
    try:
        return SymmetricMatrix(np.array(data))
    except ArgumentError as exc:
        raise MatrixFormatError(str(exc)) from None


def read_matrix(path) -> SymmetricMatrix:
    return parse_matrix(Path(path).read_text())


def format_matrix(a) -> str:
    a = _as_array(a)
    out = [str(a.shape[0])]
    out += [" ".join(repr(float(x)) for x in row) for row in a]
    return "\n".join(out) + "\n"


def write_matrix(path, a) -> None:
    Path(path).write_text(format_matrix(a))
