"""Monte Carlo gradient sampling and the outer-product estimator.

Random numbers come from numpy's Philox4x64-10 counter-based bit
generator, keyed by a non-negative integer seed.  Independent streams for
repeated trials are derived with :func:`derive_seed`, which hashes the
master seed together with integer keys through ``numpy.random.SeedSequence``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ArgumentError, ModelViolationError, UnsupportedSizeError
from .spectral import SymmetricMatrix, as_symmetric, spectral_norm

RNG_ALGORITHM = "Philox4x64-10 (numpy.random.Philox), seeded by integer key"
GRADIENT_NORM_RTOL = 1e-12
ESTIMATE_NORM_ATOL = 1e-10
MAX_QUADRATIC_DIM = 20
_VERTEX_CHUNK = 1 << 14


def make_rng(seed: int) -> np.random.Generator:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ArgumentError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(master: int, *keys: int) -> int:
    """64-bit child seed for the stream identified by ``keys`` under ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _uniform_hypercube(m):
    def sample(rng, n):
        return rng.uniform(-1.0, 1.0, size=(n, m))

    return sample


@dataclass(frozen=True)
class SampledFunction:
    """A function known through its gradient, plus the density to sample from.

    ``gradient`` maps an ``(n, m)`` array of points to an ``(n, m)`` array of
    gradients, and ``sample_point(rng, n)`` draws ``n`` points from the
    density.  ``lipschitz_L`` bounds ``||grad f(x)||_2`` on the support.
    """

    dim: int
    gradient: Callable[[np.ndarray], np.ndarray]
    sample_point: Callable[[np.random.Generator, int], np.ndarray]
    lipschitz_L: float
    analytic_E: Optional[SymmetricMatrix] = None
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lipschitz_L > 0:
            raise ArgumentError(f"lipschitz_L must be positive, got {self.lipschitz_L}")
        if self.analytic_E is not None:
            e = self.analytic_E
            if not (isinstance(e, SymmetricMatrix) and e.psd_hint):
                e = SymmetricMatrix(getattr(e, "entries", e), psd_hint=True)
            if e.dim != self.dim:
                raise ArgumentError(f"analytic_E has dim {e.dim}, function has dim {self.dim}")
            L2 = self.lipschitz_L**2
            if spectral_norm(e) > L2 * (1 + GRADIENT_NORM_RTOL) ** 2:
                raise ModelViolationError(
                    f"||E||_2 = {spectral_norm(e):.6g} exceeds L^2 = {L2:.6g}"
                )
            object.__setattr__(self, "analytic_E", e)


@dataclass(frozen=True)
class SampleBatch:
    """``n`` gradient samples ``z_j`` (rows of ``vectors``) and their seed."""

    vectors: np.ndarray
    seed: int
    lipschitz_L: Optional[float] = None

    def __post_init__(self):
        z = np.array(self.vectors, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] < 1:
            raise ArgumentError("a batch needs at least one vector")
        if not np.all(np.isfinite(z)):
            raise ArgumentError("batch contains non-finite gradients")
        z.setflags(write=False)
        object.__setattr__(self, "vectors", z)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# seed={self.seed} n={self.n} m={self.dim}\n")
            w = csv.writer(fh)
            w.writerow([f"z{i}" for i in range(self.dim)])
            for row in self.vectors:
                w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class EstimatorResult:
    e_hat: SymmetricMatrix
    batch: SampleBatch
    rel_error: Optional[float] = None


def draw_batch(f: SampledFunction, n: int, seed: int) -> SampleBatch:
    """Evaluate the gradient at ``n`` points drawn i.i.d. from the density.

    Raises
    ------
    ModelViolationError
        If some gradient norm exceeds ``L * (1 + 1e-12)``.
    """
    if n < 1:
        raise ArgumentError(f"sample count must be >= 1, got {n}")
    rng = make_rng(seed)
    x = f.sample_point(rng, int(n))
    z = np.asarray(f.gradient(x), dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    worst = float(norms.max())
    if worst > f.lipschitz_L * (1 + GRADIENT_NORM_RTOL):
        raise ModelViolationError(
            f"gradient norm {worst:.17g} exceeds declared L = {f.lipschitz_L:.17g}"
        )
    return SampleBatch(z, seed=seed, lipschitz_L=f.lipschitz_L)


def estimate(batch: SampleBatch, analytic_E=None) -> EstimatorResult:
    """``E_hat = (1/n) sum_j z_j z_j^T``; relative error set when ``analytic_E`` given."""
    z = batch.vectors
    e_hat = SymmetricMatrix(z.T @ z / batch.n, psd_hint=True)
    if batch.lipschitz_L is not None:
        L2 = batch.lipschitz_L**2
        if spectral_norm(e_hat) > L2 * (1 + GRADIENT_NORM_RTOL) ** 2 + ESTIMATE_NORM_ATOL:
            raise ModelViolationError(f"||E_hat||_2 exceeds L^2 = {L2:.6g}")
    rel = None
    if analytic_E is not None:
        e = as_symmetric(analytic_E)
        rel = spectral_norm(e_hat - e) / spectral_norm(e)
    return EstimatorResult(e_hat, batch, rel)


# --- builtin test functions --------------------------------------------------


def builtin_linear(c) -> SampledFunction:
    """``f(x) = c^T x`` on the uniform hypercube; ``E = c c^T`` and ``L = ||c||_2``."""
    c = np.array(c, dtype=np.float64).ravel()
    if c.size == 0 or not np.any(c):
        raise ArgumentError("linear builtin needs a nonzero coefficient vector")
    c.setflags(write=False)
    m = c.size

    def gradient(x):
        return np.broadcast_to(c, np.shape(x)).copy()

    return SampledFunction(
        dim=m,
        gradient=gradient,
        sample_point=_uniform_hypercube(m),
        lipschitz_L=float(np.linalg.norm(c)),
        analytic_E=SymmetricMatrix(np.outer(c, c), psd_hint=True),
        spec={"kind": "linear", "c": c.tolist()},
    )


def _vertex_max_norm(a: np.ndarray) -> float:
    """``max ||A v||_2`` over the vertices of ``[-1, 1]^m``.

    Only rows and columns with a nonzero entry take part, and ``v`` and
    ``-v`` are visited once, so 2^(r-1) products for r active coordinates.
    """
    rows = np.flatnonzero(np.any(a != 0, axis=1))
    cols = np.flatnonzero(np.any(a != 0, axis=0))
    if rows.size == 0:
        return 0.0
    sub = a[np.ix_(rows, cols)]
    r = cols.size
    count = 1 << (r - 1)
    shifts = np.arange(r - 1)
    best = 0.0
    for start in range(0, count, _VERTEX_CHUNK):
        idx = np.arange(start, min(start + _VERTEX_CHUNK, count))
        bits = (idx[:, None] >> shifts[None, :]) & 1
        verts = np.hstack([np.ones((idx.size, 1)), 1.0 - 2.0 * bits])
        y = verts @ sub.T
        best = max(best, float(np.max(np.einsum("ij,ij->i", y, y))))
    return math.sqrt(best)


def builtin_quadratic(a) -> SampledFunction:
    """``f(x) = x^T A x / 2`` on the uniform hypercube.

    ``E[x x^T] = I/3`` under this density, so ``E = A^2 / 3``.  ``L`` is the
    exact maximum of ``||A x||_2`` over the cube, attained at a vertex.
    """
    a = as_symmetric(a).entries
    m = a.shape[0]
    if not np.any(a):
        raise ArgumentError("quadratic builtin needs a nonzero matrix")
    if m > MAX_QUADRATIC_DIM:
        raise UnsupportedSizeError(
            f"vertex enumeration limited to m <= {MAX_QUADRATIC_DIM}, got m={m}"
        )

    def gradient(x):
        return x @ a

    return SampledFunction(
        dim=m,
        gradient=gradient,
        sample_point=_uniform_hypercube(m),
        lipschitz_L=_vertex_max_norm(a),
        analytic_E=SymmetricMatrix(a @ a / 3.0, psd_hint=True),
        spec={"kind": "quadratic", "A": a.tolist()},
    )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def mean_cos_uniform(omega: float) -> float:
    """``E[cos(omega * t)]`` for ``t ~ U[-1, 1]``, by composite Gauss-Legendre."""
    omega = abs(float(omega))
    if omega == 0.0:
        return 1.0
    panels = max(2, int(math.ceil(omega)))
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    # Even integrand: (1/2) int_{-1}^{1} = int_0^1.
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * np.cos(omega * t)))


def mean_cos_hypercube(w) -> float:
    """``E[cos(w^T x)]`` for ``x`` uniform on ``[-1, 1]^m``; factorizes over coordinates."""
    return math.prod(mean_cos_uniform(wi) for wi in np.asarray(w, dtype=float))


def builtin_ridge_sum(directions, amplitudes) -> SampledFunction:
    """``f(x) = sum_i a_i sin(d_i^T x)`` on the uniform hypercube.

    ``directions`` holds orthonormal vectors as rows.  The exact ``E`` is
    assembled in the directions' coordinates from one-dimensional
    quadratures, using ``cos u cos v = (cos(u - v) + cos(u + v)) / 2``.
    """
    d = np.array(directions, dtype=np.float64)
    if d.ndim == 1:
        d = d.reshape(1, -1)
    amp = np.array(amplitudes, dtype=np.float64).ravel()
    r, m = d.shape
    if amp.size != r:
        raise ArgumentError(f"{r} directions but {amp.size} amplitudes")
    if not np.any(amp):
        raise ArgumentError("ridge sum needs a nonzero amplitude")
    dev = float(np.max(np.abs(d @ d.T - np.eye(r))))
    if dev > 1e-10:
        raise ArgumentError(f"directions are not orthonormal (max deviation {dev:.3e})")
    d.setflags(write=False)
    amp.setflags(write=False)

    coef = np.empty((r, r))
    for i in range(r):
        for j in range(i, r):
            val = 0.5 * (mean_cos_hypercube(d[i] - d[j]) + mean_cos_hypercube(d[i] + d[j]))
            coef[i, j] = coef[j, i] = amp[i] * amp[j] * val

    def gradient(x):
        return (amp * np.cos(x @ d.T)) @ d

    return SampledFunction(
        dim=m,
        gradient=gradient,
        sample_point=_uniform_hypercube(m),
        lipschitz_L=float(np.sum(np.abs(amp))),
        analytic_E=SymmetricMatrix(d.T @ coef @ d, psd_hint=True),
        spec={"kind": "ridge_sum", "directions": d.tolist(), "amplitudes": amp.tolist()},
    )


def function_from_spec(spec: dict) -> SampledFunction:
    """Build a builtin from ``{"kind": "linear"|"quadratic"|"ridge_sum", ...}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ArgumentError("function spec must be an object with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind == "linear":
            return builtin_linear(spec["c"])
        if kind == "quadratic":
            return builtin_quadratic(spec["A"])
        if kind == "ridge_sum":
            return builtin_ridge_sum(spec["directions"], spec["amplitudes"])
    except KeyError as exc:
        raise ArgumentError(f"function spec of kind {kind!r} is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ArgumentError):
            raise
        raise ArgumentError(f"bad parameters for {kind!r}: {exc}") from None
    raise ArgumentError(f"unknown function kind {kind!r}")


def pad_function_spec(spec: dict, m: int) -> dict:
    """Embed a builtin in R^m by appending inactive (zero) coordinates."""
    kind = spec["kind"]
    base = function_from_spec(spec).dim
    if m < base:
        raise ArgumentError(f"cannot pad a {base}-dimensional function down to m={m}")
    if kind == "linear":
        c = list(spec["c"])
        return {"kind": "linear", "c": c + [0.0] * (m - len(c))}
    if kind == "quadratic":
        a = np.asarray(spec["A"], dtype=float)
        out = np.zeros((m, m))
        out[: a.shape[0], : a.shape[1]] = a
        return {"kind": "quadratic", "A": out.tolist()}
    if kind == "ridge_sum":
        d = np.asarray(spec["directions"], dtype=float)
        out = np.zeros((d.shape[0], m))
        out[:, : d.shape[1]] = d
        return {"kind": "ridge_sum", "directions": out.tolist(), "amplitudes": list(spec["amplitudes"])}
    raise ArgumentError(f"unknown function kind {kind!r}")
