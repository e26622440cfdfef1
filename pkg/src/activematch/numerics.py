"""Seeded randomness and the small linear-algebra / sampling kernel.

All randomness flows through :class:`RngStream`, a thin wrapper around numpy's
``Generator`` backed by the PCG64 bit generator. A stream is fully determined
by its integer seed; child streams are derived by hashing ``(seed, index)``
through ``numpy.random.SeedSequence`` so that independent workers can replay a
run exactly.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

PIVOT_TOL = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot falls at or below ``PIVOT_TOL``."""


class RngStream:
    """Deterministic random stream (PCG64) with documented seed splitting."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "RngStream":
        """Independent stream with ``child_seed = hash(seed, index)``.

        Does not consume draws from this stream.
        """
        return RngStream(_child_seed(self.seed, index))

    def spawn_seed(self) -> int:
        """Consume one 64-bit draw, usable as the base seed of a sub-computation."""
        return int(self.generator.integers(0, 2**63, dtype=np.int64))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed})"


def _child_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_stream(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else rng)


def cholesky(a: ArrayLike) -> NDArray[np.float64]:
    """Lower-triangular factor ``L`` with ``L @ L.T == a``.

    Accepts a single symmetric matrix or a stack of them (shape ``(..., d, d)``).
    Raises :class:`NotPositiveDefiniteError` if any pivot ``L[j, j]**2`` is
    ``<= PIVOT_TOL``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=1e-10, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    pivots = np.diagonal(low, axis1=-2, axis2=-1) ** 2
    if not np.all(pivots > PIVOT_TOL):
        raise NotPositiveDefiniteError(
            f"cholesky pivot {pivots.min():.3e} <= tolerance {PIVOT_TOL:g}"
        )
    return low


def sample_mvn(mean: ArrayLike, covariance: ArrayLike, rng: RngStream) -> NDArray[np.float64]:
    """One draw ``mean + L z`` with ``L = cholesky(covariance)``."""
    mean = np.asarray(mean, dtype=np.float64)
    low = cholesky(covariance)
    if low.shape[-1] != mean.shape[-1]:
        raise ValueError("mean and covariance dimensions differ")
    z = rng.generator.standard_normal(mean.shape[-1])
    return mean + low @ z


def sample_wishart(dof: float, scale: ArrayLike, rng: RngStream) -> NDArray[np.float64]:
    """Draw from Wishart(dof, scale) via the Bartlett decomposition.

    ``W = L A A^T L^T`` where ``L = cholesky(scale)``, ``A`` is lower
    triangular with ``A[i, i] = sqrt(chi2(dof - i))`` and standard normal
    entries below the diagonal.
    """
    low = cholesky(scale)
    d = low.shape[0]
    if dof < d:
        raise ValueError(f"Wishart dof {dof} must be >= dimension {d}")
    gen = rng.generator
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(gen.chisquare(dof - np.arange(d)))
    rows, cols = np.tril_indices(d, k=-1)
    a[rows, cols] = gen.standard_normal(rows.size)
    la = low @ a
    w = la @ la.T
    return 0.5 * (w + w.T)


def gaussian_entropy(variance: ArrayLike) -> NDArray[np.float64] | float:
    """Differential entropy of N(., variance) in nats: ``0.5 * ln(2 pi e var)``."""
    v = np.asarray(variance, dtype=np.float64)
    if np.any(~(v > 0)):
        raise ValueError("variance must be > 0")
    out = 0.5 * np.log(2.0 * math.pi * math.e * v)
    return float(out) if out.ndim == 0 else out


def bernoulli_entropy(p: ArrayLike) -> NDArray[np.float64] | float:
    """Entropy of Bernoulli(p) in nats, with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(~((p >= 0) & (p <= 1))):
        raise ValueError("probability must lie in [0, 1]")
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.where(p > 0, p * np.log(p), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    return float(out) if out.ndim == 0 else out
