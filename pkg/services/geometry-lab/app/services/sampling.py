"""
Seeded samplers: sphere, Gaussian, Haar subspaces and subspace spheres.

Every sampler is a pure function of its :class:`SeedSpec`. The generator for
a seed is a Philox counter-based bit generator keyed by the root and the
hashed derivation path, so sibling substreams never overlap and the same
SeedSpec always reproduces the same draws.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as la

from common.errors import DimensionMismatchError, LabError
from contracts.records import SeedSpec

from app.core.config import GRASSMANNIAN_MAX_RESAMPLES, ORTHONORMAL_TOL

logger = logging.getLogger(__name__)

_RANK_TOL = 1e-10


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def rng_for(seed: SeedSpec) -> np.random.Generator:
    """Generator for one substream; identical SeedSpec gives bit-identical draws."""
    spawn_key: list[int] = []
    for label, index in seed.path:
        spawn_key.extend((_label_key(label), int(index)))
    seq = np.random.SeedSequence(entropy=seed.root, spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.Philox(seq))


# ── Subspaces ─────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Subspace:
    """An l-dimensional subspace of R^n held as an orthonormal n×l frame."""

    frame: np.ndarray

    def __post_init__(self) -> None:
        frame = np.asarray(self.frame, dtype=float)
        if frame.ndim != 2:
            raise DimensionMismatchError("subspace frame must be a 2-d array")
        n, l = frame.shape
        if not 1 <= l <= n:
            raise DimensionMismatchError(f"subspace dimension {l} must lie in [1, {n}]")
        gram = frame.T @ frame
        if not np.allclose(gram, np.eye(l), atol=ORTHONORMAL_TOL, rtol=0.0):
            raise LabError("subspace frame columns are not orthonormal")
        frame.setflags(write=False)
        object.__setattr__(self, "frame", frame)

    @property
    def ambient_dim(self) -> int:
        return int(self.frame.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frame.shape[1])

    @cached_property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.frame, axis=1)

    def embed(self, z: np.ndarray) -> np.ndarray:
        """Map coordinates in the frame basis (…, l) to points of R^n (…, n)."""
        return np.asarray(z) @ self.frame.T

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) @ self.frame) @ self.frame.T

    def contains(self, x: np.ndarray, tol: float = 1e-10) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.linalg.norm(self.project(x) - x, axis=-1) <= tol))

    @classmethod
    def coordinate(cls, n: int, indices: list[int] | tuple[int, ...]) -> "Subspace":
        frame = np.zeros((n, len(indices)))
        for col, i in enumerate(indices):
            frame[i, col] = 1.0
        return cls(frame)

    @classmethod
    def span(cls, vectors: np.ndarray) -> "Subspace":
        """Orthonormalise the columns of an n×l matrix (positive-diagonal convention)."""
        q, r = la.qr(np.asarray(vectors, dtype=float), mode="economic")
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return cls(q * signs)


# ── Samplers ──────────────────────────────────────────────────────────


def sample_gaussian(n: int, seed: SeedSpec, size: int | None = None) -> np.ndarray:
    """I.i.d. standard normal coordinates, shape (n,) or (size, n)."""
    if n < 1:
        raise DimensionMismatchError("dimension must be at least 1")
    rng = rng_for(seed)
    return rng.standard_normal(n if size is None else (size, n))


def _normalise_rows(g: np.ndarray) -> np.ndarray:
    radii = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / radii


def sample_sphere(n: int, seed: SeedSpec, size: int | None = None) -> np.ndarray:
    """Uniform points of S^{n-1} as normalised Gaussian directions."""
    if n < 1:
        raise DimensionMismatchError("sphere dimension n must be at least 1")
    rng = rng_for(seed)
    g = rng.standard_normal((1 if size is None else size, n))
    # A zero Gaussian row has probability zero; redraw it from the same stream.
    bad = ~np.any(g != 0.0, axis=1)
    while bad.any():
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        bad = ~np.any(g != 0.0, axis=1)
    x = _normalise_rows(g)
    return x[0] if size is None else x


def sample_grassmannian(n: int, l: int, seed: SeedSpec) -> Subspace:
    """Haar-distributed l-dimensional subspace: QR of an n×l Gaussian matrix."""
    if not 1 <= l <= n:
        raise DimensionMismatchError(f"subspace dimension l={l} must satisfy 1 <= l <= n={n}")
    for attempt in range(GRASSMANNIAN_MAX_RESAMPLES + 1):
        draw_seed = seed if attempt == 0 else seed.child("resample", attempt)
        g = rng_for(draw_seed).standard_normal((n, l))
        q, r = la.qr(g, mode="economic")
        diag = np.diag(r)
        if np.min(np.abs(diag)) > _RANK_TOL * max(1.0, float(np.max(np.abs(diag)))):
            if attempt:
                logger.info("Grassmannian draw resampled %d time(s) for rank deficiency", attempt)
            return Subspace(q * np.sign(diag))
    raise LabError(f"Gaussian draw stayed rank-deficient after {GRASSMANNIAN_MAX_RESAMPLES} resamples")


def sample_subspace_sphere(subspace: Subspace, seed: SeedSpec, size: int | None = None) -> np.ndarray:
    """Uniform points of S(E) = S^{n-1} ∩ E, returned in ambient coordinates."""
    z = sample_sphere(subspace.dim, seed, size)
    return subspace.embed(z)
