"""Vector primitives and two-way additive secret sharing.

Model updates are plain 1-D ``float64`` numpy arrays. A participant masks its
update ``w`` with Gaussian noise ``zeta`` and hands out two shares::

    share1 = w + zeta      (goes to TP)
    share2 = w - zeta      (goes to SP)

Either share alone is ``w`` plus large noise; the average of both is ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ShapeError

#: Default per-coordinate standard deviation of the masking noise.
DEFAULT_NOISE_STD = 20.0

#: Relative reconstruction tolerance, scaled by ``1 + max|w|``.
RECON_RTOL = 1e-9


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array (copying if needed)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")


def recon_tolerance(w: np.ndarray) -> float:
    """Absolute tolerance for comparing a reconstruction against ``w``."""
    return RECON_RTOL * (1.0 + float(np.max(np.abs(w))))


@dataclass(frozen=True)
class SharePair:
    """Both additive shares of one update and the noise scale used."""

    share1: np.ndarray
    share2: np.ndarray
    noise_std: float

    def __post_init__(self):
        _check_same_dim(self.share1, self.share2)

    @property
    def dim(self) -> int:
        return self.share1.shape[0]


def split_update(w, noise_std: float, rng: np.random.Generator) -> SharePair:
    """Mask ``w`` into two shares ``(w + zeta, w - zeta)``.

    ``zeta`` is i.i.d. ``N(0, noise_std**2)`` per coordinate, drawn from
    ``rng``; with ``noise_std == 0`` both shares equal ``w``.
    """
    w = as_vector(w, "w")
    if not np.isfinite(noise_std) or noise_std < 0:
        raise InvalidInputError(f"noise_std must be finite and >= 0, got {noise_std}")
    zeta = rng.normal(0.0, noise_std, size=w.shape) if noise_std > 0 else np.zeros_like(w)
    return SharePair(share1=w + zeta, share2=w - zeta, noise_std=float(noise_std))


def reconstruct(pair: SharePair) -> np.ndarray:
    """Recover the update as the average of the two shares."""
    _check_same_dim(pair.share1, pair.share2)
    return 0.5 * (pair.share1 + pair.share2)


def l2_dist_sq(a, b) -> float:
    """Squared Euclidean distance between two vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    diff = a - b
    return float(diff @ diff)


def mean_vectors(vs: Sequence) -> np.ndarray:
    """Coordinate-wise mean of a non-empty list of equal-length vectors."""
    if len(vs) == 0:
        raise InvalidInputError("cannot average an empty list of vectors")
    stacked = stack_vectors(vs)
    return stacked.mean(axis=0)


def stack_vectors(vs: Sequence) -> np.ndarray:
    """Stack vectors into an ``(n, dim)`` array, checking dims agree."""
    arrs = [np.asarray(v, dtype=np.float64) for v in vs]
    if not arrs:
        return np.zeros((0, 0))
    dim = arrs[0].shape
    for v in arrs:
        if v.ndim != 1:
            raise ShapeError(f"expected 1-D vectors, got shape {v.shape}")
        if v.shape != dim:
            raise ShapeError(f"dimension mismatch: {v.shape} vs {dim}")
    return np.vstack(arrs)
