"""Seeded Haar-random orthogonal transforms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeding import stream_rng


@dataclass(frozen=True, eq=False)
class Rotation:
    """Orthogonal ``d x d`` matrix regenerated from ``(seed, d)``.

    The matrix is kept in float64; :meth:`rotate` and :meth:`rotate_back`
    compute in float64 and return ``dtype`` (float32 unless asked otherwise).
    Both accept a single vector or an ``(n, d)`` batch.
    """

    d: int
    seed: int
    matrix: np.ndarray

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d or x.ndim > 2:
            raise ValueError(f"expected vectors of dimension {self.d}, got shape {x.shape}")
        return x

    def rotate(self, x, dtype=np.float32) -> np.ndarray:
        x = self._check(x)
        return (x @ self.matrix.T).astype(dtype, copy=False)

    def rotate_back(self, y, dtype=np.float32) -> np.ndarray:
        y = self._check(y)
        return (y @ self.matrix).astype(dtype, copy=False)


def generate_rotation(seed: int, d: int) -> Rotation:
    """QR of a seeded standard-Gaussian matrix, columns sign-fixed by ``diag(R)``.

    The sign correction makes the distribution exactly Haar rather than
    depending on the LAPACK sign convention.
    """
    if d < 1:
        raise ValueError(f"rotation dimension must be >= 1, got {d}")
    g = stream_rng(seed, "rot").standard_normal((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[None, :]
    q.setflags(write=False)
    return Rotation(d, int(seed), q)


def rotate(rot: Rotation, x) -> np.ndarray:
    return rot.rotate(x)


def rotate_back(rot: Rotation, y) -> np.ndarray:
    return rot.rotate_back(y)
