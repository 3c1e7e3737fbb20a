"""Deterministic sample sets: dyadic shells, low-discrepancy balls and boxes."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from .errors import UnsupportedDimension


@lru_cache(maxsize=None)
def shell_directions(dim: int) -> np.ndarray:
    """Fixed angular set: +-1 in 1D, 16 directions in 2D, 26 cube directions in 3D."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = 2.0 * np.pi * np.arange(16) / 16
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        pts = [p for p in itertools.product((-1.0, 0.0, 1.0), repeat=3) if any(p)]
        d = np.array(pts)
        return d / np.linalg.norm(d, axis=1)[:, None]
    raise UnsupportedDimension(f"sampling supports N <= 3, got N={dim}")


def halton(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """``n`` scrambled Halton points in ``[0, 1)^dim``."""
    return qmc.Halton(d=dim, scramble=True, seed=seed).random(n)


def halton_ball(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the closed unit ball.

    Cube points are pushed radially onto the ball (``x |x|_inf / |x|_2``),
    which is a bijection of ``[-1, 1]^N`` onto ``B_1``.
    """
    x = 2.0 * halton(n, dim, seed) - 1.0
    r2 = np.linalg.norm(x, axis=1)
    rinf = np.max(np.abs(x), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r2 > 0, rinf / r2, 0.0)
    return x * scale[:, None]


def ball_offsets(dim: int, radius: float, n_shells: int = 21, n_points: int = 100,
                 seed: int = 0) -> np.ndarray:
    """Offsets ``z`` with ``|z| <= radius``: shells ``radius 2^-k`` plus a Halton cloud."""
    dirs = shell_directions(dim)
    radii = radius * 2.0 ** -np.arange(n_shells)
    shells = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    cloud = radius * halton_ball(n_points, dim, seed) if n_points else np.empty((0, dim))
    return np.concatenate([shells, cloud], axis=0)


def box_samples(lo, hi, n: int, seed: int = 0, include_corners: bool = True) -> np.ndarray:
    """Halton points in the box ``[lo, hi]`` (plus its corners)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    dim = lo.size
    pts = lo + (hi - lo) * halton(n, dim, seed)
    if include_corners:
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        pts = np.concatenate([pts, corners], axis=0)
    return pts
