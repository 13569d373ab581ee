"""Simplex projections and meshes used by the exponent and rate optimizers."""

from itertools import product
from math import comb
from typing import Iterator, Sequence

import numpy as np

PROB_FLOOR = 1e-12


def project_simplex(y: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection of each row of ``y`` (last axis) onto the simplex.

    Sort-based: for every row find the largest k with
    ``u_k > (cumsum(u)_k - total) / k`` on the descending sort ``u``.
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape
    rows = y.reshape(-1, shape[-1])
    n = rows.shape[1]
    u = -np.sort(-rows, axis=1)
    thresholds = (np.cumsum(u, axis=1) - total) / np.arange(1, n + 1)
    k = n - 1 - np.argmax((thresholds < u)[:, ::-1], axis=1)
    theta = thresholds[np.arange(rows.shape[0]), k]
    return np.clip(rows - theta[:, None], 0.0, None).reshape(shape)


def clamp_floor(p: np.ndarray, floor: float = PROB_FLOOR) -> np.ndarray:
    """Clip to ``floor`` and renormalise along the last axis."""
    p = np.clip(np.asarray(p, dtype=float), floor, None)
    return p / p.sum(axis=-1, keepdims=True)


def simplex_points(dim: int, denominator: int) -> np.ndarray:
    """All points of the ``dim``-simplex with coordinates in ``(1/denominator)Z``."""
    if dim <= 0 or denominator <= 0:
        raise ValueError("dim and denominator must be positive")
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], denominator, dim)
    return np.array(out, dtype=float) / denominator


def count_simplex_points(dim: int, denominator: int) -> int:
    return comb(denominator + dim - 1, dim - 1)


def product_mesh(dims: Sequence[int], denominator: int) -> Iterator[tuple]:
    """Iterate the product of per-row simplex meshes (one row per entry of ``dims``)."""
    grids = [simplex_points(d, denominator) for d in dims]
    for combo in product(*(range(len(g)) for g in grids)):
        yield tuple(grids[i][j] for i, j in enumerate(combo))


def local_box_mesh(center: np.ndarray, step: float, points: int) -> np.ndarray:
    """Box mesh of ``points`` values per free coordinate around ``center``.

    ``center`` has shape (rows, d); the first d-1 coordinates of every row are
    free and the last one closes the row. Points leaving the simplex are dropped.
    Returns shape (n_points, rows, d).
    """
    center = np.asarray(center, dtype=float)
    rows, d = center.shape
    free = center[:, :-1].reshape(-1)
    offsets = np.linspace(-step, step, points)
    axes = [np.clip(c + offsets, 0.0, 1.0) for c in free]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, free.size)
    grid = np.unique(grid, axis=0)
    grid = grid.reshape(-1, rows, d - 1)
    last = 1.0 - grid.sum(axis=2, keepdims=True)
    full = np.concatenate([grid, last], axis=2)
    keep = np.all(full[:, :, -1] >= -1e-12, axis=1)
    full = full[keep]
    full[:, :, -1] = np.clip(full[:, :, -1], 0.0, None)
    return full
