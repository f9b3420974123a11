"""Shared trilinear machinery for vertex-centered dense grids.

A grid stores one value per lattice vertex.  The lattice point with index
(i, j, k) sits at ``bbox.min + (i, j, k) * cell`` where
``cell = bbox.extent / (dims - 1)``.  Queries locate the containing cell,
with ties at interior lattice planes resolved toward the lower-index cell
(the interpolant value is continuous there; the one-sided gradient is the
lower cell's).
"""

from __future__ import annotations

import numpy as np

# Lattice coordinates within 1e-9 of a cell in lattice units are snapped to
# the exact knot so that queries at lattice points reproduce stored values.
_KNOT_SNAP = 1e-9

# Corner enumeration order for the 8 cell vertices: x fastest.
CORNER_OFFSETS = np.array(
    [[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)], dtype=np.int64
)


def lattice_axes(bbox_min, bbox_max, dims):
    """Per-axis lattice coordinates, computed as ``min + arange(n) * step``."""
    axes = []
    for d in range(3):
        n = int(dims[d])
        step = (bbox_max[d] - bbox_min[d]) / (n - 1)
        axes.append(bbox_min[d] + np.arange(n) * step)
    return axes


def lattice_points(bbox_min, bbox_max, dims):
    """All lattice points as an array of shape ``(nx, ny, nz, 3)``."""
    ax = lattice_axes(bbox_min, bbox_max, dims)
    gx, gy, gz = np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def locate(points, bbox_min, bbox_max, dims, clamp=False):
    """Map query points to (cell index, fractional coordinate) per axis.

    Returns ``(cell, frac)`` with shapes ``(n, 3)``; ``cell[p, d]`` is in
    ``[0, dims[d] - 2]`` and ``frac`` in ``[0, 1]``.  Raises ValueError for
    points outside the bounding box unless ``clamp`` is set.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dims = np.asarray(dims, dtype=np.int64)
    bbox_min = np.asarray(bbox_min, dtype=np.float64)
    bbox_max = np.asarray(bbox_max, dtype=np.float64)
    cell_sizes = (bbox_max - bbox_min) / (dims - 1)

    rel = (points - bbox_min) / cell_sizes
    nearest = np.rint(rel)
    rel = np.where(np.abs(rel - nearest) < _KNOT_SNAP, nearest, rel)

    if clamp:
        rel = np.clip(rel, 0.0, dims - 1.0)
    else:
        bad = np.any((rel < 0.0) | (rel > dims - 1.0), axis=1)
        if np.any(bad):
            p = points[np.argmax(bad)]
            raise ValueError(
                f"query point {p.tolist()} outside grid bounding box "
                f"[{bbox_min.tolist()}, {bbox_max.tolist()}]"
            )

    cell = np.minimum(np.floor(rel).astype(np.int64), dims - 2)
    frac = rel - cell
    # Interior knots belong to the lower cell (frac becomes 1.0 there).
    tie = (frac == 0.0) & (cell > 0)
    frac = np.where(tie, 1.0, frac)
    cell = np.where(tie, cell - 1, cell)
    return cell, frac


def corner_weights(frac):
    """Trilinear weights of the 8 cell corners, shape ``(n, 8)``.

    Weights are nonnegative and sum to 1 for frac in the unit cube.
    """
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    wx = np.stack([1.0 - fx, fx], axis=1)
    wy = np.stack([1.0 - fy, fy], axis=1)
    wz = np.stack([1.0 - fz, fz], axis=1)
    ox, oy, oz = CORNER_OFFSETS[:, 0], CORNER_OFFSETS[:, 1], CORNER_OFFSETS[:, 2]
    return wx[:, ox] * wy[:, oy] * wz[:, oz]


def corner_weight_gradients(frac, cell_sizes):
    """Spatial gradients of the trilinear corner weights, shape ``(n, 8, 3)``."""
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    wx = np.stack([1.0 - fx, fx], axis=1)
    wy = np.stack([1.0 - fy, fy], axis=1)
    wz = np.stack([1.0 - fz, fz], axis=1)
    ones = np.ones_like(fx)
    dwx = np.stack([-ones, ones], axis=1) / cell_sizes[0]
    dwy = np.stack([-ones, ones], axis=1) / cell_sizes[1]
    dwz = np.stack([-ones, ones], axis=1) / cell_sizes[2]
    ox, oy, oz = CORNER_OFFSETS[:, 0], CORNER_OFFSETS[:, 1], CORNER_OFFSETS[:, 2]
    gx = dwx[:, ox] * wy[:, oy] * wz[:, oz]
    gy = wx[:, ox] * dwy[:, oy] * wz[:, oz]
    gz = wx[:, ox] * wy[:, oy] * dwz[:, oz]
    return np.stack([gx, gy, gz], axis=-1)


def corner_flat_indices(cell, dims):
    """Flat value-array indices of the 8 corners of each cell, shape ``(n, 8)``.

    Uses the in-memory layout of a ``(nx, ny, nz)`` C-ordered array.
    """
    idx = cell[:, None, :] + CORNER_OFFSETS[None, :, :]
    return (idx[:, :, 0] * dims[1] + idx[:, :, 1]) * dims[2] + idx[:, :, 2]


def interpolate(values, cell, frac, dims):
    """Trilinear value interpolation; ``values`` is the (nx, ny, nz) array."""
    flat = values.reshape(-1)
    w = corner_weights(frac)
    v = flat[corner_flat_indices(cell, dims)]
    return np.sum(w * v, axis=1)


def interpolate_gradient(values, cell, frac, dims, cell_sizes):
    """Spatial gradient of the trilinear interpolant, shape ``(n, 3)``."""
    flat = values.reshape(-1)
    gw = corner_weight_gradients(frac, cell_sizes)
    v = flat[corner_flat_indices(cell, dims)]
    return np.sum(gw * v[:, :, None], axis=1)
