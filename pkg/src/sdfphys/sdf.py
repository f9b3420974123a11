"""Signed-distance fields: analytic primitives, dense voxel grids, queries.

All fields answer batched value and gradient queries at 3D points.  Analytic
primitives return closed-form distances; grids return the trilinear
interpolant and its exact piecewise-trilinear gradient.  Units are meters
throughout, and distance is negative inside a surface.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _grid

GRID_MAGIC = b"SDFG"
GRID_FORMAT_VERSION = 1


def _as_points(p):
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box with strictly positive extent per axis."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", np.asarray(self.min, dtype=np.float64))
        object.__setattr__(self, "max", np.asarray(self.max, dtype=np.float64))
        if self.min.shape != (3,) or self.max.shape != (3,):
            raise ValueError("Aabb corners must be 3-vectors")
        if not np.all(self.min < self.max):
            raise ValueError(f"degenerate Aabb: min {self.min} not below max {self.max}")

    @property
    def extent(self):
        return self.max - self.min

    def contains(self, points):
        pts, single = _as_points(points)
        inside = np.all((pts >= self.min) & (pts <= self.max), axis=1)
        return bool(inside[0]) if single else inside


@dataclass(frozen=True)
class SdfQuery:
    """Value and spatial gradient of a field at one point."""

    value: float
    gradient: np.ndarray


class SdfField:
    """Interface: batched signed-distance values and gradients."""

    def values(self, points):
        raise NotImplementedError

    def gradients(self, points):
        raise NotImplementedError


class Sphere(SdfField):
    def __init__(self, center, radius):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)

    def values(self, points):
        pts, _ = _as_points(points)
        return np.linalg.norm(pts - self.center, axis=1) - self.radius

    def gradients(self, points):
        pts, _ = _as_points(points)
        d = pts - self.center
        n = np.linalg.norm(d, axis=1, keepdims=True)
        # Gradient is undefined at the center; report zero there.
        return np.divide(d, n, out=np.zeros_like(d), where=n > 0)


class Halfspace(SdfField):
    """Points below the plane ``normal . p = offset`` are inside (negative)."""

    def __init__(self, normal, offset):
        n = np.asarray(normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("halfspace normal must be nonzero")
        self.normal = n / norm
        self.offset = float(offset)

    def values(self, points):
        pts, _ = _as_points(points)
        return pts @ self.normal - self.offset

    def gradients(self, points):
        pts, _ = _as_points(points)
        return np.broadcast_to(self.normal, pts.shape).copy()


class Box(SdfField):
    """Exact signed distance to an axis-aligned box."""

    def __init__(self, center, half_extents):
        self.center = np.asarray(center, dtype=np.float64)
        self.half_extents = np.asarray(half_extents, dtype=np.float64)
        if np.any(self.half_extents <= 0):
            raise ValueError("box half-extents must be positive")

    def values(self, points):
        pts, _ = _as_points(points)
        q = np.abs(pts - self.center) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def gradients(self, points):
        pts, _ = _as_points(points)
        d = pts - self.center
        q = np.abs(d) - self.half_extents
        sign = np.where(d >= 0, 1.0, -1.0)
        qpos = np.maximum(q, 0.0)
        out_norm = np.linalg.norm(qpos, axis=1, keepdims=True)
        grad_out = np.divide(sign * qpos, out_norm, out=np.zeros_like(qpos), where=out_norm > 0)
        # Inside: gradient points along the axis of least penetration depth.
        axis = np.argmax(q, axis=1)
        grad_in = np.zeros_like(d)
        rows = np.arange(len(pts))
        grad_in[rows, axis] = sign[rows, axis]
        is_out = (out_norm[:, 0] > 0)[:, None]
        return np.where(is_out, grad_out, grad_in)


class Union(SdfField):
    """Pointwise minimum of child fields; ties resolve to the first child."""

    def __init__(self, children):
        children = list(children)
        if not children:
            raise ValueError("union needs at least one child field")
        self.children = children

    def values(self, points):
        return np.min([c.values(points) for c in self.children], axis=0)

    def gradients(self, points):
        vals = np.stack([c.values(points) for c in self.children])
        grads = np.stack([c.gradients(points) for c in self.children])
        pick = np.argmin(vals, axis=0)
        return grads[pick, np.arange(vals.shape[1])]


class Transformed(SdfField):
    """Child field under a rigid transform: p maps through the inverse."""

    def __init__(self, child, rotation=None, translation=None):
        self.child = child
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        self.translation = (
            np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        )
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")

    def _local(self, points):
        pts, _ = _as_points(points)
        return (pts - self.translation) @ self.rotation

    def values(self, points):
        return self.child.values(self._local(points))

    def gradients(self, points):
        return self.child.gradients(self._local(points)) @ self.rotation.T


class SdfGrid(SdfField):
    """Dense vertex-centered signed-distance grid over a bounding box.

    ``values`` has shape ``dims`` and ``values[i, j, k]`` is the distance at
    lattice point ``bbox.min + (i, j, k) * cell``.  The on-disk layout keeps
    the x index varying fastest.  Out-of-box queries raise unless the grid
    was built with ``clamp=True``.
    """

    def __init__(self, dims, bbox, values, clamp=False):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) != 3 or any(d < 2 for d in self.dims):
            raise ValueError(f"grid needs at least 2 vertices per axis, got {self.dims}")
        self.bbox = bbox
        vals = np.asarray(values, dtype=np.float64)
        if vals.size != np.prod(self.dims):
            raise ValueError(
                f"value count {vals.size} does not match dims {self.dims}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        self.values_array = vals.reshape(self.dims)
        self.clamp = bool(clamp)

    @property
    def cell_sizes(self):
        return self.bbox.extent / (np.array(self.dims) - 1)

    def clamped(self):
        """A view of the same grid that clamps out-of-box queries."""
        return SdfGrid(self.dims, self.bbox, self.values_array, clamp=True)

    def _locate(self, points):
        return _grid.locate(points, self.bbox.min, self.bbox.max, self.dims, clamp=self.clamp)

    def values(self, points):
        pts, single = _as_points(points)
        cell, frac = self._locate(pts)
        out = _grid.interpolate(self.values_array, cell, frac, np.array(self.dims))
        return out[0] if single else out

    def gradients(self, points):
        pts, single = _as_points(points)
        cell, frac = self._locate(pts)
        out = _grid.interpolate_gradient(
            self.values_array, cell, frac, np.array(self.dims), self.cell_sizes
        )
        return out[0] if single else out


def query(field, p):
    """Value and gradient of ``field`` at a single point."""
    pts, _ = _as_points(p)
    if pts.shape != (1, 3):
        raise ValueError("query expects a single 3D point")
    value = float(field.values(pts)[0])
    gradient = np.asarray(field.gradients(pts)[0], dtype=np.float64)
    return SdfQuery(value=value, gradient=gradient)


def voxelize(field, bbox, dims):
    """Sample ``field`` on the vertex lattice of ``bbox`` into an SdfGrid."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 2 for d in dims):
        raise ValueError(f"voxelize needs at least 2 vertices per axis, got {dims}")
    pts = _grid.lattice_points(bbox.min, bbox.max, dims).reshape(-1, 3)
    vals = np.asarray(field.values(pts), dtype=np.float64)
    finite = np.isfinite(vals)
    if not np.all(finite):
        flat = int(np.argmax(~finite))
        i, j, k = np.unravel_index(flat, dims)
        raise ValueError(f"non-finite field value at lattice index ({i}, {j}, {k})")
    return SdfGrid(dims, bbox, vals.reshape(dims))


def expand_boundary(points, delta=0.1):
    """Bounding box of a point set, inflated by ``delta`` on every face."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.size == 0:
        raise ValueError("cannot expand the boundary of an empty point set")
    if delta <= 0:
        raise ValueError("boundary inflation must be positive")
    return Aabb(pts.min(axis=0) - delta, pts.max(axis=0) + delta)


def _file_values(grid):
    """Grid values in file order (x index varying fastest)."""
    return np.ascontiguousarray(grid.values_array.ravel(order="F"), dtype="<f4")


def write_grid(path, grid, magic=GRID_MAGIC):
    """Write a grid in the binary layout: magic, version, dims, bbox, f32 values."""
    header = struct.pack(
        "<4sI3I6d",
        magic,
        GRID_FORMAT_VERSION,
        *grid.dims,
        *grid.bbox.min.tolist(),
        *grid.bbox.max.tolist(),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_file_values(grid).tobytes())


def read_grid(path, magic=GRID_MAGIC, clamp=False):
    """Read a grid written by :func:`write_grid`."""
    header_size = struct.calcsize("<4sI3I6d")
    with open(path, "rb") as fh:
        header = fh.read(header_size)
        if len(header) != header_size:
            raise ValueError("truncated grid header")
        got_magic, version, nx, ny, nz, *bounds = struct.unpack("<4sI3I6d", header)
        if got_magic != magic:
            raise ValueError(f"bad magic {got_magic!r}, expected {magic!r}")
        if version != GRID_FORMAT_VERSION:
            raise ValueError(f"unsupported grid format version {version}")
        count = nx * ny * nz
        raw = fh.read(4 * count)
        if len(raw) != 4 * count:
            raise ValueError("truncated grid file")
    vals = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    vals = vals.reshape((nz, ny, nx)).transpose(2, 1, 0)
    bbox = Aabb(np.array(bounds[:3]), np.array(bounds[3:]))
    return SdfGrid((nx, ny, nz), bbox, vals, clamp=clamp)
