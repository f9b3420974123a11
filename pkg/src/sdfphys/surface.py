"""Surface-point extraction from signed-distance grids.

Coarse points come from zero-crossing lattice edges, found by shifting the
grid one vertex along each axis and linearly interpolating the crossing on
every edge whose endpoint values change sign.  A Newton-style refinement
step ``p - f(p) * grad f(p)`` against the continuous field then snaps the
points onto the surface.

Point ordering is deterministic: axes x, y, z in that order; within an axis,
crossing points in lattice scan order followed by exactly-zero vertices in
lattice scan order.  Exactly-zero vertices (the sign-product test skips the
edges touching them) are emitted once per axis pass and deduplicated across
passes by lattice index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _grid
from .sdf import SdfGrid

POINT_CLOUD_MAGIC = b"SPC1"

# Provenance kinds.
EDGE_CROSSING = 0
ZERO_VERTEX = 1


@dataclass
class SurfacePointCloud:
    """Ordered surface points with optional unit normals and provenance.

    ``provenance`` rows are ``(axis, i, j, k, kind)``: the generating lattice
    edge's axis and lower-endpoint index for crossings, or the vertex index
    for exactly-zero lattice vertices.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    provenance: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise ValueError("normals length must match point count")
            norms = np.linalg.norm(self.normals, axis=1)
            if len(norms) and not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("normals must be unit length")
        if self.provenance is not None:
            self.provenance = np.asarray(self.provenance, dtype=np.int64).reshape(-1, 5)
            if len(self.provenance) != len(self.points):
                raise ValueError("provenance length must match point count")

    def __len__(self):
        return len(self.points)


def _empty_cloud():
    return SurfacePointCloud(
        points=np.empty((0, 3)), provenance=np.empty((0, 5), dtype=np.int64)
    )


_AXES = {"x": 0, "y": 1, "z": 2}


def shift_interpolate(grid, axis):
    """Coarse surface points on the lattice edges along one axis.

    Every edge whose endpoint values have a strict sign change yields the
    linear interpolation of the zero crossing; every vertex whose stored
    value is exactly zero yields the vertex itself.
    """
    a = _AXES[axis] if isinstance(axis, str) else int(axis)
    dims = np.array(grid.dims)
    if dims[a] < 2:
        raise ValueError(f"grid needs at least 2 vertices along axis {a}")
    vals = grid.values_array
    axes = _grid.lattice_axes(grid.bbox.min, grid.bbox.max, grid.dims)
    step = grid.cell_sizes[a]

    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[a] = slice(0, dims[a] - 1)
    hi[a] = slice(1, dims[a])
    s0 = vals[tuple(lo)]
    s1 = vals[tuple(hi)]

    cross_idx = np.argwhere(s0 * s1 < 0)  # lattice scan order (k fastest)
    points = []
    provenance = []
    if len(cross_idx):
        v0 = s0[tuple(cross_idx.T)]
        v1 = s1[tuple(cross_idx.T)]
        t = v0 / (v0 - v1)
        base = np.stack(
            [axes[d][cross_idx[:, d]] for d in range(3)], axis=1
        )
        pts = base.copy()
        pts[:, a] += t * step
        points.append(pts)
        prov = np.zeros((len(cross_idx), 5), dtype=np.int64)
        prov[:, 0] = a
        prov[:, 1:4] = cross_idx
        prov[:, 4] = EDGE_CROSSING
        provenance.append(prov)

    zero_idx = np.argwhere(vals == 0.0)
    if len(zero_idx):
        zpts = np.stack([axes[d][zero_idx[:, d]] for d in range(3)], axis=1)
        points.append(zpts)
        prov = np.zeros((len(zero_idx), 5), dtype=np.int64)
        prov[:, 0] = a
        prov[:, 1:4] = zero_idx
        prov[:, 4] = ZERO_VERTEX
        provenance.append(prov)

    if not points:
        return _empty_cloud()
    return SurfacePointCloud(
        points=np.concatenate(points), provenance=np.concatenate(provenance)
    )


def extract_coarse(grid):
    """Coarse points from all three axis passes, zero vertices deduplicated."""
    parts = [shift_interpolate(grid, axis) for axis in ("x", "y", "z")]
    points = np.concatenate([p.points for p in parts]) if parts else np.empty((0, 3))
    provenance = np.concatenate([p.provenance for p in parts])
    if len(points) == 0:
        return _empty_cloud()

    dims = np.array(grid.dims)
    keep = np.ones(len(points), dtype=bool)
    seen = set()
    for row in range(len(points)):
        if provenance[row, 4] != ZERO_VERTEX:
            continue
        key = (
            provenance[row, 1] * dims[1] + provenance[row, 2]
        ) * dims[2] + provenance[row, 3]
        if key in seen:
            keep[row] = False
        else:
            seen.add(key)
    return SurfacePointCloud(points=points[keep], provenance=provenance[keep])


def refine(points, field, iterations=1):
    """Newton-style surface projection ``p <- p - f(p) * grad f(p)``.

    Queries the continuous field; grids are queried with clamping so a step
    that briefly leaves the bounding box does not abort the extraction.
    """
    if iterations < 1:
        raise ValueError("refine needs at least one iteration")
    cloud = points if isinstance(points, SurfacePointCloud) else SurfacePointCloud(points)
    if isinstance(field, SdfGrid) and not field.clamp:
        field = field.clamped()
    pts = cloud.points.copy()
    if len(pts) == 0:
        return SurfacePointCloud(pts, provenance=cloud.provenance)
    for _ in range(iterations):
        vals = field.values(pts)
        grads = field.gradients(pts)
        bad = ~(np.isfinite(vals) & np.all(np.isfinite(grads), axis=1))
        if np.any(bad):
            p = pts[np.argmax(bad)]
            raise ValueError(f"non-finite field query while refining point {p.tolist()}")
        pts = pts - vals[:, None] * grads
    return SurfacePointCloud(points=pts, provenance=cloud.provenance)


def _unit_normals(field, points):
    grads = field.gradients(points)
    norms = np.linalg.norm(grads, axis=1, keepdims=True)
    return np.divide(grads, norms, out=np.zeros_like(grads), where=norms > 1e-12)


def extract_surface_points(field, bbox, dims, iterations=1):
    """Full pipeline: voxelize, coarse extraction, refinement, normals."""
    from .sdf import voxelize

    grid = voxelize(field, bbox, dims)
    coarse = extract_coarse(grid)
    fine = refine(coarse, field, iterations=iterations)
    if len(fine) == 0:
        return fine
    fine.normals = _unit_normals(field, fine.points)
    return fine


def extract_surface_points_from_grid(grid, iterations=1):
    """Extraction pipeline when only a sampled grid is available.

    Refinement then queries the clamped trilinear interpolant; its gradient
    is discontinuous across cell faces, so residuals are larger than when an
    analytic field drives the refinement.
    """
    coarse = extract_coarse(grid)
    clamped = grid.clamped()
    fine = refine(coarse, clamped, iterations=iterations)
    if len(fine) == 0:
        return fine
    fine.normals = _unit_normals(clamped, fine.points)
    return fine


def write_ply(path, cloud):
    """ASCII PLY with double-precision decimal vertex coordinates."""
    has_normals = cloud.normals is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if has_normals:
        lines += ["property double nx", "property double ny", "property double nz"]
    lines.append("end_header")
    rows = []
    for i in range(len(cloud)):
        vals = list(cloud.points[i])
        if has_normals:
            vals += list(cloud.normals[i])
        rows.append(" ".join(f"{v:.17g}" for v in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines + rows) + "\n")


def read_ply(path):
    """Read point clouds written by :func:`write_ply`."""
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        count = None
        props = []
        for line in fh:
            token = line.strip()
            if token == "end_header":
                break
            parts = token.split()
            if parts[:2] == ["element", "vertex"]:
                count = int(parts[2])
            elif parts[0] == "property":
                props.append(parts[2])
        if count is None:
            raise ValueError("PLY header missing vertex element")
        data = np.array(
            [[float(v) for v in fh.readline().split()] for _ in range(count)],
            dtype=np.float64,
        ).reshape(count, len(props))
    points = data[:, :3] if count else np.empty((0, 3))
    normals = None
    if "nx" in props and count:
        normals = data[:, 3:6]
    return SurfacePointCloud(points=points, normals=normals)


def write_point_cloud(path, cloud):
    """Binary layout: magic, point count u64, xyz f64 triples, optional normals."""
    with open(path, "wb") as fh:
        fh.write(POINT_CLOUD_MAGIC)
        fh.write(struct.pack("<Q", len(cloud)))
        fh.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
        if cloud.normals is not None:
            fh.write(np.ascontiguousarray(cloud.normals, dtype="<f8").tobytes())


def read_point_cloud(path):
    """Read point clouds written by :func:`write_point_cloud`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != POINT_CLOUD_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {POINT_CLOUD_MAGIC!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        body = fh.read()
    floats = np.frombuffer(body, dtype="<f8")
    if floats.size not in (count * 3, count * 6):
        raise ValueError("point cloud payload size mismatch")
    points = floats[: count * 3].reshape(count, 3).copy()
    normals = None
    if floats.size == count * 6:
        normals = floats[count * 3 :].reshape(count, 3).copy()
    return SurfacePointCloud(points=points, normals=normals)
