"""Shared fixtures: particle lattices for drop-test scenarios."""

import numpy as np
import pytest


def plane_lattice(z=0.0, half_extent=0.1, spacing=0.01, center=(0.0, 0.0)):
    """Square lattice of boundary particles on the plane at height ``z``."""
    xs = np.arange(-half_extent, half_extent + spacing / 2, spacing) + center[0]
    ys = np.arange(-half_extent, half_extent + spacing / 2, spacing) + center[1]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))], axis=1)
    return pts


def box_lattice(counts, spacing=0.01, center=(0.0, 0.0, 0.0)):
    """Solid box lattice of particles, centered at ``center``."""
    axes = [
        (np.arange(n) - (n - 1) / 2.0) * spacing + c
        for n, c in zip(counts, center)
    ]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


@pytest.fixture
def plane():
    return plane_lattice(z=0.0, half_extent=0.1, spacing=0.01)


@pytest.fixture
def cube_on_plane():
    """4x4x4 particle cube whose bottom layer already touches the plane.

    Laterally aligned with the plane lattice so every bottom particle has a
    boundary particle directly underneath.
    """
    body = box_lattice((4, 4, 4), spacing=0.01, center=(0.005, 0.005, 0.0))
    body[:, 2] += -body[:, 2].min() + 0.009
    return body
