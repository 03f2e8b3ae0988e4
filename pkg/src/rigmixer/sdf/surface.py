"""Zero level set extraction."""

from __future__ import annotations

from typing import Callable

import numpy as np
from skimage.measure import marching_cubes

from ..errors import NoSurface
from ..skeleton import BoundingBox, Mesh

# values beyond this many cells only slow marching cubes down without moving the surface
_CLIP_CELLS = 4.0
_CHUNK = 1 << 18


def extraction_grid(region: BoundingBox, resolution: int) -> tuple[tuple[int, int, int], np.ndarray, float]:
    """Cubic cells, ``resolution`` nodes along the region's longest axis."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    size = 2.0 * np.asarray(region.half_extents, float)
    if not np.all(size > 0):
        raise ValueError("extraction region must have positive volume")
    h = float(size.max()) / (resolution - 1)
    n = np.maximum(2, np.ceil(size / h - 1e-9).astype(int) + 1)
    origin = region.center - 0.5 * h * (n - 1)
    return (int(n[0]), int(n[1]), int(n[2])), origin, h


def sample_volume(sampler: Callable[[np.ndarray], np.ndarray], dims, origin, h) -> np.ndarray:
    axes = [origin[a] + h * np.arange(dims[a]) for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    out = np.empty(len(pts))
    for s in range(0, len(pts), _CHUNK):
        out[s:s + _CHUNK] = sampler(pts[s:s + _CHUNK])
    return out.reshape(dims)


def extract_surface(sampler: Callable[[np.ndarray], np.ndarray], region: BoundingBox, resolution: int) -> Mesh:
    """Marching cubes at level 0; ``sampler`` maps (N, 3) world points to values.

    Triangles are wound so their normals point along the field gradient, i.e.
    outward for a signed distance that is negative inside.
    """
    dims, origin, h = extraction_grid(region, resolution)
    vol = sample_volume(sampler, dims, origin, h)
    return surface_from_volume(vol, origin, h)


def surface_from_volume(vol: np.ndarray, origin, h: float) -> Mesh:
    if not (vol.min() < 0.0 < vol.max()):
        raise NoSurface("field has no sign change over the region")
    vol = np.clip(vol, -_CLIP_CELLS * h, _CLIP_CELLS * h)
    try:
        verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=(h, h, h), gradient_direction="ascent")
    except (ValueError, RuntimeError) as exc:
        raise NoSurface(str(exc)) from exc
    verts = verts + np.asarray(origin, float)
    faces = faces.astype(np.int64)
    if signed_volume(verts, faces) < 0.0:
        faces = faces[:, ::-1].copy()
    return Mesh(verts, faces)


def signed_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    a, b, c = (verts[faces[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)
