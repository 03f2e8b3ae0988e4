"""Voxel grids, per-part voxelization, signed distance transform and sampling.

Grids live in a bone's local frame. Node ``(i, j, k)`` sits at
``origin + spacing * (i, j, k)``; nodes double as voxel centers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import DegenerateBox, EmptyPart, ParseError, UnclosablePart
from ..skeleton import BoundingBox, LocalFrame, Mesh

SENTINEL = 1e9
INFLATION = 0.10
MIN_MARGIN_CELLS = 2
# Fixed offset of each ray origin in (y, z), as a fraction of the spacing, so
# rays never pass exactly through mesh vertices or edges on regular inputs.
_RAY_JITTER = np.array([np.sqrt(2.0) - 1.0, np.sqrt(3.0) - 1.0]) * 1e-6


@dataclass(frozen=True)
class VoxelGrid:
    dims: tuple[int, int, int]
    origin: np.ndarray
    spacing: float
    occupancy: np.ndarray

    def __post_init__(self):
        _check_layout(self.dims, self.spacing, self.occupancy)

    def node_positions(self) -> np.ndarray:
        return _nodes(self.dims, self.origin, self.spacing)


@dataclass(frozen=True)
class SdfGrid:
    dims: tuple[int, int, int]
    origin: np.ndarray
    spacing: float
    values: np.ndarray
    # "all_empty" / "all_occupied" when the grid holds only sentinels
    sentinel: str | None = None

    def __post_init__(self):
        _check_layout(self.dims, self.spacing, self.values)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.asarray(self.dims) - 1)

    def node_positions(self) -> np.ndarray:
        return _nodes(self.dims, self.origin, self.spacing)


def _check_layout(dims, spacing, arr) -> None:
    if len(dims) != 3 or any(int(d) < 2 for d in dims):
        raise ValueError(f"grid dims must be >= 2 per axis, got {dims}")
    if not spacing > 0:
        raise ValueError(f"grid spacing must be positive, got {spacing}")
    if tuple(arr.shape) != tuple(dims):
        raise ValueError(f"array shape {arr.shape} does not match dims {dims}")


def _nodes(dims, origin, spacing) -> np.ndarray:
    axes = [origin[a] + spacing * np.arange(dims[a]) for a in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def grid_layout(box: BoundingBox, resolution: int) -> tuple[tuple[int, int, int], np.ndarray, float]:
    """Dims, origin and spacing of the grid covering ``box`` inflated per axis."""
    if resolution <= 2 * MIN_MARGIN_CELLS + 1:
        raise ValueError(f"resolution must be greater than {2 * MIN_MARGIN_CELLS + 1}")
    half = np.asarray(box.half_extents, float)
    hmax = float(half.max())
    if not hmax > 0:
        raise DegenerateBox("part box has zero extent on every axis")
    # the longest axis spans `resolution` nodes including its margin
    spacing = max(2.0 * hmax * (1.0 + INFLATION) / (resolution - 1),
                  2.0 * hmax / (resolution - 1 - 2 * MIN_MARGIN_CELLS))
    ghalf = np.maximum(half * (1.0 + INFLATION), half + MIN_MARGIN_CELLS * spacing)
    n = np.maximum(2, np.ceil(2.0 * ghalf / spacing - 1e-9).astype(int) + 1)
    n[np.argmax(half)] = max(n[np.argmax(half)], resolution)
    origin = box.center - 0.5 * spacing * (n - 1)
    return (int(n[0]), int(n[1]), int(n[2])), origin, spacing


def cap_holes(mesh: Mesh) -> Mesh:
    """Close every boundary loop with a fan of triangles to the loop centroid.

    Boundary edges are the edges used an odd number of times, so the result is
    closed in the sense parity ray casting needs even for non-manifold input.
    """
    tris = mesh.triangles
    if not len(tris):
        return mesh
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    open_edges = uniq[counts % 2 == 1]
    if not len(open_edges):
        return mesh
    verts = mesh.vertices
    n = len(verts)
    adj = coo_matrix((np.ones(len(open_edges)), (open_edges[:, 0], open_edges[:, 1])), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    comp = label[open_edges[:, 0]]
    new_verts, new_tris = [verts], [tris]
    for i, c in enumerate(np.unique(comp)):
        loop = open_edges[comp == c]
        ids = np.unique(loop)
        if len(ids) < 3:
            raise UnclosablePart(f"boundary loop with {len(ids)} vertices")
        centroid = verts[ids].mean(axis=0)
        if not np.all(np.isfinite(centroid)):
            raise UnclosablePart("boundary loop centroid is not finite")
        cid = n + i
        new_verts.append(centroid[None])
        new_tris.append(np.column_stack([loop[:, 1], loop[:, 0], np.full(len(loop), cid)]))
    capped = Mesh(np.concatenate(new_verts), np.concatenate(new_tris))
    e2 = np.sort(np.concatenate([capped.triangles[:, [0, 1]], capped.triangles[:, [1, 2]], capped.triangles[:, [2, 0]]]), axis=1)
    _, c2 = np.unique(e2, axis=0, return_counts=True)
    if np.any(c2 % 2):
        raise UnclosablePart("part still has open edges after capping")
    return capped


def occupancy_by_parity(local_vertices: np.ndarray, triangles: np.ndarray,
                        dims, origin, spacing) -> np.ndarray:
    """Nodes inside a closed surface, by counting +x ray crossings."""
    nx, ny, nz = dims
    jy, jz = _RAY_JITTER * spacing
    flips = np.zeros((nx + 1, ny, nz), dtype=np.int32)
    v = np.asarray(local_vertices, float)
    for tri in triangles:
        p = v[tri]
        y, z = p[:, 1], p[:, 2]
        j0 = max(0, int(np.ceil((y.min() - origin[1] - jy) / spacing)))
        j1 = min(ny - 1, int(np.floor((y.max() - origin[1] - jy) / spacing)))
        k0 = max(0, int(np.ceil((z.min() - origin[2] - jz) / spacing)))
        k1 = min(nz - 1, int(np.floor((z.max() - origin[2] - jz) / spacing)))
        if j0 > j1 or k0 > k1:
            continue
        det = (y[1] - y[0]) * (z[2] - z[0]) - (y[2] - y[0]) * (z[1] - z[0])
        if det == 0.0:
            continue
        J, K = np.meshgrid(np.arange(j0, j1 + 1), np.arange(k0, k1 + 1), indexing="ij")
        qy = origin[1] + jy + spacing * J
        qz = origin[2] + jz + spacing * K
        # barycentric coordinates of the ray in the yz projection
        l1 = ((qy - y[0]) * (z[2] - z[0]) - (y[2] - y[0]) * (qz - z[0])) / det
        l2 = ((y[1] - y[0]) * (qz - z[0]) - (qy - y[0]) * (z[1] - z[0])) / det
        l0 = 1.0 - l1 - l2
        hit = (l0 > 0) & (l1 > 0) & (l2 > 0)
        if not hit.any():
            continue
        xh = l0[hit] * p[0, 0] + l1[hit] * p[1, 0] + l2[hit] * p[2, 0]
        # nodes strictly before the crossing see it along +x
        idx = np.clip(np.ceil((xh - origin[0]) / spacing), 0, nx).astype(np.int64)
        Jh, Kh = J[hit], K[hit]
        np.add.at(flips, (np.zeros_like(idx), Jh, Kh), 1)
        np.add.at(flips, (idx, Jh, Kh), 1)
    return (np.cumsum(flips[:nx], axis=0) % 2).astype(bool)


def voxelize_part(part: Mesh, box: BoundingBox, frame: LocalFrame, resolution: int) -> VoxelGrid:
    """Occupancy grid of a (possibly open) part mesh in the bone-local frame."""
    if not len(part.triangles):
        raise EmptyPart("part mesh has no triangles")
    dims, origin, spacing = grid_layout(box, resolution)
    closed = cap_holes(part)
    local = frame.to_local(closed.vertices)
    occ = occupancy_by_parity(local, closed.triangles, dims, origin, spacing)
    return VoxelGrid(dims, origin, spacing, occ)


def signed_distance_transform(vox: VoxelGrid) -> SdfGrid:
    occ = vox.occupancy
    if not occ.any():
        return SdfGrid(vox.dims, vox.origin, vox.spacing, np.full(vox.dims, SENTINEL), "all_empty")
    if occ.all():
        return SdfGrid(vox.dims, vox.origin, vox.spacing, np.full(vox.dims, -SENTINEL), "all_occupied")
    outside = ndimage.distance_transform_edt(~occ)
    inside = ndimage.distance_transform_edt(occ)
    values = np.where(occ, -inside, outside) * vox.spacing
    return SdfGrid(vox.dims, vox.origin, vox.spacing, values)


def part_sdf(part: Mesh, box: BoundingBox, frame: LocalFrame, resolution: int) -> SdfGrid:
    return signed_distance_transform(voxelize_part(part, box, frame, resolution))


def sample_sdf(grid: SdfGrid, p) -> np.ndarray | float:
    """Trilinear lookup; outside the grid, clamp and add the distance to the grid box."""
    pts = np.asarray(p, float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    lo, hi = grid.origin, grid.upper
    clamped = np.clip(pts, lo, hi)
    extra = np.linalg.norm(pts - clamped, axis=1)
    u = (clamped - lo) / grid.spacing
    dims = np.asarray(grid.dims)
    i0 = np.clip(np.floor(u).astype(np.int64), 0, dims - 2)
    f = np.clip(u - i0, 0.0, 1.0)
    v = grid.values
    out = np.zeros(len(pts))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                out += wx * wy * wz * v[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    out += extra
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

_MAGIC = b"RMXSDF1"
_HEADER = struct.Struct("<7s3I3dd")


def write_sdf_cache(path: str | Path, grid: SdfGrid) -> None:
    header = _HEADER.pack(_MAGIC, *grid.dims, *map(float, grid.origin), float(grid.spacing))
    body = np.asarray(grid.values, dtype="<f4").ravel(order="F").tobytes()
    Path(path).write_bytes(header + body)


def read_sdf_cache(path: str | Path) -> SdfGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated SDF cache header")
    magic, nx, ny, nz, ox, oy, oz, spacing = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    n = nx * ny * nz
    if len(data) != _HEADER.size + 4 * n:
        raise ParseError(f"{path}: expected {n} values, found {(len(data) - _HEADER.size) // 4}")
    vals = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(float).reshape((nx, ny, nz), order="F")
    sentinel = None
    if np.all(vals == SENTINEL):
        sentinel = "all_empty"
    elif np.all(vals == -SENTINEL):
        sentinel = "all_occupied"
    return SdfGrid((nx, ny, nz), np.array([ox, oy, oz]), spacing, vals, sentinel)
