"""Bounding-box mapped SDF lookups and their interpolation per unified bone."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence, Union

import numpy as np

from ..errors import DegenerateBox, EmptyList, MissingGrid
from ..skeleton import BoundingBox, LocalFrame
from ..unify import UnifiedBone
from .grid import SENTINEL, SdfGrid, sample_sdf

# A side's field for one bone: a grid in the bone's local frame, a callable
# taking local points, or None when the bone owns no geometry.
Field = Union[SdfGrid, Callable[[np.ndarray], np.ndarray], None]

REGION_INFLATION = 0.10
_MIN_EXTENT = 1e-9


def bbox_map(p, from_box: BoundingBox, to_box: BoundingBox) -> np.ndarray:
    """Per-axis rescale of ``p`` from one box onto another."""
    if np.any(np.asarray(from_box.half_extents) <= 0):
        raise DegenerateBox("cannot map out of a box with a zero extent")
    return _map(np.asarray(p, float), from_box, to_box.center, to_box.half_extents)


def _map(p, from_box: BoundingBox, to_center, to_half) -> np.ndarray:
    if np.array_equal(from_box.center, to_center) and np.array_equal(from_box.half_extents, to_half):
        return p
    return to_center + (p - from_box.center) * (to_half / from_box.half_extents)


def _floored(box: BoundingBox) -> BoundingBox:
    return BoundingBox(box.center, np.maximum(box.half_extents, _MIN_EXTENT))


def _sample(field: Field, local: np.ndarray) -> np.ndarray:
    if isinstance(field, SdfGrid):
        return np.asarray(sample_sdf(field, local)).reshape(-1)
    return np.asarray(field(local), float).reshape(-1)


def _side_field(fields: Mapping[int, Field], bone: int | None, side: str) -> Field:
    if bone is None:
        return None
    if bone not in fields:
        raise MissingGrid(f"no SDF for {side} bone {bone}")
    return fields[bone]


def interp_sdf_values(
    points: np.ndarray,
    k: UnifiedBone,
    src_fields: Mapping[int, Field],
    tgt_fields: Mapping[int, Field],
    t: float,
    frame: LocalFrame | None = None,
) -> np.ndarray:
    """Interpolated SDF of unified bone ``k`` at world points.

    ``frame`` overrides ``k.frame`` when the unified skeleton is posed. A void
    side, or a side whose bone owns no geometry, contributes 0.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    frame = k.frame if frame is None else frame
    kbox = _floored(k.box)
    local = frame.to_local(pts)
    out = np.zeros(len(pts))
    # a side with zero weight is never looked up, so its grid need not exist
    f_s = _side_field(src_fields, k.source, "source") if t != 1.0 else None
    f_d = _side_field(tgt_fields, k.target, "target") if t != 0.0 else None
    if f_s is not None and k.source_box is not None:
        q = _map(local, kbox, k.source_box.center, k.source_box.half_extents)
        out += (1.0 - t) * _sample(f_s, q)
    if f_d is not None and k.target_box is not None:
        q = _map(local, kbox, k.target_box.center, k.target_box.half_extents)
        out += t * _sample(f_d, q)
    return out


def interp_sdf_value(p_world, k: UnifiedBone, src_sdfs: Mapping[int, Field],
                     tgt_sdfs: Mapping[int, Field], t: float) -> float:
    return float(interp_sdf_values(np.asarray(p_world, float)[None], k, src_sdfs, tgt_sdfs, t)[0])


def union_sdf(values: Sequence[float]) -> float:
    vals = list(values)
    if not vals:
        raise EmptyList("union of no values")
    return float(min(vals))


def bone_region(k: UnifiedBone) -> BoundingBox | None:
    """Local box where bone ``k`` takes part in the union, or None if it has no extent."""
    if k.box.is_degenerate or not np.all(np.isfinite(k.box.half_extents)):
        return None
    h = k.box.half_extents
    return BoundingBox(k.box.center, h * (1.0 + REGION_INFLATION) + REGION_INFLATION * float(h.max()))


def union_over_bones(
    points: np.ndarray,
    bones: Sequence[UnifiedBone],
    src_fields: Mapping[int, Field],
    tgt_fields: Mapping[int, Field],
    t: float,
    frames: Mapping[int, LocalFrame] | None = None,
) -> np.ndarray:
    """Min-union of every bone's interpolated SDF.

    Each bone only contributes inside its inflated box. Points outside every
    bone's box get their distance to the nearest such box, which is positive.
    """
    pts = np.asarray(points, float).reshape(-1, 3)
    best = np.full(len(pts), np.inf)
    gap = np.full(len(pts), np.inf)
    for k in bones:
        region = bone_region(k)
        if region is None:
            continue
        frame = k.frame if frames is None else frames.get(k.id, k.frame)
        local = frame.to_local(pts)
        d = np.abs(local - region.center) - region.half_extents
        inside = np.all(d <= 0, axis=1)
        gap = np.minimum(gap, np.linalg.norm(np.maximum(d, 0.0), axis=1))
        if inside.any():
            v = interp_sdf_values(pts[inside], k, src_fields, tgt_fields, t, frame)
            best[inside] = np.minimum(best[inside], v)
    none = ~np.isfinite(best)
    best[none] = np.where(np.isfinite(gap[none]), gap[none], SENTINEL)
    return best
