"""Evaluating the interpolated shape, at rest or posed.

Per-part fields are built lazily and cached. Posed queries either re-voxelize
the skinned parts (``voxelize``) or pull the query back into the rest pose
through a per-part displacement field and read the rest SDF (``advect``).
"""

from __future__ import annotations

import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Mapping

import numpy as np

from ..errors import EmptyPart, SingularSystem
from ..pose import Affine, Pose, apply_skinning, skeleton_transforms, transfer_pose, unified_transforms
from ..skeleton import BoundingBox, Character, LocalFrame, Mesh, part_bounding_box, part_mesh, segment_mesh
from ..unify import UnifiedSkeleton
from .grid import SdfGrid, part_sdf, sample_sdf
from .interp import Field, union_over_bones
from .rbf import advect_query, build_rbf
from .surface import extract_surface

MODES = ("voxelize", "advect")
DEFAULT_RESOLUTION = 128

log = logging.getLogger(__name__)


def thread_cap() -> int:
    """Worker count from RIGMIXER_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("RIGMIXER_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


class CharacterFields:
    """Per-part SDFs of one character, each in its bone's local frame."""

    def __init__(self, character: Character, resolution: int = DEFAULT_RESOLUTION):
        self.character = character
        self.resolution = resolution
        self.assignment = segment_mesh(character)
        self._rest: dict[int, SdfGrid | None] = {}
        self._lock = threading.Lock()

    def _part(self, bone_id: int, vertices: np.ndarray | None = None) -> Mesh:
        return part_mesh(self.character, bone_id, self.assignment, vertices)

    def _grid(self, part: Mesh, frame: LocalFrame) -> SdfGrid | None:
        if not len(part.triangles):
            return None
        box = part_bounding_box(part.vertices, frame)
        if not np.any(box.half_extents > 0):
            return None
        return part_sdf(part, box, frame, self.resolution)

    def rest_grid(self, bone_id: int) -> SdfGrid | None:
        if bone_id not in self._rest:
            g = self._grid(self._part(bone_id), self.character.skeleton[bone_id].frame)
            with self._lock:
                self._rest.setdefault(bone_id, g)
        return self._rest[bone_id]

    def prebuild(self, bone_ids: Iterable[int], threads: int | None = None) -> None:
        todo = [b for b in bone_ids if b not in self._rest]
        n = thread_cap() if threads is None else threads
        if n <= 1 or len(todo) <= 1:
            for b in todo:
                self.rest_grid(b)
            return
        with ThreadPoolExecutor(max_workers=n) as pool:
            list(pool.map(self.rest_grid, todo))

    def rest_fields(self) -> Mapping[int, Field]:
        return _LazyFields(self.character.skeleton.ids, self.rest_grid)

    def posed_fields(self, transforms: Mapping[int, Affine], mode: str) -> tuple[Mapping[int, Field], Mesh]:
        """Fields for a posed character plus its skinned mesh."""
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        posed = apply_skinning(self.character, {}, transforms)
        rest_v = self.character.mesh.vertices
        skel = self.character.skeleton

        def build(bone_id: int) -> Field:
            part_ids = np.unique(self._part_vertex_ids(bone_id))
            frame = skel[bone_id].frame
            pframe = transforms[bone_id].frame(frame) if bone_id in transforms else frame
            if pframe is frame and np.array_equal(posed.vertices[part_ids], rest_v[part_ids]):
                return self.rest_grid(bone_id)
            if mode == "voxelize":
                return self._grid(self._part(bone_id, posed.vertices), pframe)
            rest = self.rest_grid(bone_id)
            if rest is None:
                return None
            posed_local = pframe.to_local(posed.vertices[part_ids])
            rest_local = frame.to_local(rest_v[part_ids])
            try:
                rbf = build_rbf(posed_local, rest_local)
            except SingularSystem as exc:
                # skinning folded the part onto itself; the pull-back is not a function
                log.warning("advection fit failed for bone %d (%s); re-voxelizing it", bone_id, exc)
                return self._grid(self._part(bone_id, posed.vertices), pframe)
            return lambda q: sample_sdf(rest, advect_query(q, rbf))

        return _LazyFields(skel.ids, build), posed

    def _part_vertex_ids(self, bone_id: int) -> np.ndarray:
        tris = self.character.mesh.triangles
        return tris[np.any(self.assignment[tris] == bone_id, axis=1)].ravel()


class _LazyFields(Mapping):
    def __init__(self, ids: Iterable[int], build: Callable[[int], Field]):
        self._ids = list(ids)
        self._idset = set(self._ids)
        self._build = build
        self._cache: dict[int, Field] = {}

    def __getitem__(self, key: int) -> Field:
        if key not in self._idset:
            raise KeyError(key)
        if key not in self._cache:
            self._cache[key] = self._build(key)
        return self._cache[key]

    def __iter__(self):
        return iter(self._ids)

    def __len__(self):
        return len(self._ids)

    def __contains__(self, key) -> bool:
        return key in self._idset


def _is_rest(transforms: Mapping[int, Affine]) -> bool:
    return all(a.is_identity for a in transforms.values())


class InterpolationScene:
    """The interpolated character for one unified skeleton."""

    def __init__(self, uni: UnifiedSkeleton, source: Character, target: Character,
                 resolution: int = DEFAULT_RESOLUTION,
                 source_fields: CharacterFields | None = None,
                 target_fields: CharacterFields | None = None):
        self.uni = uni
        self.source = source_fields or CharacterFields(source, resolution)
        self.target = target_fields or CharacterFields(target, resolution)

    def prebuild(self, threads: int | None = None) -> None:
        t = self.uni.t
        if t != 1.0:
            self.source.prebuild({k.source for k in self.uni if k.source is not None}, threads)
        if t != 0.0:
            self.target.prebuild({k.target for k in self.uni if k.target is not None}, threads)

    def frames(self, pose: Pose | None) -> dict[int, LocalFrame]:
        xf = unified_transforms(self.uni, pose or {})
        return {k.id: xf[k.id].frame(k.frame) for k in self.uni}

    def evaluator(self, pose: Pose | None = None, mode: str = "voxelize",
                  t: float | None = None) -> Callable[[np.ndarray], np.ndarray]:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        t = self.uni.t if t is None else float(t)
        pose = pose or {}
        src_pose, tgt_pose = transfer_pose(self.uni, pose)
        fields = []
        for chf, sp in ((self.source, src_pose), (self.target, tgt_pose)):
            xf = skeleton_transforms(chf.character, sp)
            fields.append(chf.rest_fields() if _is_rest(xf) else chf.posed_fields(xf, mode)[0])
        frames = self.frames(pose)
        bones = list(self.uni)
        return lambda pts: union_over_bones(pts, bones, fields[0], fields[1], t, frames)

    def region(self, pose: Pose | None = None) -> BoundingBox:
        """World box around every bone box, inflated by 10%."""
        frames = self.frames(pose)
        pts = []
        for k in self.uni:
            if k.box.is_degenerate:
                continue
            pts.append(frames[k.id].to_world(k.box.corners()))
        if not pts:
            raise EmptyPart("no unified bone has a part box")
        allp = np.concatenate(pts)
        box = BoundingBox.from_min_max(allp.min(axis=0), allp.max(axis=0))
        return BoundingBox(box.center, np.maximum(box.half_extents * 1.1, 0.1 * box.half_extents.max()))

    def extract(self, pose: Pose | None = None, mode: str = "voxelize",
                resolution: int = DEFAULT_RESOLUTION) -> Mesh:
        return extract_surface(self.evaluator(pose, mode), self.region(pose), resolution)


def query_deformed(p_world, uni: UnifiedSkeleton, characters: tuple[Character, Character],
                   pose: Pose | None, t: float, mode: str = "voxelize",
                   resolution: int = DEFAULT_RESOLUTION) -> np.ndarray | float:
    """Interpolated, posed SDF at world points.

    ``pose`` is a unified-skeleton pose; it is transferred to both characters.
    For repeated queries build an :class:`InterpolationScene` once instead.
    """
    scene = InterpolationScene(uni, characters[0], characters[1], resolution)
    pts = np.asarray(p_world, float)
    out = scene.evaluator(pose, mode, t)(pts.reshape(-1, 3))
    return float(out[0]) if pts.ndim == 1 else out
