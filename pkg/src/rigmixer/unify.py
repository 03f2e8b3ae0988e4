"""Unified skeleton at an interpolation step ``t``.

Each correspondence pair becomes one or more unified bones:

* one-to-one  -> a Constrained bone, every attribute interpolated;
* one-to-many -> Loose bones, one per bone of the chain, after splitting the
  single bone on the other side into proportional segments;
* one-to-void -> a Virtual bone that grows from (or shrinks to) a point
  obtained by mapping the existing bone into the other character's box.

Bone ids, kinds and parents depend only on the pairs, never on ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .correspondence import CorrespondencePair, PairKind
from .errors import BrokenParent, DegenerateBone, DegenerateBox, IncompletePairs
from .skeleton import Bone, BoundingBox, LocalFrame, Skeleton, compute_local_frame


class BoneKind(str, Enum):
    CONSTRAINED = "Constrained"
    LOOSE = "Loose"
    VIRTUAL = "Virtual"


@dataclass(frozen=True)
class UnifiedBone:
    id: int
    name: str
    kind: BoneKind
    source: int | None
    target: int | None
    t: float
    head: np.ndarray
    length: float
    frame: LocalFrame
    box: BoundingBox
    parent: int | None
    split_fraction_range: tuple[float, float] | None = None
    # Boxes used for bounding-box mapping, each in its own bone's local space.
    # For the split side of a Loose bone this is the sub-box, still expressed
    # in the coordinates of the unsplit bone.
    source_box: BoundingBox | None = None
    target_box: BoundingBox | None = None

    @property
    def tail(self) -> np.ndarray:
        return self.head + self.length * self.frame.y_axis


class UnifiedSkeleton:
    def __init__(self, bones: Sequence[UnifiedBone], pairs: Sequence[CorrespondencePair], t: float):
        self.bones = tuple(bones)
        self.pairs = tuple(pairs)
        self.t = float(t)
        self._by_id = {b.id: b for b in self.bones}
        roots = [b.id for b in self.bones if b.parent is None]
        if len(roots) != 1:
            raise BrokenParent(f"unified skeleton has {len(roots)} roots")
        self.root = roots[0]
        self._children: dict[int, list[int]] = {b.id: [] for b in self.bones}
        for b in self.bones:
            if b.parent is not None:
                self._children[b.parent].append(b.id)

    def __len__(self):
        return len(self.bones)

    def __iter__(self):
        return iter(self.bones)

    def __getitem__(self, bone_id: int) -> UnifiedBone:
        return self._by_id[bone_id]

    def children(self, bone_id: int) -> list[int]:
        return list(self._children[bone_id])

    def by_name(self, name: str) -> UnifiedBone:
        for b in self.bones:
            if b.name == name:
                return b
        raise KeyError(name)

    def topological(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            bid = stack.pop()
            out.append(bid)
            stack.extend(reversed(self._children[bid]))
        return out


def _lerp(a, b, t):
    # (1-t)a + tb is exact at both endpoints
    return (1.0 - t) * np.asarray(a, float) + t * np.asarray(b, float)


def lerp_box(a: BoundingBox, b: BoundingBox, t: float) -> BoundingBox:
    """Corner-wise interpolation; for axis-aligned boxes with corners paired by
    sign octant this is the interpolation of centers and half extents."""
    return BoundingBox(_lerp(a.center, b.center, t), _lerp(a.half_extents, b.half_extents, t))


def slerp_frame(a: LocalFrame, b: LocalFrame, t: float) -> LocalFrame:
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    qa = Rotation.from_matrix(a.rotation).as_quat()
    qb = Rotation.from_matrix(b.rotation).as_quat()
    dot = float(qa @ qb)
    if dot < 0.0:
        qb, dot = -qb, -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-9:
        q = _lerp(qa, qb, t)
    else:
        q = (np.sin((1.0 - t) * theta) * qa + np.sin(t * theta) * qb) / np.sin(theta)
    q /= np.linalg.norm(q)
    return LocalFrame(Rotation.from_quat(q).as_matrix(), _lerp(a.origin, b.origin, t))


class Segment(NamedTuple):
    head: np.ndarray
    length: float
    # sub-box in the local coordinates of the bone that was split
    box: BoundingBox
    offset: float
    fraction: tuple[float, float]


def split_bone(one_side: Bone, many_side: Sequence[Bone]) -> list[Segment]:
    """Cut ``one_side`` along its y-axis into pieces proportional to the chain."""
    lengths = np.array([b.length for b in many_side], float)
    cum = np.concatenate([[0.0], np.cumsum(lengths)]) / lengths.sum()
    cum[-1] = 1.0
    y = one_side.frame.y_axis
    box = one_side.part_box
    ylo, yhi = box.lo[1], box.hi[1]
    out = []
    for i in range(len(many_side)):
        f0, f1 = float(cum[i]), float(cum[i + 1])
        off0 = f0 * one_side.length
        off1 = one_side.length if i == len(many_side) - 1 else f1 * one_side.length
        b0 = ylo if i == 0 else ylo + f0 * (yhi - ylo)
        b1 = yhi if i == len(many_side) - 1 else ylo + f1 * (yhi - ylo)
        sub = BoundingBox(
            np.array([box.center[0], 0.5 * (b0 + b1), box.center[2]]),
            np.array([box.half_extents[0], 0.5 * (b1 - b0), box.half_extents[2]]),
        )
        out.append(Segment(one_side.head + off0 * y, off1 - off0, sub, off0, (f0, f1)))
    return out


def map_point_between_character_boxes(p, from_: tuple[BoundingBox, LocalFrame], to: tuple[BoundingBox, LocalFrame]) -> np.ndarray:
    fbox, fframe = from_
    tbox, tframe = to
    if np.any(fbox.half_extents <= 0):
        raise DegenerateBox("source character box has a zero extent")
    local = fframe.to_local(np.asarray(p, float))
    unit = (local - fbox.center) / fbox.half_extents
    return tframe.to_world(tbox.center + unit * tbox.half_extents)


def skeleton_box(skel: Skeleton) -> tuple[BoundingBox, LocalFrame]:
    """Root-centred box over joints and part boxes, for callers without meshes."""
    root = skel.root_bone()
    pts = []
    for b in skel:
        pts += [b.head, b.tail]
        if not b.part_box.is_degenerate:
            pts += list(b.frame.to_world(b.part_box.corners()))
    local = root.frame.to_local(np.array(pts))
    return BoundingBox(np.zeros(3), np.maximum(np.abs(local).max(axis=0), 1e-9)), root.frame


def _shift_box(box: BoundingBox, offset: float) -> BoundingBox:
    return BoundingBox(box.center - np.array([0.0, offset, 0.0]), box.half_extents)


def _frame_or(head, tail, fallback: LocalFrame) -> LocalFrame:
    try:
        return compute_local_frame(head, tail)
    except DegenerateBone:
        return LocalFrame(fallback.rotation, np.asarray(head, float))


def _name(src: Skeleton, tgt: Skeleton, s: int | None, d: int | None) -> str:
    return f"{'' if s is None else src[s].name}|{'' if d is None else tgt[d].name}"


def build_unified_skeleton(
    src: Skeleton,
    tgt: Skeleton,
    pairs: Sequence[CorrespondencePair],
    t: float,
    src_box: tuple[BoundingBox, LocalFrame] | None = None,
    tgt_box: tuple[BoundingBox, LocalFrame] | None = None,
) -> UnifiedSkeleton:
    """Assemble the unified skeleton at step ``t``.

    ``src_box``/``tgt_box`` are the character boxes used to place virtual
    bones; they default to boxes derived from the skeletons alone.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    cov_s = [b for p in pairs for b in p.source_bones]
    cov_t = [b for p in pairs for b in p.target_bones]
    if sorted(cov_s) != sorted(src.ids) or sorted(cov_t) != sorted(tgt.ids):
        raise IncompletePairs("pairs must cover every source and target bone exactly once")
    src_box = src_box or skeleton_box(src)
    tgt_box = tgt_box or skeleton_box(tgt)

    # (fields, parent query) per unified bone; parents resolved once all exist
    specs: list[dict] = []
    for pair in pairs:
        kind = pair.kind
        if kind is PairKind.ONE_TO_ONE:
            s, d = src[pair.source_bones[0]], tgt[pair.target_bones[0]]
            specs.append(dict(
                kind=BoneKind.CONSTRAINED, source=s.id, target=d.id,
                head=_lerp(s.head, d.head, t), length=float(_lerp(s.length, d.length, t)),
                frame=slerp_frame(s.frame, d.frame, t), box=lerp_box(s.part_box, d.part_box, t),
                source_box=s.part_box, target_box=d.part_box,
                query=("pair", s.parent, d.parent),
            ))
        elif kind is PairKind.ONE_TO_MANY_SOURCE:
            many = [src[b] for b in pair.source_bones]
            d = tgt[pair.target_bones[0]]
            group = []
            for i, (si, seg) in enumerate(zip(many, split_bone(d, many))):
                sub_local = _shift_box(seg.box, seg.offset)
                group.append(dict(
                    kind=BoneKind.LOOSE, source=si.id, target=d.id,
                    head=_lerp(si.head, seg.head, t), length=float(_lerp(si.length, seg.length, t)),
                    frame=slerp_frame(si.frame, LocalFrame(d.frame.rotation, seg.head), t),
                    box=lerp_box(si.part_box, sub_local, t), split=seg.fraction,
                    source_box=si.part_box, target_box=seg.box,
                    query=("pair", si.parent, d.parent) if i == 0 else ("prev",),
                ))
            specs.extend(group)
        elif kind is PairKind.ONE_TO_MANY_TARGET:
            s = src[pair.source_bones[0]]
            many = [tgt[b] for b in pair.target_bones]
            for i, (di, seg) in enumerate(zip(many, split_bone(s, many))):
                sub_local = _shift_box(seg.box, seg.offset)
                specs.append(dict(
                    kind=BoneKind.LOOSE, source=s.id, target=di.id,
                    head=_lerp(seg.head, di.head, t), length=float(_lerp(seg.length, di.length, t)),
                    frame=slerp_frame(LocalFrame(s.frame.rotation, seg.head), di.frame, t),
                    box=lerp_box(sub_local, di.part_box, t), split=seg.fraction,
                    source_box=seg.box, target_box=di.part_box,
                    query=("pair", s.parent, di.parent) if i == 0 else ("prev",),
                ))
        elif kind is PairKind.ONE_TO_VOID_SOURCE:
            s = src[pair.source_bones[0]]
            h2 = map_point_between_character_boxes(s.head, src_box, tgt_box)
            t2 = map_point_between_character_boxes(s.tail, src_box, tgt_box)
            far = _frame_or(h2, t2, s.frame)
            specs.append(dict(
                kind=BoneKind.VIRTUAL, source=s.id, target=None,
                head=_lerp(s.head, h2, t), length=float(_lerp(s.length, 0.0, t)),
                frame=slerp_frame(s.frame, far, t),
                box=lerp_box(s.part_box, BoundingBox.degenerate(), t),
                source_box=s.part_box, target_box=None,
                query=("source", s.parent),
            ))
        else:
            d = tgt[pair.target_bones[0]]
            h2 = map_point_between_character_boxes(d.head, tgt_box, src_box)
            t2 = map_point_between_character_boxes(d.tail, tgt_box, src_box)
            near = _frame_or(h2, t2, d.frame)
            specs.append(dict(
                kind=BoneKind.VIRTUAL, source=None, target=d.id,
                head=_lerp(h2, d.head, t), length=float(_lerp(0.0, d.length, t)),
                frame=slerp_frame(near, d.frame, t),
                box=lerp_box(BoundingBox.degenerate(), d.part_box, t),
                source_box=None, target_box=d.part_box,
                query=("target", d.parent),
            ))

    by_ref: dict[tuple[int | None, int | None], int] = {}
    by_src: dict[int, list[int]] = {}
    by_tgt: dict[int, list[int]] = {}
    for k, sp in enumerate(specs):
        by_ref.setdefault((sp["source"], sp["target"]), k)
        if sp["source"] is not None:
            by_src.setdefault(sp["source"], []).append(k)
        if sp["target"] is not None:
            by_tgt.setdefault(sp["target"], []).append(k)

    def resolve(k: int) -> int | None:
        q = specs[k]["query"]
        if q[0] == "prev":
            return k - 1
        if q[0] == "source":
            qs, qd = q[1], None
        elif q[0] == "target":
            qs, qd = None, q[1]
        else:
            qs, qd = q[1], q[2]
            if qs is None and qd is None:
                return None
            if (qs, qd) in by_ref:
                return by_ref[(qs, qd)]
        # the tail-most bone referencing the parent on either side
        if qs is not None and qs in by_src:
            return by_src[qs][-1]
        if qd is not None and qd in by_tgt:
            return by_tgt[qd][-1]
        if qs is None and qd is None:
            return None
        raise BrokenParent(f"cannot resolve parent of unified bone {_name(src, tgt, specs[k]['source'], specs[k]['target'])!r}")

    bones = []
    for k, sp in enumerate(specs):
        bones.append(UnifiedBone(
            id=k, name=_name(src, tgt, sp["source"], sp["target"]), kind=sp["kind"],
            source=sp["source"], target=sp["target"], t=float(t),
            head=sp["head"], length=sp["length"],
            frame=LocalFrame(sp["frame"].rotation, sp["head"]),
            box=sp["box"], parent=resolve(k), split_fraction_range=sp.get("split"),
            source_box=sp["source_box"], target_box=sp["target_box"],
        ))
    _check_acyclic(bones)
    return UnifiedSkeleton(bones, pairs, t)


def _check_acyclic(bones: Sequence[UnifiedBone]) -> None:
    parent = {b.id: b.parent for b in bones}
    for b in bones:
        seen = set()
        cur = b.id
        while cur is not None:
            if cur in seen:
                raise BrokenParent(f"parent cycle through unified bone {b.name!r}")
            seen.add(cur)
            cur = parent[cur]
