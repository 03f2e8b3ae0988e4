"""Rig data model: bones, local frames, part boxes, segmentation and octants.

Points are plain ``(3,)`` float arrays. Bone-local coordinates have their
origin at the bone head and their y-axis running from head to tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateBone, EmptyPart, EmptyWeights, ValidationError

_EY = np.array([0.0, 1.0, 0.0])


def vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


@dataclass(frozen=True)
class LocalFrame:
    """Bone-local basis. Columns of ``rotation`` are the local x, y, z axes."""

    rotation: np.ndarray
    origin: np.ndarray

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.origin) @ self.rotation

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.origin

    @property
    def y_axis(self) -> np.ndarray:
        return self.rotation[:, 1]

    @classmethod
    def identity(cls, origin=(0.0, 0.0, 0.0)) -> "LocalFrame":
        return cls(np.eye(3), vec3(origin))


@dataclass(frozen=True)
class BoundingBox:
    center: np.ndarray
    half_extents: np.ndarray

    @classmethod
    def degenerate(cls, center=(0.0, 0.0, 0.0)) -> "BoundingBox":
        return cls(vec3(center), np.zeros(3))

    @classmethod
    def from_min_max(cls, lo, hi) -> "BoundingBox":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return cls(0.5 * (lo + hi), 0.5 * (hi - lo))

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_extents

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_extents

    def corners(self) -> np.ndarray:
        """The eight corners, ordered by sign octant bits (x, y, z)."""
        signs = np.array([[(i >> a) & 1 for a in range(3)] for i in range(8)], float) * 2 - 1
        return self.center + signs * self.half_extents

    @property
    def is_degenerate(self) -> bool:
        return bool(np.all(self.half_extents == 0))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        d = np.abs(np.asarray(points, float) - self.center)
        return np.all(d <= self.half_extents + tol, axis=-1)


@dataclass(frozen=True)
class Bone:
    id: int
    name: str
    parent: int | None
    head: np.ndarray
    length: float
    frame: LocalFrame
    part_box: BoundingBox
    hierarchy_level: int
    # tail as given in the source file; kept so that saving is lossless
    tail_input: np.ndarray | None = field(default=None, compare=False)

    @property
    def tail(self) -> np.ndarray:
        if self.tail_input is not None:
            return self.tail_input
        return self.head + self.length * self.frame.y_axis


class Skeleton:
    """Immutable bone tree. Bones keep their input order."""

    def __init__(self, bones: Sequence[Bone], root: int):
        self.bones: tuple[Bone, ...] = tuple(bones)
        self.root = root
        self._by_id = {b.id: b for b in self.bones}
        if len(self._by_id) != len(self.bones):
            raise ValidationError("duplicate bone ids")
        self._children: dict[int, list[int]] = {b.id: [] for b in self.bones}
        for b in self.bones:
            if b.parent is not None:
                if b.parent not in self._by_id:
                    raise ValidationError(f"bone {b.name!r} has unknown parent {b.parent}")
                self._children[b.parent].append(b.id)
        self._check_tree()

    def _check_tree(self) -> None:
        roots = [b.id for b in self.bones if b.parent is None]
        if len(roots) != 1:
            raise ValidationError("multiple roots" if roots else "no root")
        if roots[0] != self.root:
            raise ValidationError(f"declared root {self.root} is not the parentless bone")
        seen = set()
        stack = [self.root]
        while stack:
            bid = stack.pop()
            if bid in seen:
                raise ValidationError("cycle in bone hierarchy")
            seen.add(bid)
            stack.extend(self._children[bid])
        if len(seen) != len(self.bones):
            raise ValidationError("bone hierarchy is not connected (cycle or orphan)")
        for b in self.bones:
            want = 0 if b.parent is None else self._by_id[b.parent].hierarchy_level + 1
            if b.hierarchy_level != want:
                raise ValidationError(f"bone {b.name!r} has inconsistent hierarchy level")

    def __len__(self) -> int:
        return len(self.bones)

    def __iter__(self):
        return iter(self.bones)

    def __getitem__(self, bone_id: int) -> Bone:
        return self._by_id[bone_id]

    def __contains__(self, bone_id) -> bool:
        return bone_id in self._by_id

    @property
    def ids(self) -> list[int]:
        return [b.id for b in self.bones]

    def children(self, bone_id: int) -> list[int]:
        return list(self._children[bone_id])

    def is_leaf(self, bone_id: int) -> bool:
        return not self._children[bone_id]

    def by_name(self, name: str) -> Bone:
        for b in self.bones:
            if b.name == name:
                return b
        raise KeyError(name)

    def root_bone(self) -> Bone:
        return self._by_id[self.root]

    def depth_first(self) -> list[int]:
        """Bone ids in pre-order, children visited in input order."""
        out, stack = [], [self.root]
        while stack:
            bid = stack.pop()
            out.append(bid)
            stack.extend(reversed(self._children[bid]))
        return out

    def with_bones(self, bones: Iterable[Bone]) -> "Skeleton":
        return Skeleton(list(bones), self.root)


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValidationError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def triangle_areas(self) -> np.ndarray:
        if not len(self.triangles):
            return np.zeros(0)
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def without_degenerate(self, tol: float = 1e-12) -> "Mesh":
        keep = self.triangle_areas() > tol
        return Mesh(self.vertices, self.triangles[keep])


@dataclass(frozen=True)
class Character:
    mesh: Mesh
    skeleton: Skeleton
    # one sparse {bone id: weight} map per vertex
    weights: tuple[Mapping[int, float], ...]

    def weight_matrix(self) -> np.ndarray:
        """Dense (n_vertices, n_bones) weights, columns in skeleton order."""
        col = {bid: i for i, bid in enumerate(self.skeleton.ids)}
        w = np.zeros((len(self.weights), len(col)))
        for vi, wm in enumerate(self.weights):
            for bid, x in wm.items():
                w[vi, col[bid]] = x
        return w


def compute_local_frame(head, tail) -> LocalFrame:
    """Damped-track frame: shortest-arc rotation of world axes onto the bone."""
    head, tail = vec3(head), vec3(tail)
    d = tail - head
    n = np.linalg.norm(d)
    if n <= 1e-9:
        raise DegenerateBone(f"head and tail coincide at {head}")
    d = d / n
    c = float(_EY @ d)
    v = np.cross(_EY, d)
    s = float(np.linalg.norm(v))
    if s == 0.0:
        # parallel or antipodal; the latter is a half turn about +X
        rot = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        # axis-angle rather than 1/(1+c), which cancels near the antipode
        k = v / s
        kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        rot = np.eye(3) + s * kx + (1.0 - c) * kx @ kx
        # pin y to d exactly
        x = rot[:, 0] - (rot[:, 0] @ d) * d
        x /= np.linalg.norm(x)
        rot = np.column_stack([x, d, np.cross(x, d)])
    return LocalFrame(rot, head)


def segment_mesh(character: Character) -> np.ndarray:
    """Assign each vertex to its highest-weight bone (ties go to the lowest id)."""
    out = np.empty(len(character.weights), dtype=np.int64)
    for vi, wm in enumerate(character.weights):
        if not wm:
            raise EmptyWeights(f"vertex {vi} has no skinning weights")
        out[vi] = min(wm.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    return out


def part_bounding_box(part_vertices, frame: LocalFrame) -> BoundingBox:
    pts = np.asarray(part_vertices, dtype=float).reshape(-1, 3)
    if not len(pts):
        raise EmptyPart("part has no vertices")
    local = frame.to_local(pts)
    return BoundingBox.from_min_max(local.min(axis=0), local.max(axis=0))


def octant(point, root_frame: LocalFrame) -> int:
    q = root_frame.to_local(vec3(point))
    return int(q[0] >= 0) | int(q[1] >= 0) << 1 | int(q[2] >= 0) << 2


def build_skeleton(
    names: Sequence[str],
    parents: Sequence[str | None],
    heads: Sequence,
    tails: Sequence,
    ids: Sequence[int] | None = None,
) -> Skeleton:
    """Build a skeleton from joint data; part boxes start out degenerate."""
    ids = list(range(len(names))) if ids is None else list(ids)
    name_to_id = {}
    for n, i in zip(names, ids):
        if n in name_to_id:
            raise ValidationError(f"duplicate bone name {n!r}")
        name_to_id[n] = i
    parent_ids = []
    for n, p in zip(names, parents):
        if p is None:
            parent_ids.append(None)
        elif p not in name_to_id:
            raise ValidationError(f"bone {n!r} has unknown parent {p!r}")
        else:
            parent_ids.append(name_to_id[p])
    roots = [n for n, p in zip(names, parent_ids) if p is None]
    if len(roots) != 1:
        raise ValidationError("multiple roots" if roots else "no root")

    levels: dict[int, int] = {}
    pid = dict(zip(ids, parent_ids))

    def level(i, guard=0):
        if i in levels:
            return levels[i]
        if guard > len(ids):
            raise ValidationError("cycle in bone hierarchy")
        levels[i] = 0 if pid[i] is None else level(pid[i], guard + 1) + 1
        return levels[i]

    bones = []
    for n, i, p, h, t in zip(names, ids, parent_ids, heads, tails):
        h, t = vec3(h), vec3(t)
        try:
            frame = compute_local_frame(h, t)
        except DegenerateBone as exc:
            raise ValidationError(f"bone {n!r} has zero length") from exc
        bones.append(Bone(
            id=i, name=n, parent=p, head=h, length=float(np.linalg.norm(t - h)),
            frame=frame, part_box=BoundingBox.degenerate(), hierarchy_level=level(i),
            tail_input=t,
        ))
    return Skeleton(bones, name_to_id[roots[0]])


def with_part_boxes(character: Character) -> Character:
    """Recompute every bone's part box from the skinning segmentation.

    Bones that own no vertices keep a degenerate box at their head.
    """
    assign = segment_mesh(character)
    verts = character.mesh.vertices
    bones = []
    for b in character.skeleton:
        pts = verts[assign == b.id]
        box = part_bounding_box(pts, b.frame) if len(pts) else BoundingBox.degenerate()
        bones.append(replace(b, part_box=box))
    return replace(character, skeleton=character.skeleton.with_bones(bones))


def part_vertex_ids(character: Character, assignment: np.ndarray | None = None) -> dict[int, np.ndarray]:
    assign = segment_mesh(character) if assignment is None else assignment
    return {b.id: np.flatnonzero(assign == b.id) for b in character.skeleton}


def part_mesh(character: Character, bone_id: int, assignment: np.ndarray | None = None,
              vertices: np.ndarray | None = None) -> Mesh:
    """Sub-mesh of every triangle touching a vertex assigned to ``bone_id``.

    Neighbouring parts therefore share one ring of triangles, which keeps the
    min-union free of cracks along the cut. ``vertices`` substitutes posed
    positions for the rest positions.
    """
    assign = segment_mesh(character) if assignment is None else assignment
    verts = character.mesh.vertices if vertices is None else np.asarray(vertices, float)
    tris = character.mesh.triangles
    if not len(tris):
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    mask = np.any(assign[tris] == bone_id, axis=1)
    sub = tris[mask]
    used, inverse = np.unique(sub, return_inverse=True)
    return Mesh(verts[used], inverse.reshape(-1, 3))


def character_box(character: Character) -> tuple[BoundingBox, LocalFrame]:
    """Character box aligned with the root frame and centred on the root head."""
    root = character.skeleton.root_bone()
    pts = [character.mesh.vertices] + [np.stack([b.head, b.tail]) for b in character.skeleton]
    local = root.frame.to_local(np.concatenate(pts))
    half = np.maximum(np.abs(local).max(axis=0), 1e-9)
    return BoundingBox(np.zeros(3), half), root.frame
