"""JSON file formats, OBJ output and joint normalization of character pairs.

Every document carries ``"format_version": 1``. Bones are referred to by
name in files and by integer id in memory; ids follow file order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from .correspondence import CorrespondencePair, PairKind
from .errors import InvalidPairs, ParseError, ValidationError
from .pose import AnimationClip, JointAngles, Pose
from .skeleton import BoundingBox, Character, Mesh, build_skeleton, segment_mesh, with_part_boxes
from .unify import UnifiedSkeleton

FORMAT_VERSION = 1
WEIGHT_SUM_TOL = 1e-4

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_VERSION = {"const": FORMAT_VERSION}

CHARACTER_SCHEMA = {
    "type": "object",
    "required": ["mesh", "skeleton", "weights"],
    "properties": {
        "format_version": _VERSION,
        "mesh": {
            "type": "object",
            "required": ["vertices", "triangles"],
            "properties": {
                "vertices": {"type": "array", "items": _VEC3},
                "triangles": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
                },
            },
        },
        "skeleton": {
            "type": "object",
            "required": ["bones"],
            "properties": {
                "bones": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["name", "parent", "head", "tail"],
                        "properties": {
                            "name": {"type": "string", "minLength": 1},
                            "parent": {"type": ["string", "null"]},
                            "head": _VEC3,
                            "tail": _VEC3,
                        },
                    },
                }
            },
        },
        "weights": {
            "type": "array",
            "items": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        },
    },
}

PAIRS_SCHEMA = {
    "type": "object",
    "required": ["pairs"],
    "properties": {
        "format_version": _VERSION,
        "pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind", "source", "target"],
                "properties": {
                    "kind": {"enum": [k.value for k in PairKind]},
                    "source": {"type": "array", "items": {"type": "string"}},
                    "target": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}

_ANGLES = {"type": "object", "additionalProperties": _VEC3}

POSE_SCHEMA = {
    "type": "object",
    "required": ["angles"],
    "properties": {"format_version": _VERSION, "angles": _ANGLES},
}

CLIP_SCHEMA = {
    "type": "object",
    "required": ["frames"],
    "properties": {
        "format_version": _VERSION,
        "frames": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["t", "angles"],
                "properties": {"t": {"type": "number", "minimum": 0, "maximum": 1}, "angles": _ANGLES},
            },
        },
    },
}


# ---------------------------------------------------------------------------
# generic helpers
# ---------------------------------------------------------------------------

def _read_json(path: str | Path, schema: dict) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(doc))
    if err is not None:
        raise ParseError(f"{path}: at {_json_path(err.absolute_path)}: {err.message}")
    return doc


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _write_json(path: str | Path, doc: dict) -> None:
    body = {"format_version": FORMAT_VERSION, **doc}
    Path(path).write_text(json.dumps(body, indent=1) + "\n")


def _floats(a) -> list:
    return np.asarray(a, float).tolist()


# ---------------------------------------------------------------------------
# characters
# ---------------------------------------------------------------------------

def character_from_document(doc: dict, where: str = "<document>") -> Character:
    bones = doc["skeleton"]["bones"]
    names = [b["name"] for b in bones]
    skel = build_skeleton(names, [b["parent"] for b in bones], [b["head"] for b in bones], [b["tail"] for b in bones])
    verts = np.asarray(doc["mesh"]["vertices"], float).reshape(-1, 3)
    if not np.all(np.isfinite(verts)):
        raise ValidationError(f"{where}: non-finite vertex coordinates")
    tris = np.asarray(doc["mesh"]["triangles"], np.int64).reshape(-1, 3)
    if tris.size and tris.max() >= len(verts):
        bad = int(np.argmax(tris.max(axis=1) >= len(verts)))
        raise ValidationError(f"{where}: triangle {bad} references a missing vertex")
    raw = doc["weights"]
    if len(raw) != len(verts):
        raise ValidationError(f"{where}: {len(raw)} weight entries for {len(verts)} vertices")
    ids = {n: i for i, n in enumerate(names)}
    weights = []
    for vi, wm in enumerate(raw):
        unknown = sorted(set(wm) - set(ids))
        if unknown:
            raise ValidationError(f"{where}: vertex {vi} weights unknown bones {unknown}")
        total = sum(wm.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"{where}: vertex {vi} weights sum to {total:g}, expected 1")
        weights.append({ids[n]: float(w) for n, w in wm.items()})
    mesh = _drop_degenerate(Mesh(verts, tris))
    return with_part_boxes(Character(mesh, skel, tuple(weights)))


def _drop_degenerate(mesh: Mesh) -> Mesh:
    t = mesh.triangles
    if not len(t):
        return mesh
    distinct = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    return Mesh(mesh.vertices, t[distinct & (mesh.triangle_areas() > 0.0)])


def load_character(path: str | Path) -> Character:
    """Read and validate a character file; part boxes come from its weights."""
    return character_from_document(_read_json(path, CHARACTER_SCHEMA), str(path))


def character_document(character: Character) -> dict:
    skel = character.skeleton
    name = {b.id: b.name for b in skel}
    return {
        "mesh": {
            "vertices": _floats(character.mesh.vertices),
            "triangles": character.mesh.triangles.tolist(),
        },
        "skeleton": {
            "bones": [
                {"name": b.name, "parent": None if b.parent is None else name[b.parent],
                 "head": _floats(b.head), "tail": _floats(b.tail)}
                for b in skel
            ]
        },
        "weights": [{name[bid]: float(w) for bid, w in wm.items()} for wm in character.weights],
    }


def save_character(character: Character, path: str | Path) -> None:
    _write_json(path, character_document(character))


# ---------------------------------------------------------------------------
# joint normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normalization:
    """x_normalized = (x - center) / scale"""

    center: np.ndarray
    scale: float

    def forward(self, pts) -> np.ndarray:
        return (np.asarray(pts, float) - self.center) / self.scale

    def inverse(self, pts) -> np.ndarray:
        return np.asarray(pts, float) * self.scale + self.center


def joint_normalization(*characters: Character) -> Normalization:
    """Center the union box of all characters at the origin with max extent 1."""
    pts = []
    for c in characters:
        pts.append(c.mesh.vertices)
        pts += [np.stack([b.head, b.tail]) for b in c.skeleton]
    allp = np.concatenate(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    extent = float((hi - lo).max())
    return Normalization(0.5 * (lo + hi), extent if extent > 0 else 1.0)


def transform_character(character: Character, fn) -> Character:
    skel = character.skeleton
    name = {b.id: b.name for b in skel}
    new_skel = build_skeleton(
        [b.name for b in skel], [None if b.parent is None else name[b.parent] for b in skel],
        [fn(b.head) for b in skel], [fn(b.tail) for b in skel], skel.ids,
    )
    mesh = Mesh(fn(character.mesh.vertices), character.mesh.triangles.copy())
    return with_part_boxes(Character(mesh, new_skel, character.weights))


def normalize_pair(src: Character, tgt: Character) -> tuple[Character, Character, Normalization]:
    norm = joint_normalization(src, tgt)
    return transform_character(src, norm.forward), transform_character(tgt, norm.forward), norm


# ---------------------------------------------------------------------------
# correspondence pairs
# ---------------------------------------------------------------------------

def pairs_document(pairs: Sequence[CorrespondencePair], src: Character, tgt: Character) -> dict:
    ss, ts = src.skeleton, tgt.skeleton
    return {"pairs": [
        {"kind": p.kind.value, "source": [ss[b].name for b in p.source_bones],
         "target": [ts[b].name for b in p.target_bones]}
        for p in pairs
    ]}


def save_pairs(pairs: Sequence[CorrespondencePair], src: Character, tgt: Character, path: str | Path) -> None:
    _write_json(path, pairs_document(pairs, src, tgt))


def load_pairs(path: str | Path, src: Character, tgt: Character) -> list[CorrespondencePair]:
    doc = _read_json(path, PAIRS_SCHEMA)
    out = []
    for k, entry in enumerate(doc["pairs"]):
        try:
            s = [src.skeleton.by_name(n).id for n in entry["source"]]
            d = [tgt.skeleton.by_name(n).id for n in entry["target"]]
            out.append(CorrespondencePair(PairKind(entry["kind"]), tuple(s), tuple(d)))
        except KeyError as exc:
            raise ValidationError(f"{path}: pair {k} names unknown bone {exc.args[0]!r}") from exc
        except InvalidPairs as exc:
            raise ValidationError(f"{path}: pair {k}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# unified skeleton, poses, clips
# ---------------------------------------------------------------------------

def _box_doc(box: BoundingBox, scale: float = 1.0) -> dict:
    return {"center": _floats(box.center * scale), "half_extents": _floats(box.half_extents * scale)}


def unified_document(uni: UnifiedSkeleton, norm: Normalization | None = None) -> dict:
    """Unified skeleton in the characters' original units when ``norm`` is given."""
    fwd = (lambda p: np.asarray(p, float)) if norm is None else norm.inverse
    s = 1.0 if norm is None else norm.scale
    return {
        "t": uni.t,
        "bones": [
            {
                "id": k.id, "name": k.name, "kind": k.kind.value,
                "source": k.source, "target": k.target, "parent": k.parent,
                "head": _floats(fwd(k.head)), "tail": _floats(fwd(k.tail)),
                "length": float(k.length * s),
                "frame": _floats(k.frame.rotation),
                "box": _box_doc(k.box, s),
            }
            for k in uni
        ],
    }


def save_unified(uni: UnifiedSkeleton, path: str | Path, norm: Normalization | None = None) -> None:
    _write_json(path, unified_document(uni, norm))


def _angles_to_pose(angles: dict, uni: UnifiedSkeleton, where: str) -> Pose:
    pose: Pose = {}
    for name, e in angles.items():
        try:
            k = uni.by_name(name)
        except KeyError as exc:
            raise ValidationError(f"{where}: no unified bone named {name!r}") from exc
        pose[k.id] = JointAngles(tuple(e))
    return pose


def load_pose_angles(path: str | Path) -> dict[str, list[float]]:
    """Pose file contents keyed by unified bone name, before resolving names."""
    return _read_json(path, POSE_SCHEMA)["angles"]


def load_pose(path: str | Path, uni: UnifiedSkeleton) -> Pose:
    return _angles_to_pose(load_pose_angles(path), uni, str(path))


def save_pose(pose: Pose, uni: UnifiedSkeleton, path: str | Path) -> None:
    _write_json(path, {"angles": {uni[k].name: list(ja.euler) for k, ja in pose.items()}})


def load_clip_document(path: str | Path) -> list[tuple[float, dict]]:
    """Raw frames as (t, {unified bone name: angles}); names resolve per frame."""
    doc = _read_json(path, CLIP_SCHEMA)
    return [(float(f["t"]), f["angles"]) for f in doc["frames"]]


def load_clip(path: str | Path, uni: UnifiedSkeleton) -> AnimationClip:
    frames = tuple((_angles_to_pose(a, uni, str(path)), t) for t, a in load_clip_document(path))
    return AnimationClip(frames)


# ---------------------------------------------------------------------------
# meshes and segmentation
# ---------------------------------------------------------------------------

def write_obj(mesh: Mesh, path: str | Path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path: str | Path) -> Mesh:
    verts, tris = [], []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                tris.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
        except ValueError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from exc
    return Mesh(np.array(verts, float).reshape(-1, 3), np.array(tris, np.int64).reshape(-1, 3))


def segmentation_document(character: Character) -> dict:
    assign = segment_mesh(character)
    parts = {}
    for b in character.skeleton:
        parts[b.name] = {"vertices": np.flatnonzero(assign == b.id).tolist(), "box": _box_doc(b.part_box)}
    return {"parts": parts}


def save_segmentation(character: Character, path: str | Path) -> None:
    _write_json(path, segmentation_document(character))
