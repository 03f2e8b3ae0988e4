"""Pose transfer from the unified skeleton to both input rigs, and skinning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy.spatial.transform import Rotation

from .correspondence import PairKind
from .errors import ValidationError
from .skeleton import Character, LocalFrame, Mesh
from .unify import UnifiedSkeleton

EULER_ORDER = "XYZ"  # intrinsic, degrees


@dataclass(frozen=True)
class JointAngles:
    euler: tuple[float, float, float]

    def __post_init__(self):
        e = tuple(float(x) for x in self.euler)
        if len(e) != 3 or not all(np.isfinite(e)) or any(abs(x) >= 360.0 for x in e):
            raise ValidationError(f"joint angles must be 3 finite values in (-360, 360), got {self.euler}")
        object.__setattr__(self, "euler", e)

    def matrix(self) -> np.ndarray:
        return euler_matrix(self.euler)


def euler_matrix(euler) -> np.ndarray:
    return Rotation.from_euler(EULER_ORDER, np.asarray(euler, float), degrees=True).as_matrix()


# unified bone id -> angles; absent bones stay at rest
Pose = dict[int, JointAngles]
# rig bone id -> local 3x3 rotation
SkeletonPose = dict[int, np.ndarray]


@dataclass(frozen=True)
class AnimationClip:
    frames: tuple[tuple[Pose, float], ...]

    def __post_init__(self):
        if not self.frames:
            raise ValidationError("animation clip has no frames")
        for _, t in self.frames:
            if not np.isfinite(t) or not 0.0 <= t <= 1.0:
                raise ValidationError(f"frame t={t} outside [0, 1]")


def validate_pose(uni: UnifiedSkeleton, pose: Pose) -> None:
    ids = {b.id for b in uni}
    bad = sorted(set(pose) - ids)
    if bad:
        raise ValidationError(f"pose references unknown unified bones {bad}")


def transfer_pose(uni: UnifiedSkeleton, pose: Pose) -> tuple[SkeletonPose, SkeletonPose]:
    """Local rotations for the source and target rigs.

    Constrained bones copy their rotation to both sides. In a Loose group the
    chain side copies per bone while the single bone on the other side takes
    the component-wise mean of the group's Euler angles. Virtual bones drive
    only the side they reference.
    """
    validate_pose(uni, pose)
    src: SkeletonPose = {}
    tgt: SkeletonPose = {}
    for p in uni.pairs:
        for b in p.source_bones:
            src[b] = np.eye(3)
        for b in p.target_bones:
            tgt[b] = np.eye(3)

    def angles(k: int) -> np.ndarray:
        ja = pose.get(k)
        return np.zeros(3) if ja is None else np.asarray(ja.euler)

    groups: dict[tuple[str, int], list[int]] = {}
    for k in uni:
        posed = k.id in pose
        if k.kind.value == "Constrained":
            if posed:
                r = pose[k.id].matrix()
                src[k.source] = r
                tgt[k.target] = r.copy()
        elif k.kind.value == "Virtual":
            if posed:
                side = src if k.source is not None else tgt
                side[k.source if k.source is not None else k.target] = pose[k.id].matrix()
        else:
            # which side holds the single bone is fixed by the pair kind
            groups.setdefault(_loose_key(uni, k), []).append(k.id)

    for (side, one), members in groups.items():
        per_bone, single = (src, tgt) if side == "target" else (tgt, src)
        for kid in members:
            if kid in pose:
                k = uni[kid]
                per_bone[k.source if side == "target" else k.target] = pose[kid].matrix()
        if any(kid in pose for kid in members):
            single[one] = euler_matrix(np.mean([angles(kid) for kid in members], axis=0))
    return src, tgt


def _loose_key(uni: UnifiedSkeleton, k) -> tuple[str, int]:
    for p in uni.pairs:
        if p.kind is PairKind.ONE_TO_MANY_SOURCE and k.source in p.source_bones and k.target == p.target_bones[0]:
            return ("target", k.target)
        if p.kind is PairKind.ONE_TO_MANY_TARGET and k.target in p.target_bones and k.source == p.source_bones[0]:
            return ("source", k.source)
    raise ValidationError(f"loose bone {k.name!r} has no one-to-many pair")


# ---------------------------------------------------------------------------
# forward kinematics and skinning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Affine:
    """x -> A @ x + b in world space."""

    A: np.ndarray
    b: np.ndarray

    @property
    def is_identity(self) -> bool:
        return np.array_equal(self.A, np.eye(3)) and not np.any(self.b)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, float) @ self.A.T + self.b

    def inverse_apply(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, float) - self.b) @ self.A

    def frame(self, rest: LocalFrame) -> LocalFrame:
        """The posed version of a rest frame."""
        if self.is_identity:
            return rest
        return LocalFrame(self.A @ rest.rotation, self.apply(rest.origin))


def forward_kinematics(
    bones: Iterable[tuple[int, int | None, np.ndarray, np.ndarray]],
    local_rotations: Mapping[int, np.ndarray],
) -> dict[int, Affine]:
    """World transforms from (id, parent, head, frame rotation) in parent-first order.

    Each local rotation acts about the bone head, expressed in the bone frame.
    """
    out: dict[int, Affine] = {}
    eye = np.eye(3)
    for bid, parent, head, rot in bones:
        r = local_rotations.get(bid)
        if r is None or np.array_equal(r, eye):
            local = None
        else:
            a = rot @ r @ rot.T
            local = Affine(a, head - a @ head)
        par = out.get(parent) if parent is not None else None
        if local is None:
            out[bid] = par if par is not None else Affine(eye, np.zeros(3))
        elif par is None or par.is_identity:
            out[bid] = local
        else:
            out[bid] = Affine(par.A @ local.A, par.A @ local.b + par.b)
    return out


def skeleton_transforms(character: Character, skel_pose: SkeletonPose) -> dict[int, Affine]:
    sk = character.skeleton
    order = sk.depth_first()
    return forward_kinematics(((i, sk[i].parent, sk[i].head, sk[i].frame.rotation) for i in order), skel_pose)


def unified_transforms(uni: UnifiedSkeleton, pose: Pose) -> dict[int, Affine]:
    rots = {k: ja.matrix() for k, ja in pose.items()}
    return forward_kinematics(
        ((i, uni[i].parent, uni[i].head, uni[i].frame.rotation) for i in uni.topological()), rots
    )


def apply_skinning(character: Character, skel_pose: SkeletonPose,
                   transforms: Mapping[int, Affine] | None = None) -> Mesh:
    """Linear blend skinning, written as rest position plus weighted displacements
    so that bones at rest contribute exactly nothing."""
    xf = skeleton_transforms(character, skel_pose) if transforms is None else transforms
    verts = character.mesh.vertices
    moving = {bid: a for bid, a in xf.items() if not a.is_identity}
    if not moving:
        return Mesh(verts.copy(), character.mesh.triangles.copy())
    w = character.weight_matrix()
    col = {bid: i for i, bid in enumerate(character.skeleton.ids)}
    disp = np.zeros_like(verts)
    for bid, a in moving.items():
        wb = w[:, col[bid]]
        nz = wb != 0.0
        if nz.any():
            disp[nz] += wb[nz, None] * (a.apply(verts[nz]) - verts[nz])
    return Mesh(verts + disp, character.mesh.triangles.copy())
