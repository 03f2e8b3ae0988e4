"""End-to-end orchestration: load, correspond, unify, pose, interpolate, extract."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from . import io
from .correspondence import AlphaParams, CorrespondencePair, correspond, splice_override, validate_pairs
from .errors import PipelineError, RigMixerError
from .pose import JointAngles, Pose
from .sdf.deformed import MODES, CharacterFields, InterpolationScene, thread_cap
from .sdf.surface import extraction_grid, sample_volume, surface_from_volume
from .skeleton import Character, Mesh, character_box
from .unify import UnifiedSkeleton, build_unified_skeleton

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    resolution: int = 128
    alpha: AlphaParams = AlphaParams()
    t_schedule: tuple[float, ...] = (0.5,)
    mode: str = "voxelize"
    override_path: Path | None = None
    output_dir: Path = Path("rigmixer_out")
    # precomputed correspondence; when absent it is computed
    pairs_path: Path | None = None
    pose_path: Path | None = None
    # an animation clip supplies its own per-frame t and replaces t_schedule
    clip_path: Path | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError(f"resolution must be >= 8, got {self.resolution}")
        if not self.t_schedule:
            raise ValueError("empty t schedule")
        for t in self.t_schedule:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"t={t} outside [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@contextmanager
def stage(name: str) -> Iterator[None]:
    try:
        yield
    except PipelineError:
        raise
    except (RigMixerError, ValueError, KeyError, OSError) as exc:
        raise PipelineError(name, exc) from exc


class Session:
    """A normalized character pair and everything derived from it."""

    def __init__(self, src_path, tgt_path, config: PipelineConfig = PipelineConfig(), first_stage: str = "correspond"):
        self.config = config
        with stage(first_stage):
            raw_src = io.load_character(src_path)
            raw_tgt = io.load_character(tgt_path)
            self.source, self.target, self.norm = io.normalize_pair(raw_src, raw_tgt)
        self.raw_source, self.raw_target = raw_src, raw_tgt
        self._pairs: list[CorrespondencePair] | None = None
        self._fields = (CharacterFields(self.source, config.resolution),
                        CharacterFields(self.target, config.resolution))
        self._boxes = (character_box(self.source), character_box(self.target))

    @property
    def pairs(self) -> list[CorrespondencePair]:
        if self._pairs is None:
            with stage("correspond"):
                cfg = self.config
                if cfg.pairs_path is not None:
                    pairs = io.load_pairs(cfg.pairs_path, self.source, self.target)
                    validate_pairs(pairs, self.source.skeleton, self.target.skeleton)
                else:
                    pairs = correspond(self.source.skeleton, self.target.skeleton, cfg.alpha)
                if cfg.override_path is not None:
                    override = io.load_pairs(cfg.override_path, self.source, self.target)
                    pairs = splice_override(pairs, override, self.source.skeleton, self.target.skeleton)
            self._pairs = pairs
        return self._pairs

    def unified(self, t: float) -> UnifiedSkeleton:
        pairs = self.pairs
        with stage("unify"):
            return build_unified_skeleton(self.source.skeleton, self.target.skeleton, pairs, t, *self._boxes)

    def pose(self, uni: UnifiedSkeleton, angles: dict[str, Sequence[float]] | None) -> Pose:
        if not angles:
            return {}
        with stage("pose"):
            out: Pose = {}
            for name, e in angles.items():
                out[uni.by_name(name).id] = JointAngles(tuple(e))
            return out

    def mesh(self, t: float, angles: dict[str, Sequence[float]] | None = None) -> Mesh:
        """Interpolated surface at ``t`` in the input files' units."""
        uni = self.unified(t)
        pose = self.pose(uni, angles)
        cfg = self.config
        with stage("interpolate"):
            scene = InterpolationScene(uni, self.source, self.target, cfg.resolution, *self._fields)
            scene.prebuild(cfg.threads)
            with stage("pose"):
                sampler = scene.evaluator(pose, cfg.mode)
            region = scene.region(pose)
            dims, origin, h = extraction_grid(region, cfg.resolution)
            vol = sample_volume(sampler, dims, origin, h)
        with stage("extract"):
            mesh = surface_from_volume(vol, origin, h)
        return Mesh(self.norm.inverse(mesh.vertices), mesh.triangles)


@dataclass
class PipelineResult:
    correspondence: Path
    unified: list[Path] = field(default_factory=list)
    meshes: list[Path] = field(default_factory=list)


def _frames(config: PipelineConfig) -> list[tuple[float, dict | None]]:
    if config.clip_path is not None:
        with stage("pose"):
            return [(t, a) for t, a in io.load_clip_document(config.clip_path)]
    angles = None
    if config.pose_path is not None:
        with stage("pose"):
            angles = io.load_pose_angles(config.pose_path)
    return [(t, angles) for t in config.t_schedule]


def run_pipeline(src_path, tgt_path, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Run every stage and write correspondence, unified skeletons and one OBJ per frame."""
    session = Session(src_path, tgt_path, config)
    frames = _frames(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    corr = out / "correspondence.json"
    io.save_pairs(session.pairs, session.source, session.target, corr)
    result = PipelineResult(corr)
    for t in sorted({t for t, _ in frames}):
        uni = session.unified(t)
        path = out / f"unified_t{t:.4f}.json"
        io.save_unified(uni, path, session.norm)
        result.unified.append(path)

    def render(i: int) -> Path:
        t, angles = frames[i]
        mesh = session.mesh(t, angles)
        path = out / f"frame_{i:04d}.obj"
        io.write_obj(mesh, path)
        log.info("frame %d (t=%.3f): %d vertices", i, t, len(mesh.vertices))
        return path

    n = thread_cap() if config.threads is None else config.threads
    if n > 1 and len(frames) > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            result.meshes = list(pool.map(render, range(len(frames))))
    else:
        result.meshes = [render(i) for i in range(len(frames))]
    return result


def interpolate_character(source: Character, target: Character, t: float,
                          pairs: Sequence[CorrespondencePair] | None = None,
                          pose: Pose | None = None, mode: str = "voxelize",
                          resolution: int = 128) -> Mesh:
    """In-memory shortcut: no normalization, no files."""
    pairs = correspond(source.skeleton, target.skeleton) if pairs is None else list(pairs)
    uni = build_unified_skeleton(source.skeleton, target.skeleton, pairs, t,
                                 character_box(source), character_box(target))
    return InterpolationScene(uni, source, target, resolution).extract(pose, mode, resolution)
