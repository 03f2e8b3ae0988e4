"""Command-line entry point: ``rigmixer <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .correspondence import AlphaParams
from .errors import PipelineError
from .pipeline import PipelineConfig, Session, run_pipeline, stage


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("source", type=Path)
    p.add_argument("target", type=Path)


def _alpha(p: argparse.ArgumentParser) -> None:
    d = AlphaParams()
    p.add_argument("--alpha-c1", type=float, default=d.c1)
    p.add_argument("--alpha-c2", type=float, default=d.c2)
    p.add_argument("--alpha-c3", type=float, default=d.c3)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rigmixer", description="Interpolate between two rigged characters.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correspond", help="compute bone correspondence")
    _common(p)
    _alpha(p)
    p.add_argument("--override", type=Path, help="pairs file whose entries take precedence")
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("unify", help="build the unified skeleton at one t")
    _common(p)
    p.add_argument("--pairs", type=Path, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("interpolate", help="extract the interpolated mesh at one t")
    _common(p)
    p.add_argument("--pairs", type=Path, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--pose", type=Path)
    p.add_argument("--mode", choices=["voxelize", "advect"], default="voxelize")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("animate", help="render every frame of an animation clip")
    _common(p)
    p.add_argument("--pairs", type=Path, required=True)
    p.add_argument("--clip", type=Path, required=True)
    p.add_argument("--mode", choices=["voxelize", "advect"], default="voxelize")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("segment", help="write the skinning-weight segmentation of one character")
    p.add_argument("character", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    return ap


def _config(stage_name: str, **kw) -> PipelineConfig:
    with stage(stage_name):
        return PipelineConfig(**kw)


def run(args) -> int:
    cmd = args.command
    if cmd == "segment":
        with stage("correspond"):
            io.save_segmentation(io.load_character(args.character), args.output)
        return 0
    if cmd == "correspond":
        cfg = _config("correspond", alpha=AlphaParams(args.alpha_c1, args.alpha_c2, args.alpha_c3),
                      override_path=args.override)
        s = Session(args.source, args.target, cfg)
        io.save_pairs(s.pairs, s.source, s.target, args.output)
        return 0
    if cmd == "unify":
        cfg = _config("unify", pairs_path=args.pairs)
        s = Session(args.source, args.target, cfg, first_stage="unify")
        with stage("unify"):
            uni = s.unified(args.t)
            io.save_unified(uni, args.output, s.norm)
        return 0
    if cmd == "interpolate":
        cfg = _config("interpolate", pairs_path=args.pairs, resolution=args.resolution, mode=args.mode,
                      t_schedule=(args.t,))
        s = Session(args.source, args.target, cfg, first_stage="interpolate")
        angles = None
        if args.pose is not None:
            with stage("pose"):
                angles = io.load_pose_angles(args.pose)
        mesh = s.mesh(args.t, angles)
        with stage("extract"):
            io.write_obj(mesh, args.output)
        return 0
    if cmd == "animate":
        cfg = _config("interpolate", pairs_path=args.pairs, clip_path=args.clip, resolution=args.resolution,
                      mode=args.mode, output_dir=args.output)
        res = run_pipeline(args.source, args.target, cfg)
        print(json.dumps({"frames": [str(p) for p in res.meshes]}))
        return 0
    raise AssertionError(cmd)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except PipelineError as exc:
        print(f"rigmixer: error {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
