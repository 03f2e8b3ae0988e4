"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; conftest prints them after the run.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from oracles import brute_force_assignment, brute_force_sdt, mean_symmetric_distance
from rigmixer import io, synthetic
from rigmixer.correspondence import (
    CorrespondencePair,
    CostMatrix,
    PairKind,
    alpha,
    correspond,
    hierarchical_match_with_cost,
    hungarian,
    post_process,
    hierarchical_match,
)
from rigmixer.pose import JointAngles, apply_skinning, transfer_pose
from rigmixer.sdf.deformed import CharacterFields, InterpolationScene
from rigmixer.sdf.grid import VoxelGrid, signed_distance_transform
from rigmixer.sdf.interp import bbox_map
from rigmixer.sdf.surface import extraction_grid
from rigmixer.skeleton import BoundingBox, build_skeleton, character_box
from rigmixer.unify import build_unified_skeleton, lerp_box

RESULTS: list[str] = []
FIXTURES = ["biped-tailed", "quadruped-biped", "tailed-quadruped"]


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _unified(a, b, t, pairs=None):
    pairs = correspond(a.skeleton, b.skeleton) if pairs is None else pairs
    return build_unified_skeleton(a.skeleton, b.skeleton, pairs, t, character_box(a), character_box(b))


def test_01_self_correspondence():
    rng = np.random.default_rng(2024)
    sizes = [2, 3, 5, 7, 9, 11, 13, 16, 18, 20]
    branching = np.linspace(0.0, 1.0, len(sizes))
    skels = []
    for n, br in zip(sizes, branching):
        spec = synthetic.random_spec(n, rng, float(br))
        skels.append(build_skeleton(spec.names, spec.parents, spec.heads, spec.tails))
    start = time.perf_counter()
    ok = True
    for sk in skels:
        pairs, total = hierarchical_match_with_cost(sk, sk)
        ok &= total == 0.0 and len(pairs) == len(sk)
        ok &= all(p.kind is PairKind.ONE_TO_ONE and p.source_bones == p.target_bones for p in pairs)
    elapsed = time.perf_counter() - start
    record(1, ok and elapsed < 1.0, f"10 skeletons of 2-20 bones matched to themselves, all identity, cost 0, {elapsed:.3f}s")


def test_02_grouping_fixture():
    src, tgt = synthetic.head_chain_pair()
    raw = hierarchical_match(src.skeleton, tgt.skeleton)
    out = post_process(raw, src.skeleton, tgt.skeleton)
    many = [p for p in out if p.kind in (PairKind.ONE_TO_MANY_SOURCE, PairKind.ONE_TO_MANY_TARGET)]
    expected = CorrespondencePair(PairKind.ONE_TO_MANY_TARGET, (5,), (1, 6, 11, 16))
    ok = many == [expected] and out == [CorrespondencePair(PairKind.ONE_TO_ONE, (0,), (0,)), expected]
    record(2, ok, f"head bone 5 grouped with chain {many[0].target_bones if many else None}")


def test_03_hungarian_oracle():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    bad = 0
    for _ in range(200):
        n, m = rng.integers(1, 7, size=2)
        e = rng.random((n, m)) * rng.uniform(0.5, 5)
        r, c = rng.random(n) * 3, rng.random(m) * 3
        if hungarian(CostMatrix(e, r, c)).total != brute_force_assignment(e, r, c):
            bad += 1
    elapsed = time.perf_counter() - start
    record(3, bad == 0 and elapsed < 5.0, f"200 matrices up to 6x6, {bad} mismatches, {elapsed:.2f}s")


def test_04_distance_transform_oracle():
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    bad = 0
    for i in range(50):
        dims = tuple(int(x) for x in rng.integers(2, 17, size=3))
        if i == 0:
            dims = (16, 16, 16)
        occ = rng.random(dims) < rng.uniform(0.05, 0.95)
        if occ.all() or not occ.any():
            occ.flat[0] = not occ.flat[0]
        spacing = float(rng.uniform(0.01, 1.0))
        got = signed_distance_transform(VoxelGrid(dims, np.zeros(3), spacing, occ)).values
        bad += not np.array_equal(got, brute_force_sdt(occ, spacing))
    elapsed = time.perf_counter() - start
    record(4, bad == 0 and elapsed < 10.0, f"50 grids up to 16^3, {bad} mismatches, {elapsed:.2f}s")


@pytest.mark.parametrize("pair", FIXTURES)
def test_05_endpoint_fidelity(pair):
    start = time.perf_counter()
    a0, b0 = synthetic.fixture_pairs()[pair]
    a, b, _ = io.normalize_pair(a0, b0)
    pairs = correspond(a.skeleton, b.skeleton)
    fields = (CharacterFields(a, 128), CharacterFields(b, 128))
    details, ok = [], True
    for t, ref in ((0.0, a), (1.0, b)):
        scene = InterpolationScene(_unified(a, b, t, pairs), a, b, 128, *fields)
        h = extraction_grid(scene.region(), 128)[2]
        mesh = scene.extract({}, "voxelize", 128)
        d = mean_symmetric_distance(mesh.vertices, mesh.triangles, ref.mesh.vertices, ref.mesh.triangles)
        ok &= d < 2 * h
        details.append(f"t={t:g}: {d / h:.3f} spacings")
    elapsed = time.perf_counter() - start
    record(5, ok and elapsed < 180, f"{pair} at 128: {', '.join(details)}, {elapsed:.1f}s")


def test_06_topology_invariance():
    ok = True
    for pair in FIXTURES:
        a, b = synthetic.fixture_pairs()[pair]
        pairs = correspond(a.skeleton, b.skeleton)
        shapes = {tuple((k.id, k.kind, k.parent, k.source, k.target) for k in _unified(a, b, t, pairs))
                  for t in (0.0, 0.25, 0.5, 0.75, 1.0)}
        ok &= len(shapes) == 1
    record(6, ok, "3 fixture pairs, identical ids, kinds and parents at t in {0, .25, .5, .75, 1}")


def test_07_pose_transfer_contract():
    ch = synthetic.biped()
    sk = ch.skeleton
    pairs = [CorrespondencePair(PairKind.ONE_TO_ONE, (i,), (i,)) for i in sk.ids]
    uni = build_unified_skeleton(sk, sk, pairs, 0.5)
    src, tgt = transfer_pose(uni, {})
    rest_ok = all(np.array_equal(apply_skinning(ch, p).vertices, ch.mesh.vertices) for p in (src, tgt))

    elbow = uni.by_name("l_forearm|l_forearm")
    src, tgt = transfer_pose(uni, {elbow.id: JointAngles((0.0, 0.0, 45.0))})
    subtree, stack = set(), [elbow.source]
    while stack:
        b = stack.pop()
        subtree.add(b)
        stack += sk.children(b)
    w = ch.weight_matrix()
    cols = [sk.ids.index(b) for b in subtree]
    unweighted = w[:, cols].sum(axis=1) == 0
    moved = np.linalg.norm(apply_skinning(ch, src).vertices - ch.mesh.vertices, axis=1)
    still = float(moved[unweighted].max())
    record(7, rest_ok and still < 1e-9 and moved[~unweighted].max() > 0,
           f"rest pose bit-exact: {rest_ok}; 45 deg elbow moves unweighted vertices by at most {still:.1e}")


def test_08_bbox_map_and_lerp_box():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10000):
        a = BoundingBox(rng.uniform(-5, 5, 3), rng.uniform(0.05, 5, 3))
        b = BoundingBox(rng.uniform(-5, 5, 3), rng.uniform(0.05, 5, 3))
        p = rng.uniform(-10, 10, 3)
        worst = max(worst, float(np.abs(bbox_map(bbox_map(p, a, b), b, a) - p).max()))
    a = BoundingBox(rng.uniform(-5, 5, 3), rng.uniform(0.05, 5, 3))
    b = BoundingBox(rng.uniform(-5, 5, 3), rng.uniform(0.05, 5, 3))
    ends = all(np.array_equal(lerp_box(a, b, t).center, r.center) and
               np.array_equal(lerp_box(a, b, t).half_extents, r.half_extents) for t, r in ((0.0, a), (1.0, b)))
    record(8, worst <= 1e-9 and ends, f"10,000 round trips, worst error {worst:.1e}; lerp_box endpoints exact: {ends}")


def _probe(scene, pose, n=32):
    dims, origin, h = extraction_grid(scene.region(pose), n)
    axes = [origin[i] + h * np.arange(dims[i]) for i in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


def test_09_advection_consistency():
    a0, b0 = synthetic.fixture_pairs()["biped-tailed"]
    a, b, _ = io.normalize_pair(a0, b0)
    scene = InterpolationScene(_unified(a, b, 0.5), a, b, 128)
    pts = _probe(scene, {})
    rest_same = np.array_equal(scene.evaluator({}, "voxelize")(pts), scene.evaluator({}, "advect")(pts))

    # blended elbow weights, so skinning is not rigid and the two modes differ
    thin, thick = synthetic.tube_arm(radius=0.2, blend=0.2), synthetic.tube_arm(radius=0.3, blend=0.3)
    pairs = [CorrespondencePair(PairKind.ONE_TO_ONE, (i,), (i,)) for i in thin.skeleton.ids]
    fields = (CharacterFields(thin, 128), CharacterFields(thick, 128))
    scene = InterpolationScene(_unified(thin, thick, 0.5, pairs), thin, thick, 128, *fields)
    pose = {1: JointAngles((0.0, 0.0, 30.0))}
    pts = _probe(scene, pose)
    diff = np.abs(scene.evaluator(pose, "voxelize")(pts) - scene.evaluator(pose, "advect")(pts))
    # the finer of the two part grids the rotated bone samples
    spacing = min(fields[0].rest_grid(1).spacing, fields[1].rest_grid(1).spacing)
    mean = float(diff.mean())
    record(9, rest_same and mean < 2 * spacing,
           f"rest modes identical: {rest_same}; 30 deg blended elbow mean |dSDF| = "
           f"{mean / spacing:.3g} part-grid spacings (max {diff.max() / spacing:.3g})")


def test_10_alpha_values():
    vals = {(5, 5): 1.25, (20, 10): 2.5, (20, 20): 0.5}
    errs = {k: abs(alpha(*k) - v) for k, v in vals.items()}
    record(10, all(e <= 1e-12 for e in errs.values()),
           ", ".join(f"alpha{k} = {alpha(*k):.12g}" for k in vals))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
