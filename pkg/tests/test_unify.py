import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from rigmixer import synthetic
from rigmixer.correspondence import CorrespondencePair, PairKind, correspond
from rigmixer.errors import DegenerateBox, IncompletePairs
from rigmixer.skeleton import BoundingBox, LocalFrame, build_skeleton, character_box
from rigmixer.unify import (
    BoneKind,
    build_unified_skeleton,
    lerp_box,
    map_point_between_character_boxes,
    slerp_frame,
    split_bone,
)

TS = (0.0, 0.25, 0.5, 0.75, 1.0)
FIXTURES = ["biped-tailed", "quadruped-biped", "tailed-quadruped"]


def _bone_with_box(head, tail, box):
    b = build_skeleton(["x"], [None], [head], [tail])[0]
    return dataclasses.replace(b, part_box=box)


def _chain(lengths):
    names = [f"c{i}" for i in range(len(lengths))]
    y = np.concatenate([[0.0], np.cumsum(lengths)])
    heads = [(0, y[i], 0) for i in range(len(lengths))]
    tails = [(0, y[i + 1], 0) for i in range(len(lengths))]
    return list(build_skeleton(names, [None] + names[:-1], heads, tails))


def _unify(pair, t):
    a, b = synthetic.fixture_pairs()[pair]
    pairs = correspond(a.skeleton, b.skeleton)
    return a, b, build_unified_skeleton(a.skeleton, b.skeleton, pairs, t, character_box(a), character_box(b))


boxes = st.builds(
    lambda c, h: BoundingBox(np.array(c), np.array(h)),
    st.tuples(*[st.floats(-5, 5)] * 3),
    st.tuples(*[st.floats(0.01, 5)] * 3),
)


class TestLerpBox:
    def test_unit_to_double(self):
        a = BoundingBox(np.zeros(3), np.ones(3))
        b = BoundingBox(np.zeros(3), np.full(3, 2.0))
        assert np.array_equal(lerp_box(a, b, 0.5).half_extents, [1.5, 1.5, 1.5])

    @given(boxes, boxes)
    def test_endpoints_exact(self, a, b):
        for t, ref in ((0.0, a), (1.0, b)):
            out = lerp_box(a, b, t)
            assert np.array_equal(out.center, ref.center) and np.array_equal(out.half_extents, ref.half_extents)

    @given(boxes, boxes)
    def test_midpoint_center(self, a, b):
        assert np.allclose(lerp_box(a, b, 0.5).center, 0.5 * (a.center + b.center), atol=1e-12)

    @given(boxes, boxes, st.floats(0, 1))
    def test_matches_corner_interpolation(self, a, b, t):
        out = lerp_box(a, b, t)
        assert np.allclose(out.corners(), (1 - t) * a.corners() + t * b.corners(), atol=1e-9)


class TestSlerpFrame:
    def test_half_way_to_quarter_turn(self):
        a = LocalFrame.identity()
        b = LocalFrame(Rotation.from_euler("y", 90, degrees=True).as_matrix(), np.zeros(3))
        out = slerp_frame(a, b, 0.5)
        assert np.allclose(out.rotation, Rotation.from_euler("y", 45, degrees=True).as_matrix(), atol=1e-6)

    def test_endpoints(self):
        a = LocalFrame(Rotation.from_euler("x", 30, degrees=True).as_matrix(), np.ones(3))
        b = LocalFrame(Rotation.from_euler("z", 70, degrees=True).as_matrix(), np.zeros(3))
        assert slerp_frame(a, b, 0.0) is a and slerp_frame(a, b, 1.0) is b

    @given(st.floats(0, 1))
    def test_equal_frames(self, t):
        a = LocalFrame(Rotation.from_euler("xyz", [10, 20, 30], degrees=True).as_matrix(), np.array([1.0, 2, 3]))
        out = slerp_frame(a, a, t)
        assert np.allclose(out.rotation, a.rotation, atol=1e-9)
        assert np.allclose(out.origin, a.origin, atol=1e-12)

    @given(st.lists(st.floats(-179, 179), min_size=6, max_size=6), st.floats(0, 1))
    def test_always_a_rotation(self, angles, t):
        a = LocalFrame(Rotation.from_euler("xyz", angles[:3], degrees=True).as_matrix(), np.zeros(3))
        b = LocalFrame(Rotation.from_euler("xyz", angles[3:], degrees=True).as_matrix(), np.zeros(3))
        r = slerp_frame(a, b, t).rotation
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-6) and abs(np.linalg.det(r) - 1) < 1e-6

    def test_takes_the_short_way(self):
        a = LocalFrame.identity()
        b = LocalFrame(Rotation.from_euler("z", 350, degrees=True).as_matrix(), np.zeros(3))
        out = slerp_frame(a, b, 0.5)
        assert np.allclose(out.rotation, Rotation.from_euler("z", -5, degrees=True).as_matrix(), atol=1e-9)


class TestSplitBone:
    def _one(self, length):
        return _bone_with_box((0, 0, 0), (0, length, 0), BoundingBox(np.array([0.0, length / 2, 0]), np.array([0.3, length / 2, 0.2])))

    def test_equal_halves(self):
        segs = split_bone(self._one(4.0), _chain([1, 1]))
        assert [s.length for s in segs] == [2.0, 2.0]
        assert np.array_equal(segs[1].head, [0, 2, 0])

    def test_one_to_three(self):
        segs = split_bone(self._one(2.0), _chain([1, 3]))
        assert [s.length for s in segs] == [0.5, 1.5]

    def test_single_chain_is_whole_bone(self):
        one = self._one(3.0)
        (seg,) = split_bone(one, _chain([0.7]))
        assert seg.length == 3.0 and np.array_equal(seg.head, one.head)
        assert np.array_equal(seg.box.center, one.part_box.center)
        assert np.array_equal(seg.box.half_extents, one.part_box.half_extents)

    @given(st.lists(st.floats(0.01, 10), min_size=1, max_size=6), st.floats(0.1, 10))
    def test_conservation(self, lengths, total):
        one = self._one(total)
        segs = split_bone(one, _chain(lengths))
        assert sum(s.length for s in segs) == pytest.approx(total, rel=1e-12)
        # boxes are stored as center and half extent, so recovered faces may differ by an ulp
        ulp = 4 * np.spacing(total)
        assert abs(segs[0].box.lo[1] - one.part_box.lo[1]) <= ulp
        assert abs(segs[-1].box.hi[1] - one.part_box.hi[1]) <= ulp
        for a, b in zip(segs, segs[1:]):
            assert abs(a.box.hi[1] - b.box.lo[1]) <= ulp
            assert np.allclose(a.head + a.length * np.array([0, 1, 0]), b.head, atol=1e-9)
        for s in segs:
            assert np.array_equal(s.box.half_extents[[0, 2]], one.part_box.half_extents[[0, 2]])
        ratios = np.array([s.length for s in segs]) / total
        assert np.allclose(ratios, np.array(lengths) / sum(lengths), atol=1e-9)


class TestCharacterBoxMap:
    def test_identity(self):
        box = (BoundingBox(np.zeros(3), np.array([1.0, 2, 3])), LocalFrame.identity())
        assert np.allclose(map_point_between_character_boxes([0.3, -1, 2], box, box), [0.3, -1, 2])

    def test_center_to_center(self):
        a = (BoundingBox(np.zeros(3), np.ones(3)), LocalFrame(np.eye(3), np.array([1.0, 1, 1])))
        b = (BoundingBox(np.array([0.5, 0, 0]), np.ones(3)), LocalFrame.identity())
        assert np.allclose(map_point_between_character_boxes([1, 1, 1], a, b), [0.5, 0, 0])

    def test_doubled_extents(self):
        a = (BoundingBox(np.zeros(3), np.ones(3)), LocalFrame.identity())
        b = (BoundingBox(np.zeros(3), np.full(3, 2.0)), LocalFrame.identity())
        assert np.allclose(map_point_between_character_boxes([0.1, -0.2, 0.3], a, b), [0.2, -0.4, 0.6])

    def test_degenerate(self):
        a = (BoundingBox(np.zeros(3), np.array([1.0, 0, 1])), LocalFrame.identity())
        with pytest.raises(DegenerateBox):
            map_point_between_character_boxes([0, 0, 0], a, a)


class TestBuildUnified:
    @pytest.mark.parametrize("pair", FIXTURES)
    def test_topology_does_not_depend_on_t(self, pair):
        shapes = []
        for t in TS:
            _, _, uni = _unify(pair, t)
            shapes.append([(b.id, b.name, b.kind, b.parent, b.source, b.target) for b in uni])
        assert all(s == shapes[0] for s in shapes)

    @pytest.mark.parametrize("pair", FIXTURES)
    def test_source_recovered_at_zero(self, pair):
        a, b, uni = _unify(pair, 0.0)
        for k in uni:
            if k.kind is BoneKind.CONSTRAINED or (k.kind is BoneKind.VIRTUAL and k.source is not None) or (
                    k.kind is BoneKind.LOOSE and sum(u.source == k.source for u in uni) == 1):
                s = a.skeleton[k.source]
                assert np.allclose(k.head, s.head, atol=1e-6) and abs(k.length - s.length) <= 1e-6
                assert np.allclose(k.frame.rotation, s.frame.rotation, atol=1e-6)
                assert np.allclose(k.box.center, s.part_box.center, atol=1e-6)
                assert np.allclose(k.box.half_extents, s.part_box.half_extents, atol=1e-6)

    @pytest.mark.parametrize("pair", FIXTURES)
    def test_target_recovered_at_one(self, pair):
        a, b, uni = _unify(pair, 1.0)
        for k in uni:
            if k.target is None or (k.kind is BoneKind.LOOSE and sum(u.target == k.target for u in uni) > 1):
                continue
            d = b.skeleton[k.target]
            assert np.allclose(k.head, d.head, atol=1e-6) and abs(k.length - d.length) <= 1e-6
            assert np.allclose(k.frame.rotation, d.frame.rotation, atol=1e-6)
            assert np.allclose(k.box.half_extents, d.part_box.half_extents, atol=1e-6)

    def test_loose_bones_tile_the_one_side_at_its_endpoint(self, head_pair):
        s, d = head_pair
        pairs = correspond(s.skeleton, d.skeleton)
        uni = build_unified_skeleton(s.skeleton, d.skeleton, pairs, 0.0)
        loose = [k for k in uni if k.kind is BoneKind.LOOSE]
        assert [k.target for k in loose] == [1, 6, 11, 16]
        head = s.skeleton[5]
        assert np.allclose(loose[0].head, head.head)
        assert sum(k.length for k in loose) == pytest.approx(head.length)
        for a, b in zip(loose, loose[1:]):
            assert np.allclose(a.tail, b.head, atol=1e-9) and b.parent == a.id

    def test_identical_skeletons_are_reproduced(self, biped):
        sk = biped.skeleton
        pairs = [CorrespondencePair(PairKind.ONE_TO_ONE, (b,), (b,)) for b in sk.ids]
        for t in (0.3, 0.8):
            uni = build_unified_skeleton(sk, sk, pairs, t)
            for k in uni:
                b = sk[k.source]
                assert k.kind is BoneKind.CONSTRAINED
                assert np.allclose(k.head, b.head, atol=1e-12) and abs(k.length - b.length) < 1e-12
                assert np.allclose(k.frame.rotation, b.frame.rotation, atol=1e-9)
                assert (k.parent is None) == (b.parent is None)
                if b.parent is not None:
                    assert uni[k.parent].source == b.parent

    def test_virtual_source_bone_vanishes_at_one(self, biped, tailed):
        pairs = correspond(tailed.skeleton, biped.skeleton)
        uni = build_unified_skeleton(tailed.skeleton, biped.skeleton, pairs, 1.0,
                                     character_box(tailed), character_box(biped))
        virt = [k for k in uni if k.kind is BoneKind.VIRTUAL and k.target is None]
        assert virt
        for k in virt:
            assert k.length == 0.0 and k.box.is_degenerate

    def test_incomplete_pairs(self, biped):
        sk = biped.skeleton
        pairs = [CorrespondencePair(PairKind.ONE_TO_ONE, (b,), (b,)) for b in sk.ids[:-1]]
        with pytest.raises(IncompletePairs):
            build_unified_skeleton(sk, sk, pairs, 0.5)

    def test_bad_t(self, biped):
        sk = biped.skeleton
        pairs = [CorrespondencePair(PairKind.ONE_TO_ONE, (b,), (b,)) for b in sk.ids]
        with pytest.raises(ValueError):
            build_unified_skeleton(sk, sk, pairs, 1.5)
