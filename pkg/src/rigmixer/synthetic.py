"""Hand-built rigged characters for tests, demos and the acceptance suite.

Most characters wrap each bone in its own closed ellipsoid, fully weighted to
that bone. The tube arm instead has one continuous surface with blended
weights around the elbow, so its parts are open after segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .skeleton import Character, Mesh, build_skeleton, with_part_boxes


@dataclass(frozen=True)
class RigSpec:
    names: tuple[str, ...]
    parents: tuple[str | None, ...]
    heads: tuple[tuple[float, float, float], ...]
    tails: tuple[tuple[float, float, float], ...]
    radii: tuple[float, ...]
    ids: tuple[int, ...] | None = None


def uv_sphere(n_lat: int = 10, n_lon: int = 16) -> Mesh:
    """Closed unit sphere, outward winding."""
    verts = [(0.0, 1.0, 0.0)]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append((np.sin(th) * np.cos(ph), np.cos(th), -np.sin(th) * np.sin(ph)))
    verts.append((0.0, -1.0, 0.0))
    tris = []
    ring = lambda i, j: 1 + (i - 1) * n_lon + j % n_lon
    for j in range(n_lon):
        tris.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            tris += [(a, c, d), (a, d, b)]
    last = len(verts) - 1
    for j in range(n_lon):
        tris.append((ring(n_lat - 1, j), last, ring(n_lat - 1, j + 1)))
    return Mesh(np.array(verts), np.array(tris))


def ellipsoid_character(spec: RigSpec, n_lat: int = 10, n_lon: int = 16, gap: float = 0.9) -> Character:
    """One ellipsoid per bone spanning ``gap`` of the bone's length."""
    skel = build_skeleton(spec.names, spec.parents, spec.heads, spec.tails, spec.ids)
    unit = uv_sphere(n_lat, n_lon)
    verts, tris, weights = [], [], []
    offset = 0
    for b, r in zip(skel, spec.radii):
        semi = np.array([r, 0.5 * gap * b.length, r])
        local = unit.vertices * semi + np.array([0.0, 0.5 * b.length, 0.0])
        verts.append(b.frame.to_world(local))
        tris.append(unit.triangles + offset)
        weights += [{b.id: 1.0} for _ in range(len(local))]
        offset += len(local)
    mesh = Mesh(np.concatenate(verts), np.concatenate(tris))
    return with_part_boxes(Character(mesh, skel, tuple(weights)))


def _spec(rows: Sequence[tuple], ids=None) -> RigSpec:
    names, parents, heads, tails, radii = zip(*rows)
    return RigSpec(tuple(names), tuple(parents), tuple(heads), tuple(tails), tuple(radii),
                   None if ids is None else tuple(ids))


def biped_spec() -> RigSpec:
    return _spec([
        ("hips", None, (0, 1.0, 0), (0, 1.3, 0), 0.16),
        ("spine", "hips", (0, 1.3, 0), (0, 1.65, 0), 0.15),
        ("head", "spine", (0, 1.65, 0), (0, 1.95, 0), 0.12),
        ("l_arm", "spine", (0.18, 1.6, 0), (0.48, 1.6, 0), 0.05),
        ("l_forearm", "l_arm", (0.48, 1.6, 0), (0.78, 1.6, 0), 0.045),
        ("r_arm", "spine", (-0.18, 1.6, 0), (-0.48, 1.6, 0), 0.05),
        ("r_forearm", "r_arm", (-0.48, 1.6, 0), (-0.78, 1.6, 0), 0.045),
        ("l_thigh", "hips", (0.1, 1.0, 0), (0.1, 0.55, 0), 0.07),
        ("l_shin", "l_thigh", (0.1, 0.55, 0), (0.1, 0.1, 0), 0.055),
        ("r_thigh", "hips", (-0.1, 1.0, 0), (-0.1, 0.55, 0), 0.07),
        ("r_shin", "r_thigh", (-0.1, 0.55, 0), (-0.1, 0.1, 0), 0.055),
    ])


def quadruped_spec() -> RigSpec:
    return _spec([
        ("body", None, (0, 0.8, -0.45), (0, 0.8, 0.45), 0.2),
        ("neck", "body", (0, 0.8, 0.45), (0, 1.1, 0.65), 0.08),
        ("head", "neck", (0, 1.1, 0.65), (0, 1.15, 0.9), 0.1),
        ("fl_leg", "body", (0.12, 0.7, 0.35), (0.12, 0.4, 0.35), 0.05),
        ("fl_foot", "fl_leg", (0.12, 0.4, 0.35), (0.12, 0.05, 0.35), 0.04),
        ("fr_leg", "body", (-0.12, 0.7, 0.35), (-0.12, 0.4, 0.35), 0.05),
        ("fr_foot", "fr_leg", (-0.12, 0.4, 0.35), (-0.12, 0.05, 0.35), 0.04),
        ("bl_leg", "body", (0.12, 0.7, -0.35), (0.12, 0.4, -0.35), 0.05),
        ("bl_foot", "bl_leg", (0.12, 0.4, -0.35), (0.12, 0.05, -0.35), 0.04),
        ("br_leg", "body", (-0.12, 0.7, -0.35), (-0.12, 0.4, -0.35), 0.05),
        ("br_foot", "br_leg", (-0.12, 0.4, -0.35), (-0.12, 0.05, -0.35), 0.04),
    ])


def tailed_spec() -> RigSpec:
    """A biped with a three-bone tail and a single-bone neck-and-head."""
    return _spec([
        ("pelvis", None, (0, 0.9, 0), (0, 1.2, 0), 0.17),
        ("chest", "pelvis", (0, 1.2, 0), (0, 1.55, 0), 0.16),
        ("skull", "chest", (0, 1.55, 0), (0, 1.9, 0.05), 0.13),
        ("l_upper", "chest", (0.2, 1.5, 0), (0.45, 1.4, 0), 0.055),
        ("l_lower", "l_upper", (0.45, 1.4, 0), (0.7, 1.3, 0), 0.045),
        ("r_upper", "chest", (-0.2, 1.5, 0), (-0.45, 1.4, 0), 0.055),
        ("r_lower", "r_upper", (-0.45, 1.4, 0), (-0.7, 1.3, 0), 0.045),
        ("l_leg", "pelvis", (0.11, 0.9, 0), (0.11, 0.1, 0), 0.07),
        ("r_leg", "pelvis", (-0.11, 0.9, 0), (-0.11, 0.1, 0), 0.07),
        ("tail1", "pelvis", (0, 0.95, -0.15), (0, 0.85, -0.45), 0.06),
        ("tail2", "tail1", (0, 0.85, -0.45), (0, 0.8, -0.75), 0.05),
        ("tail3", "tail2", (0, 0.8, -0.75), (0, 0.85, -1.0), 0.04),
    ])


def biped() -> Character:
    return ellipsoid_character(biped_spec())


def quadruped() -> Character:
    return ellipsoid_character(quadruped_spec())


def tailed() -> Character:
    return ellipsoid_character(tailed_spec())


def fixture_pairs() -> dict[str, tuple[Character, Character]]:
    """The three handmade source/target pairs."""
    b, q, t = biped(), quadruped(), tailed()
    return {"biped-tailed": (b, t), "quadruped-biped": (q, b), "tailed-quadruped": (t, q)}


def head_chain_pair() -> tuple[Character, Character]:
    """A single head bone (id 5) against a four-bone head chain (ids 1, 6, 11, 16)."""
    src = _spec([
        ("root", None, (0, 0, 0), (0, 1, 0), 0.2),
        ("head", "root", (0, 1, 0), (0, 2, 0), 0.25),
    ], ids=(0, 5))
    tgt = _spec([
        ("root", None, (0, 0, 0), (0, 1, 0), 0.2),
        ("h1", "root", (0, 1, 0), (0, 1.25, 0), 0.25),
        ("h2", "h1", (0, 1.25, 0), (0, 1.5, 0), 0.25),
        ("h3", "h2", (0, 1.5, 0), (0, 1.75, 0), 0.25),
        ("h4", "h3", (0, 1.75, 0), (0, 2.0, 0), 0.25),
    ], ids=(0, 1, 6, 11, 16))
    return ellipsoid_character(src), ellipsoid_character(tgt)


def tube_arm(radius: float = 0.2, rings: int = 21, sides: int = 16, blend: float = 0.2) -> Character:
    """Capped cylinder along +x over two bones, with weights blended near the elbow at x=1."""
    skel = build_skeleton(["upper", "fore"], [None, "upper"], [(0, 0, 0), (1, 0, 0)], [(1, 0, 0), (2, 0, 0)])
    xs = np.linspace(0.0, 2.0, rings)
    ang = 2 * np.pi * np.arange(sides) / sides
    verts = [(x, radius * np.cos(a), radius * np.sin(a)) for x in xs for a in ang]
    verts += [(0.0, 0.0, 0.0), (2.0, 0.0, 0.0)]
    tris = []
    for i in range(rings - 1):
        for j in range(sides):
            a, b = i * sides + j, i * sides + (j + 1) % sides
            c, d = a + sides, b + sides
            tris += [(a, b, d), (a, d, c)]
    s0, s1 = rings * sides, rings * sides + 1
    last = (rings - 1) * sides
    for j in range(sides):
        tris.append((s0, (j + 1) % sides, j))
        tris.append((s1, last + j, last + (j + 1) % sides))
    weights = []
    for x, _, _ in verts:
        w_fore = float(np.clip((x - (1.0 - blend)) / (2 * blend), 0.0, 1.0))
        wm = {}
        if w_fore < 1.0:
            wm[0] = 1.0 - w_fore
        if w_fore > 0.0:
            wm[1] = w_fore
        weights.append(wm)
    return with_part_boxes(Character(Mesh(np.array(verts), np.array(tris)), skel, tuple(weights)))


def random_spec(n_bones: int, rng: np.random.Generator, branching: float = 0.5) -> RigSpec:
    """Random tree whose bones point away from their parents; ``branching`` biases
    new bones toward attaching to random earlier bones rather than the last one."""
    names = [f"b{i}" for i in range(n_bones)]
    parents: list[str | None] = [None]
    heads = [np.zeros(3)]
    tails = [np.array([0.0, 1.0, 0.0])]
    for i in range(1, n_bones):
        p = i - 1 if rng.random() > branching else int(rng.integers(0, i))
        parents.append(names[p])
        head = tails[p]
        d = rng.normal(size=3)
        d = d / np.linalg.norm(d) + 0.5 * (tails[p] - heads[p]) / np.linalg.norm(tails[p] - heads[p])
        d = d / np.linalg.norm(d)
        heads.append(head)
        tails.append(head + rng.uniform(0.3, 1.2) * d)
    radii = tuple(float(rng.uniform(0.05, 0.15)) for _ in range(n_bones))
    return RigSpec(tuple(names), tuple(parents), tuple(map(tuple, heads)), tuple(map(tuple, tails)), radii)

