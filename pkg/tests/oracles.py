"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def partial_matchings(n: int, m: int) -> np.ndarray:
    """Every way to send rows 0..n-1 to distinct columns or to -1 (void), one per row of the result."""
    out = []

    def rec(prefix, used):
        if len(prefix) == n:
            out.append(list(prefix))
            return
        rec(prefix + [-1], used)
        for j in range(m):
            if j not in used:
                rec(prefix + [j], used | {j})

    rec([], frozenset())
    return np.array(out, np.int64).reshape(-1, n)


def brute_force_assignment(entries: np.ndarray, void_row: np.ndarray, void_col: np.ndarray) -> float:
    """Minimum total over every partial matching; unmatched rows and columns pay their void cost.

    Each candidate is summed rows first, then unmatched columns by index.
    """
    entries = np.asarray(entries, float)
    n, m = entries.shape
    choice = partial_matchings(n, m)
    total = np.zeros(len(choice))
    for i in range(n):
        c = choice[:, i]
        total += np.where(c < 0, void_row[i], entries[i, np.maximum(c, 0)] if m else void_row[i])
    for j in range(m):
        total += np.where((choice == j).any(axis=1), 0.0, void_col[j])
    return float(total.min())


def brute_force_sdt(occ: np.ndarray, spacing: float) -> np.ndarray:
    """Nearest opposite-occupancy node by exhaustive scan over every pair of nodes."""
    idx = np.argwhere(np.ones_like(occ, bool))
    flat = occ.ravel()
    filled = np.argwhere(occ)
    empty = np.argwhere(~occ)
    out = np.empty(len(idx))
    for start in range(0, len(idx), 512):
        block = idx[start:start + 512]
        inside = flat[start:start + 512]
        for mask, other, sign in ((inside, empty, -1.0), (~inside, filled, 1.0)):
            if mask.any():
                d2 = ((block[mask][:, None, :] - other[None, :, :]) ** 2).sum(axis=2).min(axis=1)
                out[start:start + 512][mask] = sign * np.sqrt(d2) * spacing
    return out.reshape(occ.shape)


def points_inside(points: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Parity of +z ray crossings against a closed triangle mesh."""
    pts = np.asarray(points, float)
    a, b, c = (verts[tris[:, i]] for i in range(3))
    # tiny skew so rays avoid edges of axis-aligned input
    px = pts[:, 0] + 1.234567e-7
    py = pts[:, 1] + 7.654321e-8
    count = np.zeros(len(pts), np.int64)
    for ta, tb, tc in zip(a, b, c):
        det = (tb[0] - ta[0]) * (tc[1] - ta[1]) - (tc[0] - ta[0]) * (tb[1] - ta[1])
        if det == 0:
            continue
        l1 = ((px - ta[0]) * (tc[1] - ta[1]) - (tc[0] - ta[0]) * (py - ta[1])) / det
        l2 = ((tb[0] - ta[0]) * (py - ta[1]) - (px - ta[0]) * (tb[1] - ta[1])) / det
        l0 = 1 - l1 - l2
        inside = (l0 > 0) & (l1 > 0) & (l2 > 0)
        z = l0 * ta[2] + l1 * tb[2] + l2 * tc[2]
        count += inside & (z > pts[:, 2])
    return count % 2 == 1


def point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact distance from each p[i] to triangle (a[i], b[i], c[i]), region by region."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    closest = np.empty_like(p)
    done = np.zeros(len(p), bool)

    def take(mask, q):
        m = mask & ~done
        closest[m] = q[m]
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        take((d1 <= 0) & (d2 <= 0), a)
        take((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        take((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w2 = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w2[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v3 = (vb * denom)[:, None]
        w3 = (vc * denom)[:, None]
        take(np.ones(len(p), bool), a + ab * v3 + ac * w3)
    return np.linalg.norm(p - closest, axis=1)


def point_mesh_distance(points: np.ndarray, verts: np.ndarray, tris: np.ndarray, k: int = 24) -> np.ndarray:
    """Distance to the nearest of the ``k`` triangles with the closest centroids.

    Never below the true distance, and equal to it whenever the nearest
    triangle is among those candidates.
    """
    a, b, c = (verts[tris[:, i]] for i in range(3))
    tree = cKDTree((a + b + c) / 3.0)
    k = min(k, len(tris))
    _, cand = tree.query(points, k=k)
    cand = cand.reshape(len(points), k)
    best = np.full(len(points), np.inf)
    for j in range(k):
        ids = cand[:, j]
        best = np.minimum(best, point_triangle_distance(points, a[ids], b[ids], c[ids]))
    return best


def surface_samples(verts: np.ndarray, tris: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform samples on a triangle mesh."""
    a, b, c = (verts[tris[:, i]] for i in range(3))
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    pick = rng.choice(len(tris), size=n, p=area / area.sum())
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    return ((1 - s)[:, None] * a[pick] + (s * (1 - r2))[:, None] * b[pick] + (s * r2)[:, None] * c[pick])


def mean_symmetric_distance(va, ta, vb, tb, n: int = 20000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    pa = surface_samples(va, ta, n, rng)
    pb = surface_samples(vb, tb, n, rng)
    return 0.5 * (point_mesh_distance(pa, vb, tb).mean() + point_mesh_distance(pb, va, ta).mean())


def brute_force_tree_cost(src, tgt, params) -> float:
    """Recursive matching cost with every child-level assignment found by exhaustive search."""
    from rigmixer.correspondence import alpha, branch_direction_cost, leaf_leaf_cost, leaf_void_cost

    a = alpha(len(src), len(tgt), params)
    sroot, troot = src.root_bone(), tgt.root_bone()

    def void(skel, b):
        return leaf_void_cost(skel[b], a) + sum(void(skel, c) for c in skel.children(b))

    def cost(s, d):
        base = leaf_leaf_cost(src[s], tgt[d], sroot.frame, troot.frame)
        sc, dc = src.children(s), tgt.children(d)
        if not sc and not dc:
            return base
        if not dc:
            return base + sum(void(src, c) for c in sc)
        if not sc:
            return base + sum(void(tgt, c) for c in dc)
        entries = np.array([[cost(x, y) for y in dc] for x in sc])
        best = brute_force_assignment(entries, np.array([void(src, x) for x in sc]),
                                      np.array([void(tgt, y) for y in dc]))
        return base + branch_direction_cost(src[s], tgt[d], sroot.head, troot.head) + best

    return cost(src.root, tgt.root)
