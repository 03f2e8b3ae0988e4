"""Hierarchical bone correspondence between two skeletons.

The initial matching is a recursive assignment over the two bone trees:
every candidate pair of bones is priced by a leaf cost plus the optimal
assignment of their children (with the option of sending a child subtree to
void). Post-processing then folds chains of unmatched bones into
one-to-many groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidPairs
from .skeleton import Bone, LocalFrame, Skeleton, octant


class PairKind(str, Enum):
    ONE_TO_ONE = "OneToOne"
    ONE_TO_VOID_SOURCE = "OneToVoidSource"
    ONE_TO_VOID_TARGET = "OneToVoidTarget"
    # "Source"/"Target" names the side that holds the chain of several bones
    ONE_TO_MANY_SOURCE = "OneToManySource"
    ONE_TO_MANY_TARGET = "OneToManyTarget"

    def swapped(self) -> "PairKind":
        return _SWAP[self]


_SWAP = {
    PairKind.ONE_TO_ONE: PairKind.ONE_TO_ONE,
    PairKind.ONE_TO_VOID_SOURCE: PairKind.ONE_TO_VOID_TARGET,
    PairKind.ONE_TO_VOID_TARGET: PairKind.ONE_TO_VOID_SOURCE,
    PairKind.ONE_TO_MANY_SOURCE: PairKind.ONE_TO_MANY_TARGET,
    PairKind.ONE_TO_MANY_TARGET: PairKind.ONE_TO_MANY_SOURCE,
}


@dataclass(frozen=True)
class CorrespondencePair:
    kind: PairKind
    source_bones: tuple[int, ...]
    target_bones: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", PairKind(self.kind))
        object.__setattr__(self, "source_bones", tuple(int(b) for b in self.source_bones))
        object.__setattr__(self, "target_bones", tuple(int(b) for b in self.target_bones))
        ns, nt = len(self.source_bones), len(self.target_bones)
        ok = {
            PairKind.ONE_TO_ONE: ns == 1 and nt == 1,
            PairKind.ONE_TO_VOID_SOURCE: ns == 1 and nt == 0,
            PairKind.ONE_TO_VOID_TARGET: ns == 0 and nt == 1,
            PairKind.ONE_TO_MANY_SOURCE: ns >= 2 and nt == 1,
            PairKind.ONE_TO_MANY_TARGET: ns == 1 and nt >= 2,
        }[self.kind]
        if not ok:
            raise InvalidPairs(f"{self.kind.value} cannot hold {ns} source / {nt} target bones")

    @classmethod
    def from_groups(cls, source: Sequence[int], target: Sequence[int]) -> "CorrespondencePair":
        ns, nt = len(source), len(target)
        if ns == 1 and nt == 1:
            kind = PairKind.ONE_TO_ONE
        elif nt == 0:
            kind = PairKind.ONE_TO_VOID_SOURCE
        elif ns == 0:
            kind = PairKind.ONE_TO_VOID_TARGET
        elif nt == 1:
            kind = PairKind.ONE_TO_MANY_SOURCE
        else:
            kind = PairKind.ONE_TO_MANY_TARGET
        return cls(kind, tuple(source), tuple(target))

    def swapped(self) -> "CorrespondencePair":
        return CorrespondencePair(self.kind.swapped(), self.target_bones, self.source_bones)


@dataclass(frozen=True)
class AlphaParams:
    c1: float = -0.05
    c2: float = 0.15
    c3: float = 1.5


# ---------------------------------------------------------------------------
# cost terms
# ---------------------------------------------------------------------------

def leaf_leaf_cost(s: Bone, d: Bone, src_root_frame: LocalFrame, tgt_root_frame: LocalFrame) -> float:
    mismatch = octant(s.head, src_root_frame) != octant(d.head, tgt_root_frame)
    return (
        abs(s.length - d.length)
        + float(np.linalg.norm(s.head - d.head))
        + abs(s.hierarchy_level - d.hierarchy_level)
        + float(mismatch)
    )


def leaf_void_cost(bone: Bone, alpha: float) -> float:
    return alpha * bone.length


def alpha(n_source: int, n_target: int, params: AlphaParams = AlphaParams()) -> float:
    raw = params.c1 * min(n_source, n_target) + params.c2 * abs(n_source - n_target) + params.c3
    return max(raw, 0.0)


def branch_direction_cost(s: Bone, d: Bone, src_root_head, tgt_root_head) -> float:
    """One minus the cosine between the bone-to-root directions.

    A bone sitting on its root head has no direction and costs nothing.
    """
    ws = np.asarray(src_root_head, float) - s.head
    wd = np.asarray(tgt_root_head, float) - d.head
    nn = float(ws @ ws) * float(wd @ wd)
    if nn == 0.0:
        return 0.0
    # sqrt(x*x) == x in IEEE arithmetic, so identical directions give exactly 0
    cos = float(ws @ wd) / math.sqrt(nn)
    return 1.0 - min(1.0, max(-1.0, cos))


# ---------------------------------------------------------------------------
# assignment with void slots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    void_row_cost: np.ndarray
    void_col_cost: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, float)
        if e.ndim != 2:
            e = e.reshape(len(np.atleast_1d(self.void_row_cost)), -1)
        r = np.asarray(self.void_row_cost, float).reshape(e.shape[0])
        c = np.asarray(self.void_col_cost, float).reshape(e.shape[1])
        for a in (e, r, c):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("costs must be finite and non-negative")
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "void_row_cost", r)
        object.__setattr__(self, "void_col_cost", c)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass
class Assignment:
    # one (row, col) per row; col is None when the row goes to its void slot
    pairs: list[tuple[int, int | None]]
    unmatched_cols: list[int]
    total: float

    def as_dict(self) -> dict[int, int | None]:
        return dict(self.pairs)


def assignment_total(costs: CostMatrix, row_choice: Sequence[int | None]) -> float:
    """Canonical summation order: rows first, then voided columns by index."""
    total = 0.0
    used = set()
    for i, j in enumerate(row_choice):
        if j is None:
            total += costs.void_row_cost[i]
        else:
            total += costs.entries[i, j]
            used.add(j)
    for j in range(costs.shape[1]):
        if j not in used:
            total += costs.void_col_cost[j]
    return float(total)


def _solve_square(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kuhn-Munkres with potentials (shortest augmenting paths), O(n^3).

    Returns (row_to_col, u, v) with c[i, j] - u[i] - v[j] >= 0 everywhere and
    equal to zero on the returned matching.
    """
    n = c.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def hungarian(costs: CostMatrix) -> Assignment:
    """Minimum-cost assignment where rows and columns may go unmatched.

    Every row either takes one column or pays its void cost; unmatched
    columns pay theirs. Among equally cheap optima the lexicographically
    smallest row-by-row choice wins, with void ordered after every column.
    """
    n, m = costs.shape
    if n == 0 or m == 0:
        choice = [None] * n
        return Assignment([(i, None) for i in range(n)], list(range(m)), assignment_total(costs, choice))

    N = n + m
    big = float(costs.void_row_cost.sum() + costs.void_col_cost.sum() + costs.entries.max() + 1.0)
    c = np.full((N, N), big)
    allowed = np.zeros((N, N), dtype=bool)
    c[:n, :m] = costs.entries
    allowed[:n, :m] = True
    ri = np.arange(n)
    c[ri, m + ri] = costs.void_row_cost
    allowed[ri, m + ri] = True
    cj = np.arange(m)
    c[n + cj, cj] = costs.void_col_cost
    allowed[n + cj, cj] = True
    c[n:, m:] = 0.0
    allowed[n:, m:] = True

    row_to_col, u, v = _solve_square(c)
    tol = 1e-9 * (1.0 + float(np.abs(c[allowed]).max()))
    tight = allowed & (np.abs(c - u[:, None] - v[None, :]) <= tol)
    tight[np.arange(N), row_to_col] = True
    col_to_row = np.empty(N, dtype=np.int64)
    col_to_row[row_to_col] = np.arange(N)

    _lex_smallest(tight, row_to_col, col_to_row, n)

    choice = [int(row_to_col[i]) if row_to_col[i] < m else None for i in range(n)]
    matched = {j for j in choice if j is not None}
    return Assignment(
        [(i, choice[i]) for i in range(n)],
        [j for j in range(m) if j not in matched],
        assignment_total(costs, choice),
    )


def _lex_smallest(tight: np.ndarray, row_to_col: np.ndarray, col_to_row: np.ndarray, n_real: int) -> None:
    """Move the perfect matching to the lexicographically smallest one on the
    tight-edge graph (all of which are optimal), fixing real rows in order."""
    N = tight.shape[0]
    adj = [np.flatnonzero(tight[r]) for r in range(N)]
    fixed = np.zeros(N, dtype=bool)

    for i in range(n_real):
        old = row_to_col[i]
        for j in adj[i]:
            if j >= old:
                break
            r = col_to_row[j]
            if fixed[r]:
                continue
            fixed[i] = True
            seen = np.zeros(N, dtype=bool)
            seen[j] = True
            path = _augment(r, old, adj, col_to_row, fixed, seen)
            fixed[i] = False
            if path is None:
                continue
            # rotate the alternating path: r takes path[0], ..., last row takes old
            rows = [r] + [col_to_row[col] for col in path[:-1]]
            for row, col in zip(rows, path):
                row_to_col[row] = col
                col_to_row[col] = row
            row_to_col[i] = j
            col_to_row[j] = i
            break
        fixed[i] = True


def _augment(r, target_col, adj, col_to_row, fixed, seen):
    """DFS for an alternating path that re-seats row r and ends on target_col.
    Returns the sequence of columns taken along the path."""
    stack = [(r, iter(adj[r]), [])]
    while stack:
        row, it, cols = stack[-1]
        advanced = False
        for col in it:
            if seen[col]:
                continue
            seen[col] = True
            if col == target_col:
                return cols + [col]
            nxt = col_to_row[col]
            if fixed[nxt]:
                continue
            stack.append((nxt, iter(adj[nxt]), cols + [col]))
            advanced = True
            break
        if not advanced:
            stack.pop()
    return None


# ---------------------------------------------------------------------------
# recursive matching
# ---------------------------------------------------------------------------

@dataclass
class _Plan:
    cost: float
    # child-level assignment for branch-to-branch, (src_child, tgt_child or None)
    children: list[tuple[int, int | None]] = field(default_factory=list)
    void_targets: list[int] = field(default_factory=list)


class _Matcher:
    def __init__(self, src: Skeleton, tgt: Skeleton, params: AlphaParams):
        self.src, self.tgt = src, tgt
        self.alpha = alpha(len(src), len(tgt), params)
        self.src_root = src.root_bone()
        self.tgt_root = tgt.root_bone()
        self.src_void = self._subtree_void(src)
        self.tgt_void = self._subtree_void(tgt)
        self.memo: dict[tuple[int, int], _Plan] = {}

    def _subtree_void(self, skel: Skeleton) -> dict[int, float]:
        out: dict[int, float] = {}
        for bid in reversed(skel.depth_first()):
            out[bid] = leaf_void_cost(skel[bid], self.alpha) + sum(out[c] for c in skel.children(bid))
        return out

    def plan(self, s: int, d: int) -> _Plan:
        key = (s, d)
        if key in self.memo:
            return self.memo[key]
        sb, db = self.src[s], self.tgt[d]
        base = leaf_leaf_cost(sb, db, self.src_root.frame, self.tgt_root.frame)
        sc, dc = self.src.children(s), self.tgt.children(d)
        if not sc and not dc:
            plan = _Plan(base)
        elif sc and not dc:
            plan = _Plan(base + sum(self.src_void[c] for c in sc))
        elif dc and not sc:
            plan = _Plan(base + sum(self.tgt_void[c] for c in dc))
        else:
            entries = np.array([[self.plan(a, b).cost for b in dc] for a in sc])
            cm = CostMatrix(
                entries,
                [self.src_void[a] for a in sc],
                [self.tgt_void[b] for b in dc],
            )
            asg = hungarian(cm)
            direction = branch_direction_cost(sb, db, self.src_root.head, self.tgt_root.head)
            plan = _Plan(
                base + direction + asg.total,
                [(sc[i], None if j is None else dc[j]) for i, j in asg.pairs],
                [dc[j] for j in asg.unmatched_cols],
            )
        self.memo[key] = plan
        return plan

    def emit(self, s: int, d: int, out: list[CorrespondencePair]) -> None:
        out.append(CorrespondencePair(PairKind.ONE_TO_ONE, (s,), (d,)))
        plan = self.plan(s, d)
        sc, dc = self.src.children(s), self.tgt.children(d)
        if sc and dc:
            for a, b in plan.children:
                if b is None:
                    self._void(self.src, a, PairKind.ONE_TO_VOID_SOURCE, out)
                else:
                    self.emit(a, b, out)
            for b in plan.void_targets:
                self._void(self.tgt, b, PairKind.ONE_TO_VOID_TARGET, out)
        else:
            for a in sc:
                self._void(self.src, a, PairKind.ONE_TO_VOID_SOURCE, out)
            for b in dc:
                self._void(self.tgt, b, PairKind.ONE_TO_VOID_TARGET, out)

    @staticmethod
    def _void(skel: Skeleton, top: int, kind: PairKind, out: list[CorrespondencePair]) -> None:
        stack = [top]
        while stack:
            bid = stack.pop()
            if kind is PairKind.ONE_TO_VOID_SOURCE:
                out.append(CorrespondencePair(kind, (bid,), ()))
            else:
                out.append(CorrespondencePair(kind, (), (bid,)))
            stack.extend(reversed(skel.children(bid)))


def hierarchical_match_with_cost(
    src: Skeleton, tgt: Skeleton, params: AlphaParams = AlphaParams()
) -> tuple[list[CorrespondencePair], float]:
    """Initial one-to-one / one-to-void matching and its total cost.

    The two roots are always matched to each other.
    """
    m = _Matcher(src, tgt, params)
    out: list[CorrespondencePair] = []
    total = m.plan(src.root, tgt.root).cost
    m.emit(src.root, tgt.root, out)
    return out, total


def hierarchical_match(src: Skeleton, tgt: Skeleton, params: AlphaParams = AlphaParams()) -> list[CorrespondencePair]:
    return hierarchical_match_with_cost(src, tgt, params)[0]


# ---------------------------------------------------------------------------
# post-processing into one-to-many groups
# ---------------------------------------------------------------------------

_CHAIN_VOID_COST = 10.0  # above the largest possible direction cost (2)


def _void_chain(skel: Skeleton, start: int, void: set[int]) -> list[int]:
    """Longest parent-to-child run from ``start`` of void bones with at most one child."""
    chain = []
    cur = start
    while cur in void and len(skel.children(cur)) <= 1:
        chain.append(cur)
        kids = skel.children(cur)
        if not kids:
            break
        cur = kids[0]
    return chain


def post_process(pairs: Sequence[CorrespondencePair], src: Skeleton, tgt: Skeleton) -> list[CorrespondencePair]:
    """Group one-to-void chains hanging below matched bones into one-to-many pairs.

    Chains under a one-to-one pair are matched to each other by direction cost;
    a longer pair of chains first contributes one-to-one pairs for its common
    prefix. Afterwards, a one-to-one pair whose source (target) bone is a leaf
    absorbs a void chain hanging below its counterpart.
    """
    o_pairs = [(p.source_bones[0], p.target_bones[0]) for p in pairs if p.kind is PairKind.ONE_TO_ONE]
    void_src = {p.source_bones[0] for p in pairs if p.kind is PairKind.ONE_TO_VOID_SOURCE}
    void_tgt = {p.target_bones[0] for p in pairs if p.kind is PairKind.ONE_TO_VOID_TARGET}
    if any(p.kind in (PairKind.ONE_TO_MANY_SOURCE, PairKind.ONE_TO_MANY_TARGET) for p in pairs):
        raise InvalidPairs("post_process expects only one-to-one and one-to-void pairs")
    if not void_src and not void_tgt:
        return list(pairs)

    m_pairs: list[tuple[list[int], list[int]]] = []
    sroot, troot = src.root_bone().head, tgt.root_bone().head
    for s, d in list(o_pairs):
        s_chains = [c for c in (_void_chain(src, k, void_src) for k in src.children(s)) if c]
        t_chains = [c for c in (_void_chain(tgt, k, void_tgt) for k in tgt.children(d)) if c]
        if not s_chains or not t_chains:
            continue
        entries = np.array([
            [branch_direction_cost(src[a[0]], tgt[b[0]], sroot, troot) for b in t_chains]
            for a in s_chains
        ])
        asg = hungarian(CostMatrix(entries, np.full(len(s_chains), _CHAIN_VOID_COST),
                                   np.full(len(t_chains), _CHAIN_VOID_COST)))
        for i, j in asg.pairs:
            if j is None:
                continue
            sc, tc = list(s_chains[i]), list(t_chains[j])
            void_src.difference_update(sc)
            void_tgt.difference_update(tc)
            if len(sc) > 1 and len(tc) > 1:
                n = min(len(sc), len(tc)) - 1
                o_pairs.extend(zip(sc[:n], tc[:n]))
                sc, tc = sc[n:], tc[n:]
            m_pairs.append((sc, tc))

    # a leaf matched one-to-one takes over the void chain under its partner
    absorbed: list[tuple[list[int], list[int]]] = []
    kept = []
    for s, d in o_pairs:
        sk, dk = src.children(s), tgt.children(d)
        if not sk and len(dk) == 1 and (chain := _void_chain(tgt, dk[0], void_tgt)):
            void_tgt.difference_update(chain)
            absorbed.append(([s], [d] + chain))
        elif not dk and len(sk) == 1 and (chain := _void_chain(src, sk[0], void_src)):
            void_src.difference_update(chain)
            absorbed.append(([s] + chain, [d]))
        else:
            kept.append((s, d))

    out = [CorrespondencePair(PairKind.ONE_TO_ONE, (s,), (d,)) for s, d in kept]
    out += [CorrespondencePair.from_groups(a, b) for a, b in m_pairs + absorbed]
    out += [CorrespondencePair(PairKind.ONE_TO_VOID_SOURCE, (b,), ()) for b in src.depth_first() if b in void_src]
    out += [CorrespondencePair(PairKind.ONE_TO_VOID_TARGET, (), (b,)) for b in tgt.depth_first() if b in void_tgt]
    return out


def correspond(src: Skeleton, tgt: Skeleton, params: AlphaParams = AlphaParams()) -> list[CorrespondencePair]:
    return post_process(hierarchical_match(src, tgt, params), src, tgt)


# ---------------------------------------------------------------------------
# validation and override splicing
# ---------------------------------------------------------------------------

def validate_pairs(pairs: Sequence[CorrespondencePair], src: Skeleton, tgt: Skeleton) -> None:
    """Check coverage (each bone exactly once) and one-to-many chain shape."""
    seen_s: dict[int, int] = {}
    seen_t: dict[int, int] = {}
    for k, p in enumerate(pairs):
        for b in p.source_bones:
            if b not in src:
                raise InvalidPairs(f"pair {k}: unknown source bone {b}")
            if b in seen_s:
                raise InvalidPairs(f"source bone {src[b].name!r} appears in pairs {seen_s[b]} and {k}")
            seen_s[b] = k
        for b in p.target_bones:
            if b not in tgt:
                raise InvalidPairs(f"pair {k}: unknown target bone {b}")
            if b in seen_t:
                raise InvalidPairs(f"target bone {tgt[b].name!r} appears in pairs {seen_t[b]} and {k}")
            seen_t[b] = k
        for skel, group in ((src, p.source_bones), (tgt, p.target_bones)):
            for a, b in zip(group, group[1:]):
                if skel[b].parent != a:
                    raise InvalidPairs(f"pair {k}: {skel[a].name!r} -> {skel[b].name!r} is not a parent-child link")
    missing_s = [src[b].name for b in src.ids if b not in seen_s]
    missing_t = [tgt[b].name for b in tgt.ids if b not in seen_t]
    if missing_s or missing_t:
        raise InvalidPairs(f"uncovered bones: source {missing_s}, target {missing_t}")


def splice_override(
    computed: Sequence[CorrespondencePair],
    override: Sequence[CorrespondencePair],
    src: Skeleton,
    tgt: Skeleton,
) -> list[CorrespondencePair]:
    """Replace computed pairs with user-supplied ones.

    Computed pairs sharing any bone with an override pair are dropped; bones
    they leave uncovered fall back to one-to-void. An override that covers
    every bone therefore replaces the computed list wholesale.
    """
    taken_s = {b for p in override for b in p.source_bones}
    taken_t = {b for p in override for b in p.target_bones}
    out = list(override)
    for p in computed:
        if taken_s.intersection(p.source_bones) or taken_t.intersection(p.target_bones):
            for b in p.source_bones:
                if b not in taken_s:
                    out.append(CorrespondencePair(PairKind.ONE_TO_VOID_SOURCE, (b,), ()))
            for b in p.target_bones:
                if b not in taken_t:
                    out.append(CorrespondencePair(PairKind.ONE_TO_VOID_TARGET, (), (b,)))
        else:
            out.append(p)
    validate_pairs(out, src, tgt)
    return out
