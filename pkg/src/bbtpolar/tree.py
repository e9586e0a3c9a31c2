"""Balanced binary tree (BBT) structure and its layered normal graph.

A node ``(s, t)`` sits at level ``s``; its children are ``(s+1, 2t)`` and
``(s+1, 2t+1)`` with lengths ``ceil(l/2)`` and ``floor(l/2)``.  Every level
of the normal graph holds ``N`` variable nodes: the concatenation, left to
right, of the channel/bit sequences of the tree nodes at that level.  Because
children occupy consecutive spans of their parent, a position keeps the same
index on every layer, and each stage between layer ``i`` and ``i+1`` is a set
of disjoint ``(j0, j1)`` butterflies plus pass-through positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class NodeId(NamedTuple):
    level: int
    position: int


@dataclass(frozen=True)
class BbtTree:
    """Dense per-level storage: ``lengths[s][t]`` is 0 where no node exists."""

    block_length: int
    depth: int
    lengths: tuple[np.ndarray, ...]
    offsets: tuple[np.ndarray, ...]

    @property
    def root(self) -> NodeId:
        return NodeId(0, 0)

    def exists(self, node: NodeId) -> bool:
        s, t = node
        return 0 <= s <= self.depth and 0 <= t < self.lengths[s].size and self.lengths[s][t] > 0

    def length_of(self, node: NodeId) -> int:
        if not self.exists(node):
            raise KeyError(f"no node {tuple(node)} in BBT of length {self.block_length}")
        return int(self.lengths[node.level][node.position])

    def offset_of(self, node: NodeId) -> int:
        """First normal-graph position covered by ``node``."""
        self.length_of(node)
        return int(self.offsets[node.level][node.position])

    def children_of(self, node: NodeId) -> tuple[NodeId, NodeId] | None:
        if self.length_of(node) < 2:
            return None
        s, t = node
        return NodeId(s + 1, 2 * t), NodeId(s + 1, 2 * t + 1)

    def is_leaf(self, node: NodeId) -> bool:
        return self.length_of(node) == 1

    def nodes_at(self, level: int) -> list[NodeId]:
        return [NodeId(level, int(t)) for t in np.flatnonzero(self.lengths[level])]

    def internal_nodes(self, bottom_up: bool = True) -> list[NodeId]:
        levels = range(self.depth - 1, -1, -1) if bottom_up else range(self.depth)
        return [nd for s in levels for nd in self.nodes_at(s) if self.length_of(nd) >= 2]

    @property
    def leaf_order(self) -> list[NodeId]:
        """Leaves left to right; the i-th leaf carries bit/channel index i."""
        out: list[NodeId] = []

        def walk(nd: NodeId) -> None:
            kids = self.children_of(nd)
            if kids is None:
                out.append(nd)
            else:
                walk(kids[0])
                walk(kids[1])

        walk(self.root)
        return out

    def subtree_height(self, node: NodeId) -> int:
        kids = self.children_of(node)
        if kids is None:
            return 0
        return 1 + max(self.subtree_height(kids[0]), self.subtree_height(kids[1]))


def build_tree(N: int) -> BbtTree:
    if N < 1:
        raise ValueError(f"block length must be >= 1, got {N}")
    n = math.ceil(math.log2(N)) if N > 1 else 0
    lengths = [np.zeros(1 << s, dtype=np.int64) for s in range(n + 1)]
    offsets = [np.zeros(1 << s, dtype=np.int64) for s in range(n + 1)]
    lengths[0][0] = N
    for s in range(n):
        for t in np.flatnonzero(lengths[s]):
            ell = int(lengths[s][t])
            if ell < 2:
                continue
            h = (ell + 1) // 2
            o = int(offsets[s][t])
            lengths[s + 1][2 * t], offsets[s + 1][2 * t] = h, o
            lengths[s + 1][2 * t + 1], offsets[s + 1][2 * t + 1] = ell - h, o + h
    for arr in lengths:
        arr.setflags(write=False)
    for arr in offsets:
        arr.setflags(write=False)
    return BbtTree(N, n, tuple(lengths), tuple(offsets))


# --------------------------------------------------------------------------- interleavers


def _splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step; returns (new_state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def node_permutation(seed: int, node: NodeId, size: int) -> tuple[int, ...]:
    """Fisher-Yates shuffle of ``range(size)`` driven by SplitMix64.

    The stream is keyed by ``(seed, level, position)`` so that every internal
    node draws an independent permutation and the result is bit-exact on any
    platform.  Index draws use plain modulo reduction.
    """
    _, key = _splitmix64(((node.level & 0xFFFFFFFF) << 32) | (node.position & 0xFFFFFFFF))
    state = (seed ^ key) & MASK64
    perm = list(range(size))
    for i in range(size - 1, 0, -1):
        state, r = _splitmix64(state)
        j = r % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


# --------------------------------------------------------------------------- normal graph


@dataclass(frozen=True)
class Stage:
    """Connections between layer ``layer`` and ``layer + 1``.

    ``x_i[upper] = x_{i+1}[upper] ^ x_{i+1}[lower]``, ``x_i[lower] = x_{i+1}[lower]``
    and ``x_i[p] = x_{i+1}[p]`` for every pass-through position ``p``.
    """

    layer: int
    upper: np.ndarray
    lower: np.ndarray
    passthrough: np.ndarray


@dataclass(frozen=True)
class NormalGraph:
    tree: BbtTree
    stages: tuple[Stage, ...]
    interleavers: dict[NodeId, tuple[int, ...]] = field(default_factory=dict)
    seed: int | None = None

    @property
    def layers(self) -> int:
        return self.tree.depth + 1

    @property
    def width(self) -> int:
        return self.tree.block_length

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def transforms(self) -> list[tuple[int, int, int]]:
        return [
            (st.layer, int(a), int(b))
            for st in self.stages
            for a, b in zip(st.upper, st.lower)
        ]

    @property
    def pass_through(self) -> list[tuple[int, int]]:
        return [(st.layer, int(p)) for st in self.stages for p in st.passthrough]

    def interleaver(self, node: NodeId) -> tuple[int, ...]:
        h = (self.tree.length_of(node) + 1) // 2
        return self.interleavers.get(node, tuple(range(h)))

    def spans_at(self, level: int) -> list[tuple[NodeId, int, int]]:
        """``(node, offset, length)`` for every node of the (duplicated) level."""
        tree = self.tree
        out = [
            (nd, tree.offset_of(nd), tree.length_of(nd))
            for nd in tree.nodes_at(level)
        ]
        if level == tree.depth and level > 0:
            # penultimate-level leaves are copied down as (n, 2t)
            for nd in tree.nodes_at(level - 1):
                if tree.length_of(nd) == 1:
                    out.append((NodeId(level, 2 * nd.position), tree.offset_of(nd), 1))
            out.sort(key=lambda x: x[1])
        return out

    def dump_lines(self) -> Iterator[dict]:
        """JSON-ready records: one per transform, then one per pass-through."""
        for i, j0, j1 in self.transforms:
            yield {"layer": i, "upper": j0, "lower": j1}
        for i, j in self.pass_through:
            yield {"layer": i, "pass": j}


def build_normal_graph(tree: BbtTree, interleaver_seed: int | None = None) -> NormalGraph:
    """Derive the layered graph; a seed draws one interleaver per internal node.

    The right child of a node of odd length is zero-padded to ``ceil(l/2)``
    before permutation, so a left position whose partner is the pad becomes a
    pass-through.  Without a seed every interleaver is the identity and the
    pattern is the plain BBT transform.
    """
    interleavers: dict[NodeId, tuple[int, ...]] = {}
    stages = []
    for s in range(tree.depth):
        upper, lower, passthrough = [], [], []
        for nd in tree.nodes_at(s):
            ell = tree.length_of(nd)
            o = tree.offset_of(nd)
            if ell == 1:
                passthrough.append(o)  # leaf duplicated to the last layer
                continue
            h = (ell + 1) // 2
            r = ell - h
            if interleaver_seed is None:
                perm = tuple(range(h))
            else:
                perm = node_permutation(interleaver_seed, nd, h)
                interleavers[nd] = perm
            for m in range(h):
                if perm[m] < r:
                    upper.append(o + m)
                    lower.append(o + h + perm[m])
                else:
                    passthrough.append(o + m)
        stages.append(
            Stage(
                s,
                np.asarray(upper, dtype=np.int64),
                np.asarray(lower, dtype=np.int64),
                np.asarray(sorted(passthrough), dtype=np.int64),
            )
        )
    return NormalGraph(tree, tuple(stages), interleavers, interleaver_seed)


# --------------------------------------------------------------------------- subset labels


@dataclass(frozen=True)
class SubsetLabeling:
    delta: int
    labels: tuple[frozenset[int], ...]

    def as_masks(self) -> np.ndarray:
        return np.array([sum(1 << k for k in S) for S in self.labels], dtype=np.int64)


def label_history(ell: int) -> list[list[frozenset[int]]]:
    """Per-layer labels ``S_{i,j}`` for a block of ``ell`` channels."""
    graph = build_normal_graph(build_tree(ell))
    cur = [frozenset()] * ell
    hist = [cur]
    for st in graph.stages:
        nxt = list(cur)
        for j1 in st.lower:  # upper < lower always; the lower index gains the stage
            nxt[j1] = cur[j1] | {st.layer}
        cur = nxt
        hist.append(cur)
    return hist


def label_subsets(ell: int) -> SubsetLabeling:
    if ell < 1:
        raise ValueError(f"block length must be >= 1, got {ell}")
    hist = label_history(ell)
    return SubsetLabeling(len(hist) - 1, tuple(hist[-1]))


def divergence_stage(ell: int, p: int, q: int) -> int | None:
    """First stage whose transform pairs the blocks holding ``p`` and ``q``.

    Returns the stage index at which the two positions stop sharing a block
    (or ``None`` if they never separate, i.e. ``p == q``).
    """
    tree = build_tree(ell)
    for s in range(1, tree.depth + 1):
        def block(j: int) -> int:
            for nd in tree.nodes_at(s):
                o, L = tree.offset_of(nd), tree.length_of(nd)
                if o <= j < o + L:
                    return nd.position
            # below a penultimate leaf the block is the leaf itself
            return -1 - j

        if block(p) != block(q):
            return s - 1
    return None


def sperner_bound(delta: int) -> int:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return math.comb(delta, delta // 2)


def max_antichain(labeling: SubsetLabeling) -> int:
    """Width of the labels under strict inclusion (Dilworth via bipartite matching)."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_bipartite_matching

    masks = labeling.as_masks()
    sub = ((masks[:, None] & masks[None, :]) == masks[:, None]) & (masks[:, None] != masks[None, :])
    if not sub.any():
        return len(masks)
    match = maximum_bipartite_matching(csr_matrix(sub.astype(np.int8)), perm_type="column")
    return len(masks) - int((match >= 0).sum())
