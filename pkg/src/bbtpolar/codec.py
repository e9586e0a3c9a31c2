"""BBT / IBBT polar encoding and successive-cancellation decoding.

LLR convention: positive means bit 0 is more likely.  Message bits map to
active leaves in ascending leaf order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .tree import NodeId, NormalGraph, build_normal_graph, build_tree

LLR_SAT = 1e30


@dataclass(frozen=True)
class CodeSpec:
    block_length: int
    dimension: int
    info_set: tuple[int, ...]
    flavor: str = "bbt"
    interleaver_seed: int | None = None

    def __post_init__(self):
        info = tuple(sorted(int(i) for i in self.info_set))
        object.__setattr__(self, "info_set", info)
        object.__setattr__(self, "flavor", self.flavor.lower())
        N, K = self.block_length, self.dimension
        if N < 1:
            raise ValueError("block length must be >= 1")
        if not 0 <= K <= N or len(info) != K or len(set(info)) != K:
            raise ValueError(f"info set must hold {K} distinct indices")
        if info and (info[0] < 0 or info[-1] >= N):
            raise ValueError("info set index out of range")
        if self.flavor not in ("bbt", "ibbt"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if (self.flavor == "ibbt") != (self.interleaver_seed is not None):
            raise ValueError("an interleaver seed is required for (and only for) IBBT codes")

    @cached_property
    def graph(self) -> NormalGraph:
        return build_normal_graph(build_tree(self.block_length), self.interleaver_seed)

    @cached_property
    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.block_length, dtype=bool)
        mask[list(self.info_set)] = True
        return mask

    @property
    def frozen_set(self) -> tuple[int, ...]:
        return tuple(np.flatnonzero(~self.active_mask))

    @property
    def rate(self) -> float:
        return self.dimension / self.block_length

    def to_json(self) -> dict:
        d = {"n": self.block_length, "k": self.dimension, "info_set": list(self.info_set),
             "flavor": self.flavor}
        if self.interleaver_seed is not None:
            d["seed"] = self.interleaver_seed
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CodeSpec":
        return cls(int(d["n"]), int(d["k"]), tuple(d["info_set"]), d.get("flavor", "bbt"),
                   None if d.get("seed") is None else int(d["seed"]))


def load_spec(path: str | Path) -> CodeSpec:
    """Read a spec file; leading ``#`` comment lines are skipped."""
    lines = Path(path).read_text().splitlines()
    body = "\n".join(ln for ln in lines if not ln.lstrip().startswith("#"))
    return CodeSpec.from_json(json.loads(body))


def spec_from_order(N: int, K: int, order, flavor: str = "bbt", seed: int | None = None) -> CodeSpec:
    """Information set = the ``K`` most reliable leaves of ``order``."""
    order = [int(i) for i in order]
    if sorted(order) != list(range(N)):
        raise ValueError("reliability order must be a permutation of 0..N-1")
    return CodeSpec(N, K, tuple(order[:K]), flavor, seed)


# --------------------------------------------------------------------------- encoding


def transform(leaf_bits: np.ndarray, graph: NormalGraph) -> np.ndarray:
    """Map leaf-layer bits to the top layer (``x G``); works on ``(..., N)`` arrays."""
    x = np.array(leaf_bits, dtype=np.uint8, copy=True)
    for st in reversed(graph.stages):
        x[..., st.upper] ^= x[..., st.lower]
    return x


def inverse_transform(codeword: np.ndarray, graph: NormalGraph) -> np.ndarray:
    x = np.array(codeword, dtype=np.uint8, copy=True)
    for st in graph.stages:
        x[..., st.upper] ^= x[..., st.lower]
    return x


def encode(spec: CodeSpec, message) -> np.ndarray:
    """Encode one message (length K) or a batch ``(F, K)``."""
    msg = np.asarray(message, dtype=np.uint8)
    if msg.shape[-1] != spec.dimension:
        raise ValueError(f"message length {msg.shape[-1]} != K={spec.dimension}")
    x = np.zeros(msg.shape[:-1] + (spec.block_length,), dtype=np.uint8)
    x[..., spec.active_mask] = msg & 1
    return transform(x, spec.graph)


def generator_matrix(spec: CodeSpec, restricted: bool = False) -> np.ndarray:
    """Full ``N x N`` transform matrix; ``restricted`` keeps only the rows in A."""
    G = transform(np.eye(spec.block_length, dtype=np.uint8), spec.graph)
    return G[list(spec.info_set)] if restricted else G


def gf2_rank(M: np.ndarray) -> int:
    A = (np.array(M, dtype=np.uint8) & 1).copy()
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        piv = np.flatnonzero(A[r:, c])
        if piv.size == 0:
            continue
        p = r + piv[0]
        A[[r, p]] = A[[p, r]]
        hit = np.flatnonzero(A[:, c])
        hit = hit[hit != r]
        A[hit] ^= A[r]
        r += 1
        if r == rows:
            break
    return r


def is_codeword(spec: CodeSpec, word) -> np.ndarray:
    """Membership test: the pre-image of a codeword vanishes on the frozen set."""
    u = inverse_transform(np.asarray(word, dtype=np.uint8), spec.graph)
    return ~np.any(u[..., ~spec.active_mask], axis=-1)


# --------------------------------------------------------------------------- LLR kernels


def f_llr(a, b, mode: str = "exact"):
    """Check-node combination ``ln((1+e^{a+b})/(e^a+e^b))``.

    The exact mode uses the sign-min form plus the two correction terms,
    which is stable for saturated inputs.  ``min_sum`` drops the corrections.
    """
    a = np.clip(a, -LLR_SAT, LLR_SAT)
    b = np.clip(b, -LLR_SAT, LLR_SAT)
    core = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    if mode == "min_sum":
        return core
    if mode != "exact":
        raise ValueError(f"unknown f mode {mode!r}")
    return core + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


def g_llr(a, b, c):
    """``b + (-1)^c a``."""
    return b + np.where(np.asarray(c) & 1, -1.0, 1.0) * a


def hard_decision(llr):
    """1 where the LLR is <= 0; an exact zero decodes to 1."""
    return (np.asarray(llr) <= 0).astype(np.uint8)


# --------------------------------------------------------------------------- SC decoding


@dataclass
class ScState:
    alpha: dict[NodeId, np.ndarray] = field(default_factory=dict)
    beta: dict[NodeId, np.ndarray] = field(default_factory=dict)


def _sc_node(spec, graph, node, alpha, genie, leaf_llr, state, mode):
    tree = graph.tree
    ell = alpha.shape[-1]
    if state is not None:
        state.alpha[node] = alpha
    if ell == 1:
        j = tree.offset_of(node)
        if leaf_llr is not None:
            leaf_llr[:, j] = alpha[:, 0]
        if genie is not None:
            beta = genie[:, j:j + 1].copy()
        elif spec.active_mask[j]:
            beta = hard_decision(alpha)
        else:
            beta = np.zeros_like(alpha, dtype=np.uint8)
        if state is not None:
            state.beta[node] = beta
        return beta

    h = (ell + 1) // 2
    r = ell - h
    perm = np.asarray(graph.interleaver(node))
    paired = np.flatnonzero(perm < r)          # left positions with a partner
    partner = h + perm[paired]                 # their partner in the right half
    inv = np.empty(r, dtype=np.int64)          # right position k pairs with left inv[k]
    inv[perm[paired]] = paired

    left_alpha = alpha[:, :h].copy()
    left_alpha[:, paired] = f_llr(alpha[:, paired], alpha[:, partner], mode)
    left, right = tree.children_of(node)
    beta_l = _sc_node(spec, graph, left, left_alpha, genie, leaf_llr, state, mode)

    right_alpha = g_llr(alpha[:, inv], alpha[:, h:], beta_l[:, inv])
    beta_r = _sc_node(spec, graph, right, right_alpha, genie, leaf_llr, state, mode)

    beta = np.concatenate([beta_l, beta_r], axis=1)
    beta[:, paired] ^= beta_r[:, perm[paired]]
    if state is not None:
        state.beta[node] = beta
    return beta


def sc_decode_batch(spec: CodeSpec, llrs, mode: str = "exact", genie=None, return_leaf_llrs=False):
    """SC decoding of ``F`` frames at once.

    Returns ``(messages (F,K), codewords (F,N))`` and, if requested, the LLR
    seen at every leaf.  With ``genie`` (an ``(F,N)`` array of true leaf
    bits) each leaf is forced to its true value before decoding continues.
    """
    llrs = np.atleast_2d(np.asarray(llrs, dtype=float))
    if llrs.shape[1] != spec.block_length:
        raise ValueError(f"expected {spec.block_length} LLRs per frame, got {llrs.shape[1]}")
    graph = spec.graph
    leaf_llr = np.empty_like(llrs) if return_leaf_llrs else None
    if genie is not None:
        genie = np.atleast_2d(np.asarray(genie, dtype=np.uint8))
    cw = _sc_node(spec, graph, graph.tree.root, llrs, genie, leaf_llr, None, mode)
    u = inverse_transform(cw, graph)
    msgs = u[:, spec.active_mask]
    if return_leaf_llrs:
        return msgs, cw, leaf_llr
    return msgs, cw


def sc_decode(spec: CodeSpec, channel_llrs, mode: str = "exact", state: ScState | None = None):
    """Decode one frame; returns ``(message, codeword_estimate)``."""
    llr = np.asarray(channel_llrs, dtype=float)
    if llr.ndim != 1 or llr.size != spec.block_length:
        raise ValueError(f"expected {spec.block_length} channel LLRs, got shape {llr.shape}")
    graph = spec.graph
    cw = _sc_node(spec, graph, graph.tree.root, llr[None, :], None, None, state, mode)[0]
    u = inverse_transform(cw, graph)
    return u[spec.active_mask], cw
