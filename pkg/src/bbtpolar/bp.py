"""Belief propagation on the (I)BBT normal graph and on its truncated sub-graph.

Messages: ``D[i, j]`` flows down into node ``[i, j]`` (channel side, layer 0
first) and ``U[i, j]`` flows up into it (frozen-prior side, layer ``n``
first).  The sub-graph keeps layers ``0 .. n - tau``; each node at layer
``n - tau`` is a leaf subcode of length ``<= lmax`` whose upward messages are
computed by an exact APP module.

Update rules at a butterfly ``(j0, j1)`` between layers ``i`` and ``i+1``
with ``x_i[j0] = x_{i+1}[j0] ^ x_{i+1}[j1]``, ``x_i[j1] = x_{i+1}[j1]``::

    U[i, j0]   = f(U[i+1, j0], U[i+1, j1] + D[i, j1])
    U[i, j1]   = f(U[i+1, j0], D[i, j0]) + U[i+1, j1]
    D[i+1, j0] = f(D[i, j0], D[i, j1] + U[i+1, j1])
    D[i+1, j1] = f(D[i, j0], U[i+1, j0]) + D[i, j1]

Pass-through positions copy messages unchanged.  Every message is clipped to
``+-MSG_SAT``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .codec import CodeSpec, inverse_transform
from .tree import NodeId, NormalGraph

MSG_SAT = 40.0


@dataclass(frozen=True)
class BpConfig:
    max_iterations: int = 50
    max_leaf_subcode: int = 1
    early_stop: bool = True
    f_mode: str = "exact"
    force_tau: int | None = None  # test hook: override the derived truncation

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_leaf_subcode < 1:
            raise ValueError("max_leaf_subcode must be >= 1")
        if self.f_mode not in ("exact", "min_sum"):
            raise ValueError(f"unknown f mode {self.f_mode!r}")


@dataclass
class MessageState:
    up: np.ndarray
    down: np.ndarray


@dataclass
class DecodeMetrics:
    iterations_used: float = 0
    layers_traversed: float = 0
    adds: float = 0
    mults: float = 0
    comparisons: float = 0
    lut_accesses: float = 0

    def scaled(self, k: float) -> "DecodeMetrics":
        return DecodeMetrics(*(k * v for v in self.as_tuple()))

    def as_tuple(self) -> tuple:
        return (self.iterations_used, self.layers_traversed, self.adds, self.mults,
                self.comparisons, self.lut_accesses)


def derive_truncation(graph: NormalGraph, lmax: int) -> tuple[int, list[tuple[NodeId, tuple[int, int]]]]:
    """Largest ``tau`` with every node at level ``n - tau`` of length ``<= lmax``."""
    n = graph.depth
    if not 1 <= lmax:
        raise ValueError("lmax must be >= 1")
    tau = 0
    for cand in range(n + 1):
        if all(ell <= lmax for _, _, ell in graph.spans_at(n - cand)):
            tau = cand
        else:
            break
    spans = [(nd, (o, ell)) for nd, o, ell in graph.spans_at(n - tau)]
    return tau, spans


def subcode_codebook(spec: CodeSpec, graph: NormalGraph, level: int, offset: int, length: int) -> np.ndarray:
    """All codewords (rows) of the subcode rooted at a node of ``level``."""
    N = graph.width
    leaves = [a for a in range(offset, offset + length) if spec.active_mask[a]]
    rows = np.zeros((len(leaves), N), dtype=np.uint8)
    rows[np.arange(len(leaves)), leaves] = 1
    for st in reversed(graph.stages[level:]):
        rows[:, st.upper] ^= rows[:, st.lower]
    gens = rows[:, offset:offset + length]
    k = len(leaves)
    msgs = (np.arange(1 << k)[:, None] >> np.arange(k)[None, :]) & 1
    return ((msgs @ gens) & 1).astype(np.uint8) if k else np.zeros((1, length), dtype=np.uint8)


def app_extrinsic(codebook, down, mode: str = "exact") -> np.ndarray:
    """Extrinsic upward LLRs of an enumerable subcode.

    ``U_p = L_p(0) - L_p(1) - D_p`` with
    ``L_p(b) = ln sum_{c: c_p = b} exp(1/2 sum_q (1 - 2 c_q) D_q)``.
    A bit value that no codeword takes yields ``+-inf``.
    """
    C = np.atleast_2d(np.asarray(codebook, dtype=np.int64))
    D = np.asarray(down, dtype=float)
    if C.shape[0] == 0:
        raise ValueError("empty codebook")
    metric = 0.5 * ((1 - 2 * C) @ D)
    out = np.empty(C.shape[1])
    for p in range(C.shape[1]):
        L = []
        for b in (0, 1):
            sel = metric[C[:, p] == b]
            if sel.size == 0:
                L.append(-np.inf)
            elif mode == "min_sum":
                L.append(sel.max())
            else:
                m = sel.max()
                L.append(m + math.log(np.exp(sel - m).sum()))
        out[p] = L[0] - L[1] - D[p]
    return out


# --------------------------------------------------------------------------- kernels


@njit(cache=True, inline="always")
def _f(a, b, exact):
    aa = abs(a)
    ab = abs(b)
    m = aa if aa < ab else ab
    if (a < 0.0) != (b < 0.0):
        m = -m
    if a == 0.0 or b == 0.0:
        m = 0.0
    if exact:
        m = m + math.log1p(math.exp(-abs(a + b)))
        m = m - math.log1p(math.exp(-abs(a - b)))
    return m


@njit(cache=True, inline="always")
def _clip(x, sat):
    if x > sat:
        return sat
    if x < -sat:
        return -sat
    return x


@njit(cache=True)
def _up_stage(U, D, i, pu, pl, qs, exact, sat):
    for k in range(pu.size):
        j0 = pu[k]
        j1 = pl[k]
        c = U[i + 1, j0]
        d = U[i + 1, j1]
        U[i, j0] = _clip(_f(c, d + D[i, j1], exact), sat)
        U[i, j1] = _clip(_f(c, D[i, j0], exact) + d, sat)
    for k in range(qs.size):
        U[i, qs[k]] = U[i + 1, qs[k]]


@njit(cache=True)
def _down_stage(U, D, i, pu, pl, qs, exact, sat):
    for k in range(pu.size):
        j0 = pu[k]
        j1 = pl[k]
        a = D[i, j0]
        b = D[i, j1]
        D[i + 1, j0] = _clip(_f(a, b + U[i + 1, j1], exact), sat)
        D[i + 1, j1] = _clip(_f(a, U[i + 1, j0], exact) + b, sat)
    for k in range(qs.size):
        D[i + 1, qs[k]] = D[i, qs[k]]


@njit(cache=True)
def _app_layer(U, D, L, sub_off, sub_len, cb_ptr, cb_bits, exact, sat, metric):
    for s in range(sub_off.size):
        o = sub_off[s]
        ell = sub_len[s]
        r0 = cb_ptr[s]
        r1 = cb_ptr[s + 1]
        for r in range(r0, r1):
            acc = 0.0
            for q in range(ell):
                if cb_bits[r, q]:
                    acc -= D[L, o + q]
                else:
                    acc += D[L, o + q]
            metric[r - r0] = 0.5 * acc
        for p in range(ell):
            m0 = -np.inf
            m1 = -np.inf
            for r in range(r0, r1):
                v = metric[r - r0]
                if cb_bits[r, p]:
                    if v > m1:
                        m1 = v
                else:
                    if v > m0:
                        m0 = v
            if m1 == -np.inf:
                U[L, o + p] = sat
                continue
            if exact:
                s0 = 0.0
                s1 = 0.0
                for r in range(r0, r1):
                    v = metric[r - r0]
                    if cb_bits[r, p]:
                        s1 += math.exp(v - m1)
                    else:
                        s0 += math.exp(v - m0)
                l0 = m0 + math.log(s0)
                l1 = m1 + math.log(s1)
            else:
                l0 = m0
                l1 = m1
            U[L, o + p] = _clip(l0 - l1 - D[L, o + p], sat)


@njit(cache=True)
def _check(U, D, B, L, pptr, pu, pl, qptr, qs, sub_off, sub_len, mem_ptr, mem):
    for i in range(L + 1):
        for j in range(U.shape[1]):
            B[i, j] = 1 if D[i, j] + U[i, j] <= 0.0 else 0
    for i in range(L):
        for k in range(pptr[i], pptr[i + 1]):
            j0 = pu[k]
            j1 = pl[k]
            if B[i, j1] != B[i + 1, j1] or B[i, j0] != (B[i + 1, j0] ^ B[i + 1, j1]):
                return False
        for k in range(qptr[i], qptr[i + 1]):
            if B[i, qs[k]] != B[i + 1, qs[k]]:
                return False
    for s in range(sub_off.size):
        o = sub_off[s]
        idx = 0
        for q in range(sub_len[s]):
            idx |= np.int64(B[L, o + q]) << q
        if not mem[mem_ptr[s] + idx]:
            return False
    return True


@njit(cache=True)
def _bp_frame(llr, U, D, B, U_init, L, tau, pptr, pu, pl, qptr, qs,
              sub_off, sub_len, cb_ptr, cb_bits, mem_ptr, mem, imax, early, exact, sat, metric):
    U[:, :] = 0.0
    D[:, :] = 0.0
    for j in range(llr.size):
        D[0, j] = _clip(llr[j], sat)
    for i in range(L, U.shape[0]):
        for j in range(U.shape[1]):
            U[i, j] = U_init[i, j]
    it = 0
    ok = False
    while it < imax:
        it += 1
        for i in range(L - 1, -1, -1):
            _up_stage(U, D, i, pu[pptr[i]:pptr[i + 1]], pl[pptr[i]:pptr[i + 1]],
                      qs[qptr[i]:qptr[i + 1]], exact, sat)
        for i in range(L):
            _down_stage(U, D, i, pu[pptr[i]:pptr[i + 1]], pl[pptr[i]:pptr[i + 1]],
                        qs[qptr[i]:qptr[i + 1]], exact, sat)
        if tau > 0:
            _app_layer(U, D, L, sub_off, sub_len, cb_ptr, cb_bits, exact, sat, metric)
        ok = _check(U, D, B, L, pptr, pu, pl, qptr, qs, sub_off, sub_len, mem_ptr, mem)
        if ok and early:
            break
    return it, ok


@njit(cache=True, nogil=True)
def _bp_batch(llrs, U_init, L, tau, pptr, pu, pl, qptr, qs,
              sub_off, sub_len, cb_ptr, cb_bits, mem_ptr, mem, imax, early, exact, sat, max_rows):
    F, N = llrs.shape
    layers = U_init.shape[0]
    U = np.zeros((layers, N))
    D = np.zeros((layers, N))
    B = np.zeros((layers, N), dtype=np.uint8)
    metric = np.zeros(max_rows)
    out = np.zeros((F, N), dtype=np.uint8)
    iters = np.zeros(F, dtype=np.int64)
    conv = np.zeros(F, dtype=np.bool_)
    for f in range(F):
        it, ok = _bp_frame(llrs[f], U, D, B, U_init, L, tau, pptr, pu, pl, qptr, qs,
                           sub_off, sub_len, cb_ptr, cb_bits, mem_ptr, mem, imax, early, exact,
                           sat, metric)
        for j in range(N):
            out[f, j] = B[0, j]
        iters[f] = it
        conv[f] = ok
    return out, iters, conv


# --------------------------------------------------------------------------- decoder


class BpDecoder:
    """Precomputed sub-graph, codebooks and per-iteration operation counts."""

    def __init__(self, spec: CodeSpec, config: BpConfig, graph: NormalGraph | None = None):
        self.spec = spec
        self.config = config
        self.graph = graph if graph is not None else spec.graph
        g = self.graph
        if g.width != spec.block_length:
            raise ValueError("graph and spec lengths differ")
        n = g.depth
        lmax = min(config.max_leaf_subcode, spec.block_length)
        if config.force_tau is None:
            self.tau, self.subcodes = derive_truncation(g, lmax)
        else:
            self.tau = config.force_tau
            self.subcodes = [(nd, (o, ell)) for nd, o, ell in g.spans_at(n - self.tau)]
        self.L = n - self.tau

        st = g.stages[: self.L]
        self._pptr = np.cumsum([0] + [s.upper.size for s in st]).astype(np.int64)
        self._pu = np.concatenate([s.upper for s in st] + [np.zeros(0, np.int64)]).astype(np.int64)
        self._pl = np.concatenate([s.lower for s in st] + [np.zeros(0, np.int64)]).astype(np.int64)
        self._qptr = np.cumsum([0] + [s.passthrough.size for s in st]).astype(np.int64)
        self._qs = np.concatenate([s.passthrough for s in st] + [np.zeros(0, np.int64)]).astype(np.int64)

        books = [subcode_codebook(spec, g, self.L, o, ell) for _, (o, ell) in self.subcodes]
        self.codebooks = books
        width = max(ell for _, (_, ell) in self.subcodes)
        self._sub_off = np.array([o for _, (o, _) in self.subcodes], dtype=np.int64)
        self._sub_len = np.array([ell for _, (_, ell) in self.subcodes], dtype=np.int64)
        self._cb_ptr = np.cumsum([0] + [b.shape[0] for b in books]).astype(np.int64)
        cb = np.zeros((int(self._cb_ptr[-1]), width), dtype=np.uint8)
        for b, r in zip(books, self._cb_ptr[:-1]):
            cb[r:r + b.shape[0], : b.shape[1]] = b
        self._cb_bits = cb
        self._max_rows = max(b.shape[0] for b in books)
        mems = []
        for b in books:
            table = np.zeros(1 << b.shape[1], dtype=np.bool_)
            table[(b.astype(np.int64) << np.arange(b.shape[1])).sum(axis=1)] = True
            mems.append(table)
        self._mem_ptr = np.cumsum([0] + [m.size for m in mems]).astype(np.int64)
        self._mem = np.concatenate(mems)
        self._U_init = self._initial_up()

    def _initial_up(self) -> np.ndarray:
        """Frozen priors at layer n swept up to layer n - tau with all ``D = 0``."""
        g = self.graph
        n, N = g.depth, g.width
        U = np.zeros((n + 1, N))
        D = np.zeros((n + 1, N))
        U[n, ~self.spec.active_mask] = MSG_SAT
        exact = self.config.f_mode == "exact"
        for i in range(n - 1, self.L - 1, -1):
            s = g.stages[i]
            _up_stage(U, D, i, s.upper, s.lower, s.passthrough, exact, MSG_SAT)
        return U

    @cached_property
    def per_iteration(self) -> DecodeMetrics:
        """Operation counts for one iteration (identical for every frame).

        Each butterfly performs 2 f evaluations and 2 additions per direction.
        An f evaluation is ``sign(a) sign(b) min(|a|, |b|)`` (1 multiplication,
        1 comparison) plus, in exact mode, one LUT read for the correction.
        An APP module costs ``M * l`` additions for the codeword correlations.
        Each two-term max-star merge is ``x + lut(y - x)`` in exact mode
        (2 additions, 1 LUT read) and one comparison in max-log mode; each
        extrinsic output costs 2 additions.  The 1/2 scale is a shift.
        """
        exact = self.config.f_mode == "exact"
        n_f = 4 * int(self._pu.size)
        m = DecodeMetrics(iterations_used=1, layers_traversed=self.L + 1)
        m.adds = n_f
        m.mults = n_f
        m.comparisons = n_f
        m.lut_accesses = n_f if exact else 0
        if self.tau > 0:
            for book in self.codebooks:
                M, ell = book.shape
                m.adds += M * ell
                for p in range(ell):
                    ones = int(book[:, p].sum())
                    merges = max(M - ones - 1, 0) + max(ones - 1, 0)
                    if exact:
                        m.adds += 2 * merges
                        m.lut_accesses += merges
                    else:
                        m.comparisons += merges
                    if ones > 0:
                        m.adds += 2
        return m

    def _kernel_args(self):
        c = self.config
        return (self._U_init, self.L, self.tau, self._pptr, self._pu, self._pl, self._qptr, self._qs,
                self._sub_off, self._sub_len, self._cb_ptr, self._cb_bits, self._mem_ptr, self._mem,
                c.max_iterations, c.early_stop, c.f_mode == "exact", MSG_SAT)

    def decode_batch(self, llrs):
        """Returns ``(codewords, messages, iterations, converged)`` for ``(F, N)`` LLRs."""
        llrs = np.ascontiguousarray(np.atleast_2d(llrs), dtype=np.float64)
        if llrs.shape[1] != self.spec.block_length:
            raise ValueError(f"expected {self.spec.block_length} LLRs per frame, got {llrs.shape[1]}")
        cw, iters, conv = _bp_batch(llrs, *self._kernel_args(), self._max_rows)
        msgs = inverse_transform(cw, self.graph)[:, self.spec.active_mask]
        return cw, msgs, iters, conv

    def decode(self, llr):
        """One frame, also returning the final message lattices."""
        llr = np.asarray(llr, dtype=np.float64)
        if llr.ndim != 1 or llr.size != self.spec.block_length:
            raise ValueError(f"expected {self.spec.block_length} channel LLRs, got shape {llr.shape}")
        layers, N = self.graph.layers, self.graph.width
        U = np.zeros((layers, N))
        D = np.zeros((layers, N))
        B = np.zeros((layers, N), dtype=np.uint8)
        it, ok = _bp_frame(llr, U, D, B, *self._kernel_args(), np.zeros(self._max_rows))
        cw = B[0].copy()
        msg = inverse_transform(cw, self.graph)[self.spec.active_mask]
        metrics = self.per_iteration.scaled(it)
        return cw, msg, metrics, bool(ok), MessageState(U, D)


def bp_decode(spec: CodeSpec, graph: NormalGraph, config: BpConfig, channel_llrs):
    """Decode one frame: ``(codeword, message, metrics, converged)``."""
    cw, msg, metrics, ok, _ = BpDecoder(spec, config, graph).decode(channel_llrs)
    return cw, msg, metrics, ok


def check_constraints(spec: CodeSpec, graph: NormalGraph, decisions, tau: int = 0) -> bool:
    """Parity / equality constraints of layers ``0..n-tau`` plus subcode membership."""
    B = np.asarray(decisions, dtype=np.uint8)
    L = graph.depth - tau
    for st in graph.stages[:L]:
        i = st.layer
        if np.any(B[i, st.lower] != B[i + 1, st.lower]):
            return False
        if np.any(B[i, st.upper] != (B[i + 1, st.upper] ^ B[i + 1, st.lower])):
            return False
        if np.any(B[i, st.passthrough] != B[i + 1, st.passthrough]):
            return False
    for nd, o, ell in graph.spans_at(L):
        book = subcode_codebook(spec, graph, L, o, ell)
        if not np.any(np.all(book == B[L, o:o + ell], axis=1)):
            return False
    return True


def full_graph_bp(spec: CodeSpec, graph: NormalGraph, channel_llrs, max_iterations: int,
                  f_mode: str = "exact"):
    """Plain flooding-by-layer BP over all ``n + 1`` layers (no APP modules).

    A direct NumPy rendering of the textbook schedule, kept separate from the
    compiled sub-graph decoder so the two can be compared.  Returns
    ``(codeword, iterations, converged, MessageState)``.
    """
    from .codec import f_llr

    n, N = graph.depth, graph.width
    U = np.zeros((n + 1, N))
    D = np.zeros((n + 1, N))
    D[0] = np.clip(channel_llrs, -MSG_SAT, MSG_SAT)
    U[n, ~spec.active_mask] = MSG_SAT
    clip = lambda x: np.clip(x, -MSG_SAT, MSG_SAT)  # noqa: E731
    B = np.zeros((n + 1, N), dtype=np.uint8)
    ok = False
    it = 0
    for it in range(1, max_iterations + 1):
        for st in reversed(graph.stages):
            i, a, b = st.layer, st.upper, st.lower
            c, d = U[i + 1, a], U[i + 1, b]
            U[i, a] = clip(f_llr(c, d + D[i, b], f_mode))
            U[i, b] = clip(f_llr(c, D[i, a], f_mode) + d)
            U[i, st.passthrough] = U[i + 1, st.passthrough]
        for st in graph.stages:
            i, a, b = st.layer, st.upper, st.lower
            x, y = D[i, a], D[i, b]
            D[i + 1, a] = clip(f_llr(x, y + U[i + 1, b], f_mode))
            D[i + 1, b] = clip(f_llr(x, U[i + 1, a], f_mode) + y)
            D[i + 1, st.passthrough] = D[i, st.passthrough]
        B = ((D + U) <= 0).astype(np.uint8)
        ok = check_constraints(spec, graph, B)
        if ok:
            break
    return B[0].copy(), it, ok, MessageState(U, D)
