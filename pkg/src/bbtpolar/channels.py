"""Binary-input memoryless symmetric channels under the ``*`` / ``o`` transforms.

BEC values stay in closed form.  Everything else is a :class:`DiscreteBms`
holding ``W(y|0)`` plus an output involution ``conj`` with
``W(y|1) = W(conj(y)|0)``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .tree import BbtTree, build_normal_graph

DEFAULT_MAX_OUTPUTS = 64


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by the channel code and its checks."""

    row_sum: float = 1e-12
    conservation: float = 1e-9
    lr_merge: float = 1e-12
    stats_sum: float = 1e-12


TOL = Tolerances()


@dataclass(frozen=True)
class BEC:
    erasure: float

    def __post_init__(self):
        if not 0.0 <= self.erasure <= 1.0:
            raise ValueError(f"erasure probability out of range: {self.erasure}")


@dataclass(frozen=True)
class BSC:
    crossover: float

    def __post_init__(self):
        if not 0.0 <= self.crossover <= 0.5:
            raise ValueError(f"crossover probability out of range: {self.crossover}")


@dataclass(frozen=True, eq=False)
class DiscreteBms:
    w0: np.ndarray
    conj: np.ndarray

    def __post_init__(self):
        w0 = np.asarray(self.w0, dtype=float)
        conj = np.asarray(self.conj, dtype=np.int64)
        if w0.ndim != 1 or conj.shape != w0.shape:
            raise ValueError("w0 and conj must be 1-D of equal length")
        if np.any(w0 < 0) or abs(w0.sum() - 1.0) > 1e-9:
            raise ValueError("W(.|0) must be a probability vector")
        if np.any(conj[conj] != np.arange(conj.size)):
            raise ValueError("conj must be an involution")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "conj", conj)

    @property
    def w1(self) -> np.ndarray:
        return self.w0[self.conj]

    @property
    def num_outputs(self) -> int:
        return self.w0.size

    def table(self) -> np.ndarray:
        """The 2 x |Y| transition matrix."""
        return np.vstack([self.w0, self.w1])


BmsChannel = Union[BEC, BSC, DiscreteBms]


def as_discrete(W: BmsChannel) -> DiscreteBms:
    if isinstance(W, DiscreteBms):
        return W
    if isinstance(W, BEC):
        e = W.erasure
        return DiscreteBms(np.array([1 - e, e, 0.0]), np.array([2, 1, 0]))
    if isinstance(W, BSC):
        p = W.crossover
        return DiscreteBms(np.array([1 - p, p]), np.array([1, 0]))
    raise TypeError(f"not a BMS channel: {W!r}")


def num_outputs(W: BmsChannel) -> int:
    return as_discrete(W).num_outputs


def star(W0: BmsChannel, W1: BmsChannel) -> BmsChannel:
    """Upper channel: output ``(y0, y1)``, input ``x0``."""
    if isinstance(W0, BEC) and isinstance(W1, BEC):
        e0, e1 = W0.erasure, W1.erasure
        return BEC(e0 + e1 - e0 * e1)
    A, B = as_discrete(W0), as_discrete(W1)
    # W(y0,y1|0) = 1/2 [A(y0|0) B(y1|0) + A(y0|1) B(y1|1)]
    w0 = 0.5 * (np.outer(A.w0, B.w0) + np.outer(A.w1, B.w1))
    nb = B.num_outputs
    conj = (A.conj[:, None] * nb + np.arange(nb)[None, :]).ravel()
    return DiscreteBms(w0.ravel(), conj)


def circle(W0: BmsChannel, W1: BmsChannel) -> BmsChannel:
    """Lower channel: output ``(y0, y1, x0)``, input ``x1``."""
    if isinstance(W0, BEC) and isinstance(W1, BEC):
        return BEC(W0.erasure * W1.erasure)
    A, B = as_discrete(W0), as_discrete(W1)
    na, nb = A.num_outputs, B.num_outputs
    # W(y0,y1,x0|0) = 1/2 A(y0|x0) B(y1|0)
    w0 = np.empty((na, nb, 2))
    w0[:, :, 0] = 0.5 * np.outer(A.w0, B.w0)
    w0[:, :, 1] = 0.5 * np.outer(A.w1, B.w0)
    ia, ib, ix = np.meshgrid(np.arange(na), np.arange(nb), np.arange(2), indexing="ij")
    conj = (A.conj[ia] * nb + B.conj[ib]) * 2 + ix
    return DiscreteBms(w0.ravel(), conj.ravel())


def _h2(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log1p(-p)) / math.log(2)


def _pair_capacity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Capacity carried by outputs ``y`` with ``W(y|0)=a, W(y|1)=b`` (bits).

    Sums the uniform-input mutual-information terms of ``y``; natural-log
    internals, converted at the end.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(a > 0, a * np.log(2 * a / s), 0.0)
        tb = np.where(b > 0, b * np.log(2 * b / s), 0.0)
    return 0.5 * (ta + tb) / math.log(2)


def capacity(W: BmsChannel) -> float:
    if isinstance(W, BEC):
        return 1.0 - W.erasure
    if isinstance(W, BSC):
        return 1.0 - _h2(W.crossover)
    return float(math.fsum(_pair_capacity(W.w0, W.w1)))


# --------------------------------------------------------------------------- quantization


def _pcap(a: float, b: float) -> float:
    """Capacity (bits) carried jointly by an output and its conjugate."""
    s = a + b
    t = 0.0
    if a > 0:
        t += a * math.log(2 * a / s)
    if b > 0:
        t += b * math.log(2 * b / s)
    return t / math.log(2)


def _pair_form(W: DiscreteBms) -> tuple[np.ndarray, np.ndarray]:
    """Collapse conjugate pairs into ``(a, b)`` rows with ``a >= b``.

    A self-conjugate output of mass ``e`` is split into the equivalent pair
    ``(e/2, e/2)``.
    """
    w0, w1, conj = W.w0, W.w1, W.conj
    y = np.arange(W.num_outputs)
    fixed = conj == y
    rep = conj > y
    a = np.maximum(w0[rep], w1[rep])
    b = np.minimum(w0[rep], w1[rep])
    e = w0[fixed].sum()
    if e > 0:
        a = np.append(a, e / 2)
        b = np.append(b, e / 2)
    keep = a + b > 0
    return a[keep], b[keep]


def _from_pairs(a: Sequence[float], b: Sequence[float]) -> DiscreteBms:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sym = a == b
    erasure = float(a[sym].sum() + b[sym].sum())
    a, b = a[~sym], b[~sym]
    m = a.size
    w0 = np.concatenate([a, b])
    conj = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
    if erasure > 0:
        w0 = np.append(w0, erasure)
        conj = np.append(conj, 2 * m)
    return DiscreteBms(w0 / w0.sum(), conj)


def quantize(W: BmsChannel, max_outputs: int = DEFAULT_MAX_OUTPUTS) -> BmsChannel:
    """Degrading merge down to at most ``max_outputs`` outputs.

    Outputs are grouped into conjugate pairs and sorted by likelihood ratio.
    Pairs with equal ratio are merged first (lossless); after that the
    adjacent pair whose merge loses the least capacity is merged, repeatedly.
    Merging pair ``y`` with ``y'`` also merges ``conj(y)`` with ``conj(y')``,
    so the result stays symmetric.
    """
    if max_outputs < 2:
        raise ValueError("max_outputs must be >= 2")
    if isinstance(W, BEC) or num_outputs(W) <= max_outputs:
        return W
    a, b = _pair_form(as_discrete(W))
    budget = max_outputs // 2
    with np.errstate(divide="ignore"):
        llr = np.where(b > 0, np.log(a) - np.log(np.where(b > 0, b, 1.0)), np.inf)
    order = np.argsort(-llr, kind="stable")
    a, b, llr = a[order], b[order], llr[order]

    # lossless merge of equal-ratio pairs
    A, B = [float(a[0])], [float(b[0])]
    last = llr[0]
    for k in range(1, a.size):
        if llr[k] == last or abs(llr[k] - last) <= TOL.lr_merge:
            A[-1] += a[k]
            B[-1] += b[k]
        else:
            A.append(float(a[k]))
            B.append(float(b[k]))
            last = llr[k]
    m = len(A)
    if m <= budget:
        return _from_pairs(A, B)

    # greedy adjacent merges with a lazy heap over a linked list
    cap = [_pcap(A[k], B[k]) for k in range(m)]
    nxt = list(range(1, m)) + [-1]
    prv = [-1] + list(range(m - 1))
    alive = [True] * m
    version = [0] * m

    def loss(k: int) -> float:
        j = nxt[k]
        return cap[k] + cap[j] - _pcap(A[k] + A[j], B[k] + B[j])

    heap = [(loss(k), k, 0) for k in range(m - 1)]
    heapq.heapify(heap)
    count = m
    while count > budget:
        _, k, ver = heapq.heappop(heap)
        if not alive[k] or ver != version[k] or nxt[k] < 0:
            continue
        j = nxt[k]
        A[k] += A[j]
        B[k] += B[j]
        cap[k] = _pcap(A[k], B[k])
        alive[j] = False
        nxt[k] = nxt[j]
        if nxt[j] >= 0:
            prv[nxt[j]] = k
        count -= 1
        version[k] += 1
        if nxt[k] >= 0:
            heapq.heappush(heap, (loss(k), k, version[k]))
        p = prv[k]
        if p >= 0:
            version[p] += 1
            heapq.heappush(heap, (loss(p), p, version[p]))
    keep = [k for k in range(m) if alive[k]]
    return _from_pairs([A[k] for k in keep], [B[k] for k in keep])


# --------------------------------------------------------------------------- BBT transform


def layer_channels(
    W: BmsChannel, tree: BbtTree, max_outputs: int = DEFAULT_MAX_OUTPUTS
) -> list[list[BmsChannel]]:
    """Channel sequences on every layer, root (layer 0) to leaves (layer n).

    Pairs follow the identity-interleaver graph: for each parent the
    ``i``-th and ``(ceil(l/2)+i)``-th channels combine, ``*`` going left and
    ``o`` going right; the odd middle channel passes through.  Each layer is
    quantized once it is complete.
    """
    graph = build_normal_graph(tree)
    cur: list[BmsChannel] = [W] * tree.block_length
    out = [cur]
    cache: dict[tuple[int, int, str], BmsChannel] = {}
    for st in graph.stages:
        nxt = list(cur)
        for j0, j1 in zip(st.upper, st.lower):
            A, B = cur[j0], cur[j1]
            key = (id(A), id(B))
            if key + ("*",) not in cache:
                cache[key + ("*",)] = quantize(star(A, B), max_outputs)
                cache[key + ("o",)] = quantize(circle(A, B), max_outputs)
            nxt[j0] = cache[key + ("*",)]
            nxt[j1] = cache[key + ("o",)]
        cur = nxt
        out.append(cur)
    return out


def transform_leaf_channels(
    W: BmsChannel, tree: BbtTree, max_outputs: int = DEFAULT_MAX_OUTPUTS
) -> list[BmsChannel]:
    return layer_channels(W, tree, max_outputs)[-1]


@dataclass(frozen=True)
class PolarizationStats:
    a: float
    b: float
    psi: float
    omega: float
    phi: float
    mu: float
    nu: float


def polarization_stats(channels: Sequence[BmsChannel], a: float, b: float) -> PolarizationStats:
    """Bad / mediocre / good fractions and the first two capacity moments.

    Classes are ``I < a``, ``a <= I < b`` and ``I >= b`` so the three
    fractions partition the set.
    """
    if not 0 < a < b < 1:
        raise ValueError(f"need 0 < a < b < 1, got a={a}, b={b}")
    caps = np.array([capacity(W) for W in channels], dtype=float)
    return stats_from_capacities(caps, a, b)


def stats_from_capacities(caps: np.ndarray, a: float, b: float) -> PolarizationStats:
    if not 0 < a < b < 1:
        raise ValueError(f"need 0 < a < b < 1, got a={a}, b={b}")
    caps = np.asarray(caps, dtype=float)
    N = caps.size
    n_bad = int(np.count_nonzero(caps < a))
    n_mid = int(np.count_nonzero((caps >= a) & (caps < b)))
    n_good = N - n_bad - n_mid
    return PolarizationStats(
        a,
        b,
        n_bad / N,
        n_mid / N,
        n_good / N,
        math.fsum(caps) / N,
        math.fsum(caps * caps) / N,
    )


def parse_channel(text: str) -> tuple[str, float]:
    """Parse a literal such as ``bec:0.5``, ``bsc:0.1`` or ``awgn:1``."""
    kind, _, value = text.partition(":")
    kind = kind.strip().lower()
    if kind not in {"bec", "bsc", "awgn"} or not value:
        raise ValueError(f"bad channel literal {text!r}; expected bec:<e>, bsc:<p> or awgn:<snr_db>")
    return kind, float(value)


def channel_from_literal(text: str) -> BmsChannel:
    kind, value = parse_channel(text)
    if kind == "bec":
        return BEC(value)
    if kind == "bsc":
        return BSC(value)
    raise ValueError("awgn channels are only available to the Monte-Carlo harness")
