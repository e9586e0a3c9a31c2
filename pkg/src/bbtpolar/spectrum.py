"""Weight enumerators of BBT codes: ensemble estimates, MHW recursion, brute force.

A composite word is ``(v* ^ pi(v_pad), v)`` with ``v*`` of length ``l*`` from
the left code, ``v`` of length ``l° <= l*`` from the right code, ``v_pad``
the right word zero-padded to ``l*`` and ``pi`` a uniform permutation.  For
fixed weights ``u = wt(v*)`` and ``i = wt(v)``, the number ``m`` of ones of
``pi(v_pad)`` that land outside the support of ``v*`` is hypergeometric::

    P(m) = C(u, i - m) C(l* - u, m) / C(l*, i)

and the composite weight is ``u + 2m`` (left half ``u - i + 2m``, plus ``i``
on the right).  Averaging over ``pi`` gives

    A_w = sum_i sum_m A°_i A*_{w-2m} C(w-2m, i-m) C(l*-w+2m, m) / C(l*, i).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .codec import CodeSpec, generator_matrix
from .tree import NodeId

BRUTE_FORCE_MAX_K = 24


@dataclass(frozen=True)
class Wef:
    """``coeffs[w] = A_w``; float64 for estimates, ``object`` dtype for exact values."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("WEF needs at least the A_0 coefficient")
        object.__setattr__(self, "coeffs", c)

    @property
    def length(self) -> int:
        return self.coeffs.size - 1

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    @property
    def total(self):
        return sum(self.coeffs) if self.exact else math.fsum(self.coeffs)

    def as_float(self) -> np.ndarray:
        return np.array([float(a) for a in self.coeffs], dtype=float)

    def nonzero_min_weight(self) -> int | None:
        nz = [w for w in range(1, self.length + 1) if self.coeffs[w] != 0]
        return nz[0] if nz else None

    @classmethod
    def leaf(cls, active: bool, exact: bool = False) -> "Wef":
        vals = [1, 1] if active else [1, 0]
        if exact:
            return cls(np.array([Fraction(v) for v in vals], dtype=object))
        return cls(np.array(vals, dtype=float))


def _lncomb(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def compose_wef(left: Wef, right: Wef) -> Wef:
    """Average WEF of the composite ensemble (exact if both inputs are exact)."""
    ls, lo = left.length, right.length
    if ls < lo:
        raise ValueError(f"left length {ls} must be >= right length {lo}")
    if left.exact and right.exact:
        return _compose_exact(left, right)
    Aa = left.as_float()
    Ab = right.as_float()
    out = np.zeros(ls + lo + 1)
    u = np.arange(ls + 1)
    for i in range(lo + 1):
        if Ab[i] == 0:
            continue
        # overlap o = i - m ones of pi(v_pad) hit supp(v*); m in [0, i]
        m = np.arange(i + 1)
        U, M = np.meshgrid(u, m, indexing="ij")
        ok = (i - M <= U) & (M <= ls - U)
        lp = np.where(ok, _lncomb(U, np.clip(i - M, 0, None)) + _lncomb(ls - U, np.clip(M, 0, None))
                      - _lncomb(ls, i), -np.inf)
        w = U + 2 * M
        contrib = Ab[i] * Aa[U] * np.exp(lp)
        np.add.at(out, w[ok], contrib[ok])
    return Wef(out)


def _compose_exact(left: Wef, right: Wef) -> Wef:
    ls, lo = left.length, right.length
    out = [Fraction(0)] * (ls + lo + 1)
    for i in range(lo + 1):
        if right.coeffs[i] == 0:
            continue
        denom = math.comb(ls, i)
        for u in range(ls + 1):
            if left.coeffs[u] == 0:
                continue
            for m in range(max(0, i - u), min(i, ls - u) + 1):
                p = Fraction(math.comb(u, i - m) * math.comb(ls - u, m), denom)
                out[u + 2 * m] += right.coeffs[i] * left.coeffs[u] * p
    return Wef(np.array(out, dtype=object))


def node_wefs(spec: CodeSpec, exact: bool = False) -> dict[NodeId, Wef]:
    """Bottom-up WEF estimates for every tree node."""
    tree = spec.graph.tree
    wefs: dict[NodeId, Wef] = {}
    for idx, leaf in enumerate(tree.leaf_order):
        wefs[leaf] = Wef.leaf(bool(spec.active_mask[idx]), exact)
    for nd in tree.internal_nodes(bottom_up=True):
        left, right = tree.children_of(nd)
        wefs[nd] = compose_wef(wefs[left], wefs[right])
    return wefs


def estimate_wef(spec: CodeSpec, exact: bool = False) -> Wef:
    return node_wefs(spec, exact)[spec.graph.tree.root]


# --------------------------------------------------------------------------- MHW


@dataclass(frozen=True)
class MhwRecord:
    is_non_zero: bool
    w_min: int | None = None
    multiplicity: int | None = None

    def __post_init__(self):
        if self.is_non_zero and (self.w_min is None or self.w_min < 1 or not self.multiplicity):
            raise ValueError("non-zero record needs w_min >= 1 and multiplicity >= 1")
        if not self.is_non_zero and (self.w_min is not None or self.multiplicity is not None):
            raise ValueError("zero-only record carries no weight")


def mhw_node_records(spec: CodeSpec) -> dict[NodeId, MhwRecord]:
    """The recursion, node by node, applied literally."""
    tree = spec.graph.tree
    rec: dict[NodeId, MhwRecord] = {}
    for idx, leaf in enumerate(tree.leaf_order):
        rec[leaf] = MhwRecord(True, 1, 1) if spec.active_mask[idx] else MhwRecord(False)
    for nd in tree.internal_nodes(bottom_up=True):
        l, r = (rec[c] for c in tree.children_of(nd))
        if not l.is_non_zero and not r.is_non_zero:
            rec[nd] = MhwRecord(False)
        elif l.is_non_zero and not r.is_non_zero:
            rec[nd] = MhwRecord(True, l.w_min, l.multiplicity)
        elif not l.is_non_zero:
            rec[nd] = MhwRecord(True, 2 * r.w_min, r.multiplicity)
        else:
            w = max(l.w_min, 2 * r.w_min - l.w_min)
            mult = l.multiplicity * r.multiplicity
            if l.w_min == r.w_min:
                mult *= 2
            rec[nd] = MhwRecord(True, w, mult)
    return rec


def mhw_spectrum(spec: CodeSpec) -> MhwRecord:
    return mhw_node_records(spec)[spec.graph.tree.root]


# --------------------------------------------------------------------------- oracles


def codeword_weights(G: np.ndarray, chunk_bits: int = 16) -> np.ndarray:
    """Histogram of Hamming weights over all ``2^k`` combinations of the rows of ``G``."""
    G = np.asarray(G, dtype=np.uint8)
    k, n = G.shape
    hist = np.zeros(n + 1, dtype=np.int64)
    if k == 0:
        hist[0] = 1
        return hist
    lo_bits = min(k, chunk_bits)
    msgs = ((np.arange(1 << lo_bits)[:, None] >> np.arange(lo_bits)) & 1).astype(np.uint8)
    low = (msgs @ G[:lo_bits].astype(np.int64)) & 1
    for hi in range(1 << (k - lo_bits)):
        hb = ((hi >> np.arange(k - lo_bits)) & 1).astype(np.int64)
        offset = (hb @ G[lo_bits:].astype(np.int64)) & 1 if k > lo_bits else np.zeros(n, np.int64)
        words = low ^ offset
        hist += np.bincount(words.sum(axis=1), minlength=n + 1)
    return hist


def brute_force_wef(spec: CodeSpec) -> Wef:
    """Exact integer WEF of one concrete code by enumeration."""
    if spec.dimension > BRUTE_FORCE_MAX_K:
        raise ValueError(f"enumeration limited to K <= {BRUTE_FORCE_MAX_K}, got {spec.dimension}")
    hist = codeword_weights(generator_matrix(spec, restricted=True))
    return Wef(np.array([Fraction(int(h)) for h in hist], dtype=object))


def composite_codebook(left_words: np.ndarray, right_words: np.ndarray, perm) -> np.ndarray:
    """All words ``(a ^ pi(b_pad), b)`` for one permutation ``pi`` of the left length."""
    L = np.atleast_2d(np.asarray(left_words, dtype=np.uint8))
    R = np.atleast_2d(np.asarray(right_words, dtype=np.uint8))
    ls, lo = L.shape[1], R.shape[1]
    pad = np.zeros((R.shape[0], ls), dtype=np.uint8)
    pad[:, :lo] = R
    moved = pad[:, np.asarray(perm)]
    top = L[:, None, :] ^ moved[None, :, :]
    right = np.broadcast_to(R[None, :, :], (L.shape[0], R.shape[0], lo))
    return np.concatenate([top, right], axis=2).reshape(-1, ls + lo)


def exhaustive_permutation_wef(left_words, right_words) -> Wef:
    """Exact average of the composite WEF over all ``l*!`` permutations."""
    L = np.atleast_2d(np.asarray(left_words, dtype=np.uint8))
    ls = L.shape[1]
    lo = np.atleast_2d(right_words).shape[1]
    total = np.zeros(ls + lo + 1, dtype=np.int64)
    count = 0
    for perm in itertools.permutations(range(ls)):
        words = composite_codebook(L, right_words, perm)
        total += np.bincount(words.sum(axis=1), minlength=ls + lo + 1)
        count += 1
    return Wef(np.array([Fraction(int(t), count) for t in total], dtype=object))


def wef_of_words(words) -> Wef:
    W = np.atleast_2d(np.asarray(words, dtype=np.uint8))
    hist = np.bincount(W.sum(axis=1), minlength=W.shape[1] + 1)
    return Wef(np.array([Fraction(int(h)) for h in hist], dtype=object))


def sampled_ensemble_wef(spec: CodeSpec, samples: int, rng: np.random.Generator,
                         chunk: int = 5000) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo mean and standard error of the WEF over random interleavers.

    Every internal node draws its own uniform permutation (NumPy generator,
    independent of the SplitMix interleavers used by the codec); the composite
    codebook is rebuilt per sample and its weights are histogrammed.
    """
    tree = spec.graph.tree
    N = spec.block_length
    s1 = np.zeros(N + 1)
    s2 = np.zeros(N + 1)
    done = 0
    while done < samples:
        S = min(chunk, samples - done)
        books: dict[NodeId, np.ndarray] = {}
        for idx, leaf in enumerate(tree.leaf_order):
            base = np.array([[0], [1]] if spec.active_mask[idx] else [[0]], dtype=np.uint8)
            books[leaf] = np.broadcast_to(base, (S,) + base.shape)
        for nd in tree.internal_nodes(bottom_up=True):
            lc, rc = tree.children_of(nd)
            L, R = books.pop(lc), books.pop(rc)
            ls, lo = L.shape[2], R.shape[2]
            perms = np.argsort(rng.random((S, ls)), axis=1)
            pad = np.zeros(R.shape[:2] + (ls,), dtype=np.uint8)
            pad[:, :, :lo] = R
            moved = np.take_along_axis(pad, perms[:, None, :], axis=2)
            top = L[:, :, None, :] ^ moved[:, None, :, :]
            rr = np.broadcast_to(R[:, None, :, :], (S, L.shape[1], R.shape[1], lo))
            books[nd] = np.concatenate([top, rr], axis=3).reshape(S, -1, ls + lo)
        W = books[tree.root].sum(axis=2)
        hist = np.stack([np.bincount(row, minlength=N + 1) for row in W]).astype(float)
        s1 += hist.sum(axis=0)
        s2 += (hist ** 2).sum(axis=0)
        done += S
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean ** 2, 0.0) * samples / max(samples - 1, 1)
    return mean, np.sqrt(var / samples)
