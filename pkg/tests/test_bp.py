import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bbtpolar.bp import (
    MSG_SAT,
    BpConfig,
    BpDecoder,
    app_extrinsic,
    bp_decode,
    check_constraints,
    derive_truncation,
    full_graph_bp,
    subcode_codebook,
)
from bbtpolar.codec import CodeSpec, encode, generator_matrix, gf2_rank, transform

from conftest import random_spec


def awgn_llrs(rng, spec, sigma, frames):
    msgs = rng.integers(0, 2, (frames, spec.dimension))
    cw = encode(spec, msgs)
    y = 1.0 - 2.0 * cw + sigma * rng.standard_normal(cw.shape)
    return msgs, cw, 2 * y / sigma**2


def app_oracle(book, D):
    """Probability-domain extrinsic LLRs, no log-sum-exp tricks."""
    book = np.asarray(book)
    p0 = 1.0 / (1.0 + np.exp(-np.asarray(D)))  # P(c_q = 0)
    like = np.prod(np.where(book == 0, p0, 1 - p0), axis=1)
    out = []
    with np.errstate(divide="ignore"):
        for p in range(book.shape[1]):
            post = np.log(like[book[:, p] == 0].sum()) - np.log(like[book[:, p] == 1].sum())
            out.append(post - D[p])
    return np.array(out)


def random_codebook(rng, ell):
    k = int(rng.integers(1, ell + 1))
    G = rng.integers(0, 2, (k, ell))
    msgs = (np.arange(1 << k)[:, None] >> np.arange(k)) & 1
    return np.unique((msgs @ G) % 2, axis=0)


# --------------------------------------------------------------------------- truncation


def test_truncation_examples():
    g6 = CodeSpec(6, 2, (4, 5)).graph
    assert derive_truncation(g6, 1)[0] == 0
    tau, spans = derive_truncation(g6, 2)
    assert tau == 1  # sub-graph keeps layers 0..2
    assert [span for _, span in spans] == [(0, 2), (2, 1), (3, 2), (5, 1)]
    assert derive_truncation(g6, 6)[0] == 3
    g = CodeSpec(300, 0, ()).graph
    assert derive_truncation(g, 300) == (g.depth, [((0, 0), (0, 300))])


def test_truncation_is_largest_feasible():
    for N in (7, 50, 300, 513):
        g = CodeSpec(N, 0, ()).graph
        for lmax in range(1, 12):
            tau, spans = derive_truncation(g, lmax)
            assert max(ell for _, (_, ell) in spans) <= lmax
            if tau < g.depth:
                assert max(ell for _, _, ell in g.spans_at(g.depth - tau - 1)) > lmax
            assert sum(ell for _, (_, ell) in spans) == N


# --------------------------------------------------------------------------- APP


def test_app_examples():
    assert app_extrinsic([[0], [1]], [2.5]).tolist() == [0.0]
    assert app_extrinsic([[0, 0], [1, 1]], [1.3, -0.4]) == pytest.approx([-0.4, 1.3], abs=1e-12)
    assert app_extrinsic([[0, 0], [0, 1], [1, 0], [1, 1]], [1.0, 2.0]) == pytest.approx([0, 0], abs=1e-12)
    with pytest.raises(ValueError):
        app_extrinsic(np.zeros((0, 2)), [0.0, 0.0])


@given(st.integers(1, 6), st.integers(0, 2**32))
def test_app_matches_probability_oracle(ell, seed):
    rng = np.random.default_rng(seed)
    book = random_codebook(rng, ell)
    D = rng.normal(0, 3, ell)
    want = app_oracle(book, D)
    got = app_extrinsic(book, D)
    finite = np.isfinite(want)
    assert got[finite] == pytest.approx(want[finite], abs=1e-9)
    assert np.array_equal(np.isinf(got), ~finite)


@given(st.integers(1, 6), st.integers(0, 2**32), st.floats(-8, 8))
def test_app_is_extrinsic(ell, seed, delta):
    rng = np.random.default_rng(seed)
    book = random_codebook(rng, ell)
    D = rng.normal(0, 2, ell)
    base = app_extrinsic(book, D)
    for p in range(ell):
        D2 = D.copy()
        D2[p] += delta
        again = app_extrinsic(book, D2)
        if np.isfinite(base[p]):
            assert again[p] == pytest.approx(base[p], abs=1e-9)


def test_compiled_app_layer_matches_reference(rng):
    spec = random_spec(rng, 40, 20, "ibbt")
    dec = BpDecoder(spec, BpConfig(max_iterations=1, max_leaf_subcode=4, early_stop=False))
    _, _, llr = awgn_llrs(rng, spec, 0.9, 1)
    *_, state = dec.decode(llr[0])
    L = dec.L
    for book, (_, (o, ell)) in zip(dec.codebooks, dec.subcodes):
        want = np.clip(app_extrinsic(book, state.down[L, o:o + ell]), -MSG_SAT, MSG_SAT)
        assert state.up[L, o:o + ell] == pytest.approx(want, abs=1e-9)


def test_subcode_codebooks_are_codes(rng):
    spec = random_spec(rng, 23, 12, "ibbt")
    g = spec.graph
    for level in range(g.depth + 1):
        for _, o, ell in g.spans_at(level):
            book = subcode_codebook(spec, g, level, o, ell)
            k = gf2_rank(book) if book.any() else 0
            assert book.shape == (1 << k, ell)
            assert len({tuple(r) for r in book}) == book.shape[0]


# --------------------------------------------------------------------------- constraints


def _layer_bits(spec, codeword):
    """Bits on every layer for a codeword (layer 0 = codeword, layer n = leaf bits)."""
    g = spec.graph
    x = np.array(codeword, dtype=np.uint8)
    rows = [x.copy()]
    for stage in g.stages:
        x = x.copy()
        x[stage.upper] ^= x[stage.lower]
        rows.append(x)
    return np.array(rows)


def test_check_constraints_examples(rng):
    spec = random_spec(rng, 21, 9, "ibbt")
    g = spec.graph
    B = _layer_bits(spec, encode(spec, rng.integers(0, 2, 9)))
    assert check_constraints(spec, g, B)
    assert check_constraints(spec, g, B, tau=2)
    for j in range(21):
        bad = B.copy()
        bad[0, j] ^= 1
        assert not check_constraints(spec, g, bad)
    zero = CodeSpec(21, 0, ())
    assert check_constraints(zero, zero.graph, np.zeros((g.layers, 21), np.uint8))


# --------------------------------------------------------------------------- decoding


@pytest.mark.parametrize("lmax", [1, 2, 3, 4, 8])
def test_noiseless_converges_first_iteration(rng, lmax):
    for flavor in ("bbt", "ibbt"):
        spec = random_spec(rng, 45, 20, flavor)
        m = rng.integers(0, 2, 20)
        c = encode(spec, m)
        cw, msg, metrics, ok = bp_decode(spec, spec.graph, BpConfig(20, lmax), np.where(c == 0, 30.0, -30.0))
        assert ok and metrics.iterations_used == 1
        assert cw.tolist() == c.tolist() and msg.tolist() == m.tolist()


def test_bp_small_code_truncated_roundtrip(small_spec):
    c = np.array([1, 0, 1, 1, 0, 1])
    cw, msg, metrics, ok = bp_decode(small_spec, small_spec.graph, BpConfig(10, 2), np.where(c == 0, 40.0, -40.0))
    assert msg.tolist() == [0, 1] and ok
    assert metrics.layers_traversed == 3


def test_reduction_to_full_graph_bp(rng):
    for flavor in ("bbt", "ibbt"):
        spec = random_spec(rng, 60, 30, flavor)
        dec = BpDecoder(spec, BpConfig(max_iterations=15))
        _, _, llrs = awgn_llrs(rng, spec, 0.85, 50)
        for llr in llrs:
            cw, _, metrics, ok, state = dec.decode(llr)
            ref_cw, ref_it, ref_ok, ref = full_graph_bp(spec, spec.graph, llr, 15)
            assert cw.tolist() == ref_cw.tolist()
            assert (metrics.iterations_used, ok) == (ref_it, ref_ok)
            assert np.abs(state.up - ref.up).max() < 1e-9
            assert np.abs(state.down - ref.down).max() < 1e-9


def test_forced_tau_zero_equals_lmax_one(rng):
    spec = random_spec(rng, 48, 24)
    a = BpDecoder(spec, BpConfig(12, 1))
    b = BpDecoder(spec, BpConfig(12, 5, force_tau=0))
    _, _, llrs = awgn_llrs(rng, spec, 0.8, 100)
    for llr in llrs:
        ca, ma, _, _, sa = a.decode(llr)
        cb, mb, _, _, sb = b.decode(llr)
        assert ma.tolist() == mb.tolist()
        assert np.abs(sa.up - sb.up).max() < 1e-9 and np.abs(sa.down - sb.down).max() < 1e-9


def test_boundary_layers_never_change(rng):
    spec = random_spec(rng, 33, 15, "ibbt")
    dec = BpDecoder(spec, BpConfig(7, 1, early_stop=False))
    _, _, llrs = awgn_llrs(rng, spec, 1.0, 3)
    for llr in llrs:
        *_, state = dec.decode(llr)
        assert state.down[0] == pytest.approx(np.clip(llr, -MSG_SAT, MSG_SAT))
        assert state.up[-1].tolist() == np.where(spec.active_mask, 0.0, MSG_SAT).tolist()


def test_converged_output_is_codeword(rng):
    spec = random_spec(rng, 64, 32, "ibbt")
    G = generator_matrix(spec, restricted=True)
    for lmax in (1, 2, 4):
        dec = BpDecoder(spec, BpConfig(30, lmax))
        _, _, llrs = awgn_llrs(rng, spec, 0.9, 60)
        cws, msgs, iters, conv = dec.decode_batch(llrs)
        assert conv.any()
        for cw, msg, ok in zip(cws, msgs, conv):
            if ok:
                assert cw.tolist() == ((msg.astype(np.int64) @ G) % 2).tolist()
        assert (iters >= 1).all() and (iters <= 30).all()


def test_batch_equals_single(rng):
    spec = random_spec(rng, 30, 14, "ibbt")
    dec = BpDecoder(spec, BpConfig(25, 3))
    _, _, llrs = awgn_llrs(rng, spec, 1.0, 20)
    cws, msgs, iters, conv = dec.decode_batch(llrs)
    for i, llr in enumerate(llrs):
        cw, msg, m, ok, _ = dec.decode(llr)
        assert cw.tolist() == cws[i].tolist() and msg.tolist() == msgs[i].tolist()
        assert (m.iterations_used, ok) == (iters[i], conv[i])


def test_layers_shrink_with_lmax():
    spec = CodeSpec(300, 150, tuple(range(150, 300)), "ibbt", 1)
    per_iter = [BpDecoder(spec, BpConfig(10, lm)).per_iteration for lm in (1, 2, 4, 8)]
    layers = [m.layers_traversed for m in per_iter]
    assert layers == sorted(layers, reverse=True) and len(set(layers)) == 4
    mults = [m.mults for m in per_iter]
    assert mults == sorted(mults, reverse=True)
    for m in per_iter:
        assert min(m.as_tuple()) >= 0


def test_min_sum_mode_runs(rng):
    spec = random_spec(rng, 40, 20)
    dec = BpDecoder(spec, BpConfig(20, 2, f_mode="min_sum"))
    msgs, _, llrs = awgn_llrs(rng, spec, 0.6, 10)
    _, est, _, _ = dec.decode_batch(llrs)
    assert (est == msgs).mean() > 0.9
    assert dec.per_iteration.lut_accesses == 0


def test_dimension_mismatch(small_spec):
    dec = BpDecoder(small_spec, BpConfig())
    with pytest.raises(ValueError):
        dec.decode(np.zeros(5))
    with pytest.raises(ValueError):
        dec.decode_batch(np.zeros((2, 7)))
    with pytest.raises(ValueError):
        BpConfig(max_iterations=0)
    with pytest.raises(ValueError):
        BpConfig(max_leaf_subcode=0)


def test_transform_layers_helper(rng):
    spec = random_spec(rng, 19, 19)
    u = rng.integers(0, 2, 19)
    c = transform(u, spec.graph)
    assert _layer_bits(spec, c)[-1].tolist() == u.tolist()
