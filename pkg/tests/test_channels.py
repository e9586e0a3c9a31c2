import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bbtpolar.channels import (
    BEC,
    BSC,
    DiscreteBms,
    capacity,
    channel_from_literal,
    circle,
    layer_channels,
    num_outputs,
    parse_channel,
    polarization_stats,
    quantize,
    star,
    stats_from_capacities,
    transform_leaf_channels,
)
from bbtpolar.tree import build_tree


def h2(p):
    return 0.0 if p in (0.0, 1.0) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def bec_erasures(N, e):
    """Independent oracle: closed-form erasure recursion over the tree."""

    def rec(ell, chans):
        if ell == 1:
            return chans
        h = (ell + 1) // 2
        left, right = list(chans[:h]), []
        for i in range(ell // 2):
            a, b = chans[i], chans[h + i]
            left[i] = a + b - a * b
            right.append(a * b)
        return rec(h, left) + rec(ell - h, right)

    return rec(N, [e] * N)


def test_bec_transforms():
    assert star(BEC(0.5), BEC(0.5)) == BEC(0.75)
    assert circle(BEC(0.5), BEC(0.5)) == BEC(0.25)
    assert star(BEC(0.0), BEC(0.0)) == BEC(0.0)
    assert circle(BEC(1.0), BEC(1.0)) == BEC(1.0)


def test_bec_table_route_agrees_with_closed_form():
    # push a BEC through the generic table code by wrapping it as DiscreteBms
    from bbtpolar.channels import as_discrete

    A = as_discrete(BEC(0.3))
    B = as_discrete(BEC(0.6))
    assert capacity(star(A, B)) == pytest.approx(1 - (0.3 + 0.6 - 0.18), abs=1e-12)
    assert capacity(circle(A, B)) == pytest.approx(1 - 0.18, abs=1e-12)


def test_capacity_values():
    assert capacity(BEC(0.3)) == pytest.approx(0.7, abs=1e-15)
    assert capacity(BSC(0.5)) == pytest.approx(0.0, abs=1e-15)
    assert capacity(BSC(0.11)) == pytest.approx(1 - h2(0.11), abs=1e-12)
    assert abs(capacity(BSC(0.11)) - 0.5) < 1e-3


def test_bsc_conservation():
    W = BSC(0.1)
    total = capacity(star(W, W)) + capacity(circle(W, W))
    assert total == pytest.approx(2 * capacity(W), abs=1e-12)
    assert num_outputs(star(W, W)) == 4


def _random_channel(draw_kind, p):
    return BEC(p) if draw_kind else BSC(p / 2)


@given(st.booleans(), st.floats(0, 1), st.booleans(), st.floats(0, 1))
def test_conservation_property(k0, p0, k1, p1):
    W0, W1 = _random_channel(k0, p0), _random_channel(k1, p1)
    lhs = capacity(W0) + capacity(W1)
    rhs = capacity(star(W0, W1)) + capacity(circle(W0, W1))
    assert abs(lhs - rhs) < 1e-9


@given(st.booleans(), st.floats(0.01, 0.99))
def test_circle_improves_star_degrades(kind, p):
    W = _random_channel(kind, p)
    assert capacity(circle(W, W)) >= capacity(W) - 1e-12
    assert capacity(W) >= capacity(star(W, W)) - 1e-12


def test_symmetry_of_tables():
    W = circle(star(BSC(0.1), BSC(0.2)), BSC(0.05))
    assert np.allclose(W.table().sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(W.w1, W.w0[W.conj])


def test_quantize_noop_and_limits():
    W = star(BSC(0.1), BSC(0.1))
    assert quantize(W, 4) is W
    assert quantize(W, 100) is W
    with pytest.raises(ValueError):
        quantize(W, 1)


def test_quantize_equal_lr_merge_is_lossless():
    # outputs 0 and 1 share the likelihood ratio 4
    W = DiscreteBms(np.array([0.4, 0.2, 0.1, 0.05, 0.25]), np.array([2, 3, 0, 1, 4]))
    Q = quantize(W, 4)
    assert num_outputs(Q) <= 4
    assert capacity(Q) == pytest.approx(capacity(W), abs=1e-12)


@given(st.floats(0.01, 0.49), st.floats(0.01, 0.49), st.integers(2, 12))
def test_quantize_degrades(p, q, budget):
    W = circle(star(BSC(p), BSC(q)), star(BSC(q), BSC(p)))
    Q = quantize(W, budget)
    assert num_outputs(Q) <= budget
    assert capacity(Q) <= capacity(W) + 1e-12
    assert np.allclose(Q.w1, Q.w0[Q.conj])


def test_leaf_channels_small_cases():
    assert transform_leaf_channels(BEC(0.5), build_tree(2)) == [BEC(0.75), BEC(0.25)]
    assert transform_leaf_channels(BSC(0.2), build_tree(1)) == [BSC(0.2)]
    e = 0.4
    leaves = [W.erasure for W in transform_leaf_channels(BEC(e), build_tree(3))]
    s = e + e - e * e
    # left child (W*W, W) splits again; right child W o W is a leaf
    assert leaves == pytest.approx([s + e - s * e, s * e, e * e], abs=1e-15)


@pytest.mark.parametrize("N", [5, 6, 13, 100, 257])
def test_leaf_channels_match_erasure_oracle(N):
    got = [W.erasure for W in transform_leaf_channels(BEC(0.37), build_tree(N))]
    assert got == pytest.approx(bec_erasures(N, 0.37), abs=1e-14)


def test_bsc_layers_conserve_mean_capacity():
    layers = layer_channels(BSC(0.11), build_tree(24), max_outputs=16)
    base = capacity(BSC(0.11))
    for layer in layers:
        mu = np.mean([capacity(W) for W in layer])
        # quantization only ever loses capacity
        assert mu <= base + 1e-12
        assert mu > base - 0.01


def test_stats_examples():
    s = polarization_stats([BEC(0.0)] * 8, 0.1, 0.9)
    assert (s.psi, s.omega, s.phi, s.mu, s.nu) == (0.0, 0.0, 1.0, 1.0, 1.0)
    leaves = transform_leaf_channels(BEC(0.3), build_tree(50))
    assert polarization_stats(leaves, 0.1, 0.9).mu == pytest.approx(0.7, abs=1e-12)
    with pytest.raises(ValueError):
        polarization_stats(leaves, 0.5, 0.5)


def test_omega_bec_1024_matches_oracle():
    caps = 1 - np.array(bec_erasures(1024, 0.5))
    expected = np.count_nonzero((caps >= 0.1) & (caps < 0.9)) / 1024
    leaves = transform_leaf_channels(BEC(0.5), build_tree(1024))
    assert polarization_stats(leaves, 0.1, 0.9).omega == expected


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0.05, 0.45), st.floats(0.55, 0.95))
def test_stats_partition(caps, a, b):
    s = stats_from_capacities(np.array(caps), a, b)
    assert abs(s.psi + s.omega + s.phi - 1) < 1e-12
    assert 0 <= s.nu <= s.mu + 1e-15 <= 1 + 1e-15


def test_channel_literals():
    assert parse_channel("awgn:1.5") == ("awgn", 1.5)
    assert channel_from_literal("bec:0.25") == BEC(0.25)
    assert channel_from_literal("BSC:0.1") == BSC(0.1)
    with pytest.raises(ValueError):
        parse_channel("rayleigh:3")
    with pytest.raises(ValueError):
        channel_from_literal("awgn:1")
