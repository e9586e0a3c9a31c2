import math

import numpy as np
import pytest
from scipy import stats

from bbtpolar.bp import BpConfig
from bbtpolar.codec import CodeSpec, spec_from_order
from bbtpolar.sim import (
    SimConfig,
    band_fraction,
    bec_construct,
    bpsk_awgn_llr,
    mc_construct,
    reliability_order,
    run_fer,
    snr_to_sigma,
    write_fer_csv,
)


class ZeroNoise:
    def standard_normal(self, shape):
        return np.zeros(shape)


def test_llr_noiseless_values():
    llr = bpsk_awgn_llr([0, 1, 0], 1.0, ZeroNoise())
    assert llr.tolist() == [2.0, -2.0, 2.0]
    assert bpsk_awgn_llr([0], 0.5, ZeroNoise())[0] == 8.0


def test_llr_sign_at_high_snr_and_determinism():
    cw = np.random.default_rng(0).integers(0, 2, 2000).astype(np.uint8)
    llr = bpsk_awgn_llr(cw, 1e-3, np.random.default_rng(1))
    assert np.all((llr < 0) == (cw == 1))
    a = bpsk_awgn_llr(cw, 0.8, np.random.default_rng(5))
    b = bpsk_awgn_llr(cw, 0.8, np.random.default_rng(5))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        bpsk_awgn_llr(cw, 0.0, np.random.default_rng(5))


def test_llr_noise_statistics():
    sigma = 0.7
    llr = bpsk_awgn_llr(np.zeros(200_000, np.uint8), sigma, np.random.default_rng(2))
    # LLR ~ N(2/sigma^2, 4/sigma^2)
    assert np.mean(llr) == pytest.approx(2 / sigma**2, rel=0.01)
    assert np.var(llr) == pytest.approx(4 / sigma**2, rel=0.02)


def test_snr_conventions():
    assert snr_to_sigma(0.0, "esn0", 0.5) == pytest.approx(math.sqrt(0.5))
    assert snr_to_sigma(0.0, "ebn0", 0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        snr_to_sigma(0.0, "snr", 1.0)


@pytest.fixture(scope="module")
def code64():
    _, order = bec_construct(64, 0.5)
    return spec_from_order(64, 32, order)


def test_high_snr_is_error_free(code64):
    (pt,) = run_fer(code64, SimConfig((12.0,), max_frames=1000, seed=4))
    assert pt.frames == 1000 and pt.fer == 0.0 and pt.ber == 0.0


def test_reruns_and_thread_counts_identical(code64):
    cfg = dict(snr_points=(0.5, 1.5), max_frames=1300, seed=9, chunk_frames=200)
    base = write_fer_csv(run_fer(code64, SimConfig(**cfg)))
    assert write_fer_csv(run_fer(code64, SimConfig(**cfg))) == base
    assert write_fer_csv(run_fer(code64, SimConfig(**cfg, threads=3))) == base
    bp = BpConfig(max_iterations=20, max_leaf_subcode=2)
    b1 = write_fer_csv(run_fer(code64, SimConfig(**cfg, decoder=bp)))
    b2 = write_fer_csv(run_fer(code64, SimConfig(**cfg, decoder=bp, threads=2)))
    assert b1 == b2


def test_error_target_cut(code64):
    full = run_fer(code64, SimConfig((0.0,), max_frames=3000, seed=2, chunk_frames=100))[0]
    (cut,) = run_fer(code64, SimConfig((0.0,), max_frames=3000, max_frame_errors=25, seed=2,
                                       chunk_frames=100, threads=2))
    assert full.frame_errors > 25
    assert cut.frame_errors == 25 and cut.frames < full.frames


def test_sc_fer_decreases_with_snr(code64):
    pts = run_fer(code64, SimConfig((0.0, 1.0, 2.0, 3.0), max_frames=4000, seed=6))
    for a, b in zip(pts, pts[1:]):
        se = math.sqrt(a.fer * (1 - a.fer) / a.frames + b.fer * (1 - b.fer) / b.frames)
        assert b.fer <= a.fer + 2 * se


def test_csv_layout(code64):
    text = write_fer_csv(run_fer(code64, SimConfig((2.0,), max_frames=10)), ["hello"])
    lines = text.splitlines()
    assert lines[0] == "# hello"
    assert lines[1].split(",")[:5] == ["snr_db", "convention", "frames", "ferr", "fer"]
    assert len(lines) == 3


def test_bec_construct_examples():
    probs, order = bec_construct(2, 0.5)
    assert probs.tolist() == [0.75, 0.25]
    assert order[0] == 1
    assert np.all(bec_construct(16, 0.0)[0] == 0)
    assert np.all(bec_construct(16, 1.0)[0] == 1)


def test_mc_construct_small_cases():
    rates, order = mc_construct(2, "awgn:0", 20_000, seed=1)
    assert rates[0] > rates[1] and order[0] == 1
    zeros, _ = mc_construct(16, "bec:0", 100, seed=1)
    assert np.all(zeros == 0)
    a, _ = mc_construct(12, "bsc:0.1", 3000, seed=7, chunk_frames=400)
    b, _ = mc_construct(12, "bsc:0.1", 3000, seed=7, chunk_frames=400, threads=3)
    assert np.array_equal(a, b)


def test_mc_construct_tracks_bec_exact():
    # on the BEC a hard decision is wrong half the time an erasure survives
    exact, _ = bec_construct(64, 0.4)
    est, _ = mc_construct(64, "bec:0.4", 100_000, seed=3, chunk_frames=5000)
    assert np.max(np.abs(est - exact / 2)) < 0.01
    rho = stats.spearmanr(est, exact).statistic
    assert rho > 0.95


def test_reliability_order_ties():
    assert reliability_order([0.2, 0.1, 0.2, 0.1]).tolist() == [1, 3, 0, 2]


def test_band_fraction_inclusive():
    assert band_fraction([0.1, 0.2, 0.3, 0.9], 0.1, 0.3) == 0.75
