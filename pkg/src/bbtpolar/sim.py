"""Monte-Carlo BPSK/AWGN simulation and bit-channel construction.

Randomness is organised in fixed-size chunks of frames.  Chunk ``c`` of SNR
point ``p`` draws from ``default_rng([seed, p, c])`` regardless of which worker
runs it, and results are reduced in chunk order, so every output is a pure
function of the configuration and the seed.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounds import sigma_from_snr
from .bp import BpConfig, BpDecoder, DecodeMetrics
from .channels import BEC, parse_channel, transform_leaf_channels
from .codec import CodeSpec, encode, hard_decision, sc_decode_batch, transform
from .tree import build_tree

CSV_HEADER = ["snr_db", "convention", "frames", "ferr", "fer", "ber", "iters_avg", "layers_avg",
              "adds", "mults", "cmps", "luts"]
DEFAULT_CHUNK = 500


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), *[int(k) for k in key]])


def bpsk_awgn_llr(codeword, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """BPSK (0 -> +1, 1 -> -1) plus Gaussian noise, returned as ``2y / sigma^2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    c = np.asarray(codeword, dtype=np.uint8)
    y = 1.0 - 2.0 * c + sigma * rng.standard_normal(c.shape)
    return 2.0 * y / sigma ** 2


def snr_to_sigma(snr_db: float, convention: str, rate: float) -> float:
    conv = convention.lower()
    if conv == "ebn0":
        return sigma_from_snr(snr_db, rate)
    if conv == "esn0":
        return sigma_from_snr(snr_db, 1.0)
    raise ValueError(f"unknown SNR convention {convention!r} (use ebn0 or esn0)")


@dataclass(frozen=True)
class SimConfig:
    snr_points: tuple[float, ...]
    snr_convention: str = "ebn0"
    max_frames: int = 10_000
    max_frame_errors: int | None = None
    seed: int = 1
    decoder: str | BpConfig = "sc"
    chunk_frames: int = DEFAULT_CHUNK
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_points", tuple(float(s) for s in self.snr_points))
        object.__setattr__(self, "snr_convention", self.snr_convention.lower())
        if not self.snr_points:
            raise ValueError("at least one SNR point is required")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if self.snr_convention not in ("ebn0", "esn0"):
            raise ValueError(f"unknown SNR convention {self.snr_convention!r}")
        if isinstance(self.decoder, str) and self.decoder.lower() != "sc":
            raise ValueError(f"decoder must be 'sc' or a BpConfig, got {self.decoder!r}")
        if self.chunk_frames < 1 or self.threads < 1:
            raise ValueError("chunk_frames and threads must be >= 1")


@dataclass
class FerPoint:
    snr_db: float
    convention: str
    frames: int
    frame_errors: int
    bit_errors: int
    metrics_avg: DecodeMetrics = field(default_factory=DecodeMetrics)
    info_bits: int = 0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.info_bits) if self.info_bits else 0.0

    def csv_row(self) -> list[str]:
        m = self.metrics_avg
        vals = [self.snr_db, self.convention, self.frames, self.frame_errors, self.fer, self.ber,
                m.iterations_used, m.layers_traversed, m.adds, m.mults, m.comparisons, m.lut_accesses]
        return [v if isinstance(v, str) else (str(v) if isinstance(v, int) else f"{v:.10g}") for v in vals]


def sc_metrics(spec: CodeSpec, f_mode: str = "exact") -> DecodeMetrics:
    """Per-frame operation counts of SC decoding under the BP counting convention."""
    g = spec.graph
    pairs = sum(int(st.upper.size) for st in g.stages)
    m = DecodeMetrics(iterations_used=1, layers_traversed=g.layers)
    # every butterfly costs one f evaluation and one g (an addition)
    m.adds = pairs
    m.mults = pairs
    m.comparisons = pairs
    m.lut_accesses = pairs if f_mode == "exact" else 0
    return m


class _FrameRunner:
    def __init__(self, spec: CodeSpec, decoder: str | BpConfig):
        self.spec = spec
        if isinstance(decoder, BpConfig):
            self.bp = BpDecoder(spec, decoder)
            self.per_iter = self.bp.per_iteration
        else:
            self.bp = None
            self.fixed = sc_metrics(spec)

    def run_chunk(self, sigma: float, frames: int, rng: np.random.Generator):
        """Per-frame (frame_error, bit_errors, iterations) for one chunk."""
        K = self.spec.dimension
        msgs = rng.integers(0, 2, size=(frames, K), dtype=np.uint8)
        cw = encode(self.spec, msgs)
        llr = bpsk_awgn_llr(cw, sigma, rng)
        if self.bp is not None:
            _, est, iters, _ = self.bp.decode_batch(llr)
        else:
            est, _ = sc_decode_batch(self.spec, llr)
            iters = np.ones(frames, dtype=np.int64)
        bit_err = np.count_nonzero(est != msgs, axis=1)
        return (bit_err > 0).astype(np.int64), bit_err.astype(np.int64), iters.astype(np.int64)

    def metrics_for(self, iters: np.ndarray) -> DecodeMetrics:
        if self.bp is None:
            return self.fixed
        return self.per_iter.scaled(float(iters.mean()))


def _ordered_chunks(job: Callable[[int], tuple], n_chunks: int, threads: int, stop: Callable[[tuple], bool]):
    """Yield chunk results in index order; stops scheduling once ``stop`` fires."""
    if threads <= 1:
        for c in range(n_chunks):
            res = job(c)
            yield res
            if stop(res):
                return
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        c = 0
        while c < n_chunks:
            wave = list(range(c, min(c + threads, n_chunks)))
            futures = [pool.submit(job, i) for i in wave]
            for f in futures:
                res = f.result()
                yield res
                if stop(res):
                    return
            c = wave[-1] + 1


def run_fer(spec: CodeSpec, config: SimConfig) -> list[FerPoint]:
    runner = _FrameRunner(spec, config.decoder)
    out = []
    chunk = config.chunk_frames
    n_chunks = math.ceil(config.max_frames / chunk)
    for p, snr in enumerate(config.snr_points):
        sigma = snr_to_sigma(snr, config.snr_convention, spec.rate if spec.dimension else 1.0)
        fe_list, be_list, it_list = [], [], []
        state = {"errors": 0}

        def job(c, sigma=sigma, p=p):
            frames = min(chunk, config.max_frames - c * chunk)
            return runner.run_chunk(sigma, frames, _rng(config.seed, p, c))

        def stop(res):
            state["errors"] += int(res[0].sum())
            return config.max_frame_errors is not None and state["errors"] >= config.max_frame_errors

        for fe, be, it in _ordered_chunks(job, n_chunks, config.threads, stop):
            fe_list.append(fe)
            be_list.append(be)
            it_list.append(it)
        fe = np.concatenate(fe_list)
        be = np.concatenate(be_list)
        it = np.concatenate(it_list)
        if config.max_frame_errors is not None and fe.sum() >= config.max_frame_errors:
            # cut at the frame that reached the error target
            last = int(np.searchsorted(np.cumsum(fe), config.max_frame_errors)) + 1
            fe, be, it = fe[:last], be[:last], it[:last]
        out.append(FerPoint(snr, config.snr_convention, int(fe.size), int(fe.sum()), int(be.sum()),
                            runner.metrics_for(it), spec.dimension))
    return out


def write_fer_csv(points: Sequence[FerPoint], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for pt in points:
        w.writerow(pt.csv_row())
    return buf.getvalue()


# --------------------------------------------------------------------------- construction


def _channel_llr_sampler(channel: str, convention: str = "esn0", rate: float = 1.0):
    """Return ``sample(codewords, rng) -> llrs`` for a channel literal."""
    kind, value = parse_channel(channel)
    if kind == "awgn":
        sigma = snr_to_sigma(value, convention, rate)
        return lambda cw, rng: bpsk_awgn_llr(cw, sigma, rng)
    if kind == "bec":
        if not 0 <= value <= 1:
            raise ValueError("erasure probability must be in [0, 1]")

        def bec(cw, rng):
            llr = np.where(cw == 0, 1e30, -1e30)
            return np.where(rng.random(cw.shape) < value, 0.0, llr)

        return bec
    if not 0 <= value <= 0.5:
        raise ValueError("crossover probability must be in [0, 1/2]")
    mag = math.log((1 - value) / value) if value > 0 else 1e30

    def bsc(cw, rng):
        flip = (rng.random(cw.shape) < value).astype(np.uint8)
        return np.where((cw ^ flip) == 0, mag, -mag)

    return bsc


def reliability_order(error_rates) -> np.ndarray:
    """Most reliable first; ties broken by ascending leaf index."""
    r = np.asarray(error_rates, dtype=float)
    return np.lexsort((np.arange(r.size), r))


def mc_construct(N: int, channel: str, trials: int, seed: int, convention: str = "esn0",
                 rate: float = 1.0, chunk_frames: int = 1000, threads: int = 1):
    """Genie-aided SC estimate of every bit-channel's error rate.

    Each trial sends a uniformly random leaf vector; at every leaf an error is
    counted when its LLR points to the wrong bit, after which the true bit is
    fed back before decoding continues.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    spec = CodeSpec(N, N, tuple(range(N)))
    sample = _channel_llr_sampler(channel, convention, rate)
    n_chunks = math.ceil(trials / chunk_frames)

    def job(c):
        frames = min(chunk_frames, trials - c * chunk_frames)
        rng = _rng(seed, 0, c)
        u = rng.integers(0, 2, size=(frames, N), dtype=np.uint8)
        cw = transform(u, spec.graph)
        llr = sample(cw, rng)
        _, _, leaf = sc_decode_batch(spec, llr, genie=u, return_leaf_llrs=True)
        wrong = hard_decision(leaf) != u
        return (np.count_nonzero(wrong, axis=0).astype(np.int64),)

    errors = np.zeros(N, dtype=np.int64)
    for (e,) in _ordered_chunks(job, n_chunks, threads, lambda r: False):
        errors += e
    rates = errors / trials
    return rates, reliability_order(rates)


def bec_construct(N: int, e: float):
    """Exact leaf erasure probabilities for BEC(e) and the induced reliability order."""
    if not 0.0 <= e <= 1.0:
        raise ValueError("erasure probability must be in [0, 1]")
    probs = np.array([W.erasure for W in transform_leaf_channels(BEC(e), build_tree(N))])
    return probs, reliability_order(probs)


def band_fraction(rates, lo: float, hi: float) -> float:
    r = np.asarray(rates, dtype=float)
    return float(np.count_nonzero((r >= lo) & (r <= hi))) / r.size
