"""Analytical ML frame-error bounds from a weight enumerator.

All bounds take a :class:`~bbtpolar.spectrum.Wef` (integer or ensemble
average) and a unit-energy BPSK/AWGN noise model.  Fractional ensemble
coefficients enter every formula linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .spectrum import Wef


@dataclass(frozen=True)
class NoiseModel:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def p_b(self) -> float:
        return q_func(1.0 / self.sigma)

    @classmethod
    def from_snr_db(cls, snr_db: float, rate: float = 1.0) -> "NoiseModel":
        """``snr_db`` is Es/N0 when ``rate == 1``; otherwise Eb/N0 for that code rate."""
        return cls(sigma_from_snr(snr_db, rate))


def sigma_from_snr(snr_db: float, rate: float = 1.0) -> float:
    es_n0 = rate * 10.0 ** (snr_db / 10.0)
    return math.sqrt(1.0 / (2.0 * es_n0))


@dataclass
class BoundResult:
    value: float
    optimizer: int | None = None
    included_weights: tuple[int, ...] = field(default_factory=tuple)


def q_func(x):
    """Gaussian tail probability ``P(Z > x)``."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def e0_tail(p: float, n_trials: int, lo: int, hi: int) -> float:
    """``sum_{m=lo}^{hi} C(n,m) p^m (1-p)^(n-m)``, empty ranges give 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    lo = max(int(lo), 0)
    hi = min(int(hi), int(n_trials))
    if n_trials < 0 or lo > hi:
        return 0.0
    if lo == 0 and hi == n_trials:
        return 1.0
    m = np.arange(lo, hi + 1)
    return min(math.fsum(np.exp(stats.binom.logpmf(m, n_trials, p))), 1.0)




def fer_upper_bound_at(wef: Wef, noise: NoiseModel, w_star: int) -> float:
    """The bound for one fixed split weight ``w*`` (before minimization and capping).

    Per weight ``w`` (with ``T = floor(w* - w/2)`` and ``Qw = Q(sqrt(w)/sigma)``)::

        e1 = A_w Qw e0(p_b, N - w, 0, T)
        e2 = max(A_w - 1, 0) (Qw - Qw^2/2) e0(p_b, max(N - 2w, 0), 0, T) + Qw

    and the value is ``sum_{1 <= w <= 2w*} min(e1, e2) + e0(p_b, N, w*+1, N)``.
    The ``+ Qw`` term belongs to ``e2``.
    """
    N = wef.length
    A = wef.as_float()
    pb = noise.p_b
    terms = [e0_tail(pb, N, w_star + 1, N)]
    for w in range(1, min(2 * w_star, N) + 1):
        if A[w] <= 0:
            continue
        qw = q_func(math.sqrt(w) / noise.sigma)
        T = math.floor(w_star - w / 2)
        e1 = A[w] * qw * e0_tail(pb, N - w, 0, T)
        e2 = max(A[w] - 1.0, 0.0) * (qw - 0.5 * qw * qw) * e0_tail(pb, max(N - 2 * w, 0), 0, T) + qw
        terms.append(min(e1, e2))
    return math.fsum(terms)


def fer_upper_bound(wef: Wef, noise: NoiseModel) -> BoundResult:
    """Minimum of :func:`fer_upper_bound_at` over ``w* = 0..N``, capped at 1."""
    best, arg = math.inf, 0
    for ws in range(wef.length + 1):
        val = fer_upper_bound_at(wef, noise, ws)
        if val < best:
            best, arg = val, ws
    return BoundResult(min(best, 1.0), optimizer=arg)


def psi_bivariate(rho: float, x: float, y: float) -> float:
    """``P(Z1 > x, Z2 > y)`` for a standard bivariate normal with correlation ``rho``.

    Conditioning on ``Z1 = z`` leaves a single integral
    ``int_x^inf phi(z) Q((y - rho z) / sqrt(1 - rho^2)) dz``.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if x == -math.inf and y == -math.inf:
        return 1.0
    r = math.sqrt(1.0 - rho * rho)

    def integrand(z):
        return math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * 0.5 * math.erfc(
            (y - rho * z) / (r * math.sqrt(2.0)))

    lo = x if np.isfinite(x) else -math.inf
    val, _ = integrate.quad(integrand, lo, math.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    return min(max(val, 0.0), 1.0)


@lru_cache(maxsize=200_000)
def _psi_cached(rho: float, x: float, y: float) -> float:
    return psi_bivariate(rho, x, y)


def kappa(w: int, t: int, w_min: int) -> float:
    return min(w / t, t / w, (w + t - w_min) / (2.0 * math.sqrt(w * t)))


def kat_beta(subset: dict[int, float], w: int, w_min: int, sigma: float) -> float:
    """Pairwise-intersection mass seen by one weight-``w`` codeword of the subset.

    Codewords of the same weight use correlation ``1 - w_min / (2w)``; other
    weights ``t`` use ``kappa(w, t, w_min)``.  Correlations are clamped into
    ``[-1 + 1e-12, 1 - 1e-12]`` so the orthant probability stays defined.
    """
    xw = math.sqrt(w) / sigma
    clamp = lambda r: min(max(r, -1 + 1e-12), 1 - 1e-12)  # noqa: E731
    beta = 0.0
    a_w = subset.get(w, 0.0)
    if a_w > 1.0:
        beta += (a_w - 1.0) * _psi_cached(clamp(1.0 - w_min / (2.0 * w)), xw, xw)
    for t, a_t in subset.items():
        if t == w or t == 0 or a_t == 0:
            continue
        beta += a_t * _psi_cached(clamp(kappa(w, t, w_min)), xw, math.sqrt(t) / sigma)
    return beta


def kat_bound(subset_wef: Wef | dict[int, float], w_min: int, noise: NoiseModel) -> float:
    """KAT lower bound on the probability that some subset codeword beats the sent one."""
    if isinstance(subset_wef, Wef):
        A = subset_wef.as_float()
        subset = {w: float(A[w]) for w in range(1, A.size) if A[w] > 0}
    else:
        subset = {int(w): float(a) for w, a in subset_wef.items() if w > 0 and a > 0}
    if not subset:
        return 0.0
    s = noise.sigma
    total = 0.0
    for w, a_w in sorted(subset.items()):
        alpha = q_func(math.sqrt(w) / s)
        if alpha <= 0.0:
            continue
        beta = kat_beta(subset, w, w_min, s)
        if beta == 0.0:
            # isolated codeword: the bracket collapses to 1/alpha
            total += a_w * alpha
            continue
        ratio = beta / alpha
        theta = ratio - math.floor(ratio)
        total += a_w * alpha ** 2 * (theta / ((2.0 - theta) * alpha + beta)
                                     + (1.0 - theta) / ((1.0 - theta) * alpha + beta))
    return min(max(total, 0.0), 1.0)


def iterative_lower_bound(wef: Wef, noise: NoiseModel) -> BoundResult:
    """Grow the subset one weight class at a time until the KAT value drops."""
    A = wef.as_float()
    nz = [w for w in range(1, A.size) if A[w] > 0]
    if not nz:
        raise ValueError("spectrum has no nonzero codewords")
    w_min = nz[0]
    subset = {w_min: float(A[w_min])}
    best = kat_bound(subset, w_min, noise)
    included = [w_min]
    for w in range(w_min + 1, wef.length + 1):
        # adding an empty weight class leaves the bound unchanged
        if A[w] <= 0:
            continue
        trial = dict(subset)
        trial[w] = float(A[w])
        new = kat_bound(trial, w_min, noise)
        if new < best:
            break
        best, subset = new, trial
        included.append(w)
    return BoundResult(best, included_weights=tuple(included))
