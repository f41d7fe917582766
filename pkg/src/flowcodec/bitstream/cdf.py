"""Codable 16-bit CDF tables from Gaussian entropy-model parameters.

Normal CDF values come from a fixed rational-polynomial approximation built
only from +, *, / so tables are bit-reproducible wherever IEEE doubles are.
"""

from __future__ import annotations

import numpy as np

from ..codec.model import LATENT_MAX, LATENT_MIN
from .rangecoder import TOTAL, CdfTable

# Polynomial coefficients of 1 - 0.5 * (1 + d1 x + ... + d6 x^6)^-16, |error| < 1.5e-7
_D = (0.0498673470, 0.0211410061, 0.0032776263, 0.0000380036, 0.0000488906, 0.0000053830)


def normal_cdf(x) -> np.ndarray:
    """Standard normal CDF via the polynomial approximation above."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    p = 1.0 + a * (_D[0] + a * (_D[1] + a * (_D[2] + a * (_D[3] + a * (_D[4] + a * _D[5])))))
    t = 1.0 / p
    t2 = t * t
    t4 = t2 * t2
    t8 = t4 * t4
    tail = 0.5 * (t8 * t8)
    return np.where(x >= 0, 1.0 - tail, tail)


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """(K, A) probabilities -> (K, A + 1) integer CDFs summing to 2**16, every frequency >= 1."""
    pmf = np.clip(np.asarray(pmf, dtype=np.float64), 0.0, None)
    k, a = pmf.shape
    if a > TOTAL:
        raise ValueError(f"alphabet of {a} symbols exceeds the 16-bit precision")
    freq = np.floor(pmf * (TOTAL - a)).astype(np.int64) + 1
    rest = TOTAL - freq.sum(axis=1)
    if np.any(rest < 0):
        raise ValueError("quantize_pmf: probabilities sum above 1")
    freq[np.arange(k), np.argmax(pmf, axis=1)] += rest
    cdf = np.zeros((k, a + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    return cdf


def gaussian_pmf(mean, scale, lo: int = LATENT_MIN, hi: int = LATENT_MAX) -> np.ndarray:
    """Interval masses on integers lo..hi; the two edge symbols absorb the tails."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1, 1)
    scale = np.asarray(scale, dtype=np.float64).reshape(-1, 1)
    if np.any(~np.isfinite(mean)) or np.any(~np.isfinite(scale)) or np.any(scale <= 0):
        raise ValueError("gaussian_pmf: mean and scale must be finite with positive scale")
    edges = np.arange(lo, hi, dtype=np.float64) + 0.5
    c = normal_cdf((edges[None, :] - mean) / scale)
    upper = np.concatenate([c, np.ones((c.shape[0], 1))], axis=1)
    lower = np.concatenate([np.zeros((c.shape[0], 1)), c], axis=1)
    return upper - lower


def build_cdfs(mean, scale, lo: int = LATENT_MIN, hi: int = LATENT_MAX) -> CdfTable:
    """One CDF row per element of the flattened ``mean``/``scale`` arrays."""
    return CdfTable(quantize_pmf(gaussian_pmf(mean, scale, lo, hi)), offset=lo)


def uniform_table(alphabet: int, offset: int = 0) -> CdfTable:
    return CdfTable(quantize_pmf(np.full((1, alphabet), 1.0 / alphabet)), offset=offset)
