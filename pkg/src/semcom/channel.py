"""Differentiable physical-channel layers: AWGN, symbol erasure, Rician fading.

SNR is defined per complex symbol against unit signal power, so a
configured snr_db of s gives complex noise variance 10**(-s/10), half per
real component. The transmitter's power normalization makes that
calibration exact. Noise, erasure masks, and fading gains enter the
gradient graph as constants: backward through a channel is the channel's
own linear map applied to upstream gradients.

``snr_db = math.inf`` switches noise off entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .blocks import ComplexSymbolBlock

AWGN, ERASURE, RICIAN = "AWGN", "ERASURE", "RICIAN"
KINDS = (AWGN, ERASURE, RICIAN)


@dataclass
class ChannelConfig:
    kind: str = AWGN
    snr_db: float = 12.0
    erasure_p: float = 0.1
    rician_k: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.erasure_p <= 1.0:
            raise ValueError("erasure_p must lie in [0, 1]")
        if self.rician_k < 0:
            raise ValueError("rician_k must be >= 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def noise_variance(snr_db: float) -> float:
    """Complex noise variance for unit signal power: 10**(-snr_db/10)."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def _noise_pair(shape, snr_db, rng):
    sigma2 = noise_variance(snr_db)
    if sigma2 == 0.0:
        return None, None
    scale = math.sqrt(sigma2 / 2.0)
    n_re = rng.normal(0.0, scale, size=shape).astype(np.float32)
    n_im = rng.normal(0.0, scale, size=shape).astype(np.float32)
    return n_re, n_im


def awgn(x: ComplexSymbolBlock, snr_db: float, rng: np.random.Generator) -> ComplexSymbolBlock:
    """Y = X + N with N ~ CN(0, 10**(-snr_db/10)) per complex symbol."""
    n_re, n_im = _noise_pair(x.shape, snr_db, rng)
    if n_re is None:
        return ComplexSymbolBlock(x.re, x.im, x.degenerate)
    return ComplexSymbolBlock(x.re + T.Tensor(n_re), x.im + T.Tensor(n_im), x.degenerate)


def erasure(x: ComplexSymbolBlock, p: float, rng: np.random.Generator) -> ComplexSymbolBlock:
    """Each complex symbol independently zeroed with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("erasure probability must lie in [0, 1]")
    keep = (rng.random(x.shape) >= p).astype(np.float32)
    mask = T.Tensor(keep)
    return ComplexSymbolBlock(x.re * mask, x.im * mask, x.degenerate)


def rician(x: ComplexSymbolBlock, k_factor: float, snr_db: float,
           rng: np.random.Generator) -> tuple[ComplexSymbolBlock, np.ndarray]:
    """Block fading: one complex gain per sentence row, then AWGN.

    The gain has line-of-sight mean sqrt(K/(K+1)) and scatter variance
    1/(K+1), so E[|h|^2] = 1 and the AWGN calibration carries over.
    ``k_factor = math.inf`` selects the LoS-only limit h = 1. The gain is
    returned for diagnostics only; the receiver never sees it.
    """
    batch = x.shape[0]
    if math.isinf(k_factor):
        h = np.ones(batch, dtype=np.complex128)
    else:
        los = math.sqrt(k_factor / (k_factor + 1.0))
        scatter = math.sqrt(1.0 / (2.0 * (k_factor + 1.0)))
        h = (los + rng.normal(0.0, scatter, size=batch)
             + 1j * rng.normal(0.0, scatter, size=batch))
    hr = np.broadcast_to(h.real.astype(np.float32)[:, None, None], x.shape).copy()
    hi = np.broadcast_to(h.imag.astype(np.float32)[:, None, None], x.shape).copy()
    hr_t, hi_t = T.Tensor(hr), T.Tensor(hi)
    y_re = x.re * hr_t - x.im * hi_t
    y_im = x.im * hr_t + x.re * hi_t
    faded = ComplexSymbolBlock(y_re, y_im, x.degenerate)
    return awgn(faded, snr_db, rng), h


def transmit(x: ComplexSymbolBlock, config: ChannelConfig,
             rng: np.random.Generator) -> ComplexSymbolBlock:
    """Apply the configured channel; fading gains are discarded here."""
    if config.kind == AWGN:
        return awgn(x, config.snr_db, rng)
    if config.kind == ERASURE:
        return erasure(x, config.erasure_p, rng)
    y, _ = rician(x, config.rician_k, config.snr_db, rng)
    return y


def awgn_complex(symbols: np.ndarray, snr_db: float,
                 rng: np.random.Generator) -> np.ndarray:
    """AWGN on a raw complex array; same calibration as the tensor path."""
    sigma2 = noise_variance(snr_db)
    if sigma2 == 0.0:
        return symbols.copy()
    scale = math.sqrt(sigma2 / 2.0)
    noise = rng.normal(0.0, scale, size=symbols.shape) \
        + 1j * rng.normal(0.0, scale, size=symbols.shape)
    return symbols + noise
