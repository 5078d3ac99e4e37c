#!/usr/bin/env python3
"""
Compressors - delta-contractive operators with bit accounting
Identity, deterministic quantizer, unbiased stochastic quantizer and top-k
sparsifier, plus Monte-Carlo estimators for the contraction factor and bias.

Payloads travel as exact reconstructions; the wire format is only simulated
by the bit counter.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from sim_errors import CompressionError

logger = logging.getLogger(__name__)

SCALAR_BITS = 32        # full-precision float on the wire (the ||x||_inf scale)
INNER_DRAWS = 100       # Monte-Carlo draws per input for stochastic compressors


class CompressorKind(Enum):
    IDENTITY = "identity"
    DET_QUANT = "det_quant"
    STOCH_QUANT = "stoch_quant"
    TOP_K = "top_k"


@dataclass(frozen=True)
class Compressor:
    kind: CompressorKind
    dim: int
    bits: int = 0       # quantizers
    k: int = 0          # top_k

    def __post_init__(self):
        if self.dim < 1:
            raise CompressionError(f"dimension must be positive, got {self.dim}")
        if self.kind in (CompressorKind.DET_QUANT, CompressorKind.STOCH_QUANT) and self.bits < 1:
            raise CompressionError(f"quantizer needs bits >= 1, got {self.bits}")
        if self.kind is CompressorKind.TOP_K and not (1 <= self.k <= self.dim):
            raise CompressionError(f"top_k needs 1 <= k <= {self.dim}, got {self.k}")

    @property
    def unbiased(self) -> bool:
        return self.kind in (CompressorKind.IDENTITY, CompressorKind.STOCH_QUANT)

    @property
    def stochastic(self) -> bool:
        return self.kind is CompressorKind.STOCH_QUANT

    @property
    def delta_bound(self) -> Optional[float]:
        """Analytic upper bound on E||x - C(x)||^2 / ||x||^2, None when it is not below 1"""
        d = self.dim
        if self.kind is CompressorKind.IDENTITY:
            return 0.0
        if self.kind is CompressorKind.TOP_K:
            return 1.0 - self.k / d
        if self.kind is CompressorKind.DET_QUANT:
            bound = d / (2 ** self.bits - 1) ** 2
        else:
            # stochastic rounding: per-coordinate variance <= step^2 / 4
            bound = d / 4.0 ** self.bits
        return bound if bound < 1.0 else None

    @property
    def message_bits(self) -> int:
        d = self.dim
        if self.kind is CompressorKind.IDENTITY:
            return SCALAR_BITS * d
        if self.kind is CompressorKind.DET_QUANT:
            return SCALAR_BITS + self.bits * d
        if self.kind is CompressorKind.STOCH_QUANT:
            return SCALAR_BITS + (self.bits + 1) * d
        index_bits = math.ceil(math.log2(d)) if d > 1 else 0
        return SCALAR_BITS * self.k + index_bits * self.k

    def describe(self) -> str:
        if self.kind in (CompressorKind.DET_QUANT, CompressorKind.STOCH_QUANT):
            return f"{self.kind.value}(b={self.bits})"
        if self.kind is CompressorKind.TOP_K:
            return f"top_k(k={self.k})"
        return "identity"


@dataclass(frozen=True, eq=False)
class CompressedMessage:
    payload: np.ndarray
    bits: int


def make_compressor(kind: str, dim: int, bits: int = 2, k: int = 1) -> Compressor:
    try:
        ckind = CompressorKind(kind)
    except ValueError:
        choices = ", ".join(c.value for c in CompressorKind)
        raise CompressionError(f"unknown compressor {kind!r} (choose from {choices})")
    if ckind in (CompressorKind.DET_QUANT, CompressorKind.STOCH_QUANT):
        return Compressor(kind=ckind, dim=dim, bits=bits)
    if ckind is CompressorKind.TOP_K:
        return Compressor(kind=ckind, dim=dim, k=k)
    return Compressor(kind=ckind, dim=dim)


def agent_stream(seed: int, replica: int, agent: int, iteration: int) -> np.random.Generator:
    """Counter-based stream: identical draws whatever the execution order"""
    return np.random.default_rng([seed, replica, agent, iteration])


# ---------------------------------------------------------------------------
# Operators

def _det_quant(x: np.ndarray, bits: int) -> np.ndarray:
    scale = np.max(np.abs(x))
    if scale == 0.0:
        return np.zeros_like(x)
    levels = 2 ** bits - 1
    # q = floor((x + s) / tau + 1/2) with tau = 2s / levels
    q = np.floor((x / scale + 1.0) * (levels / 2.0) + 0.5)
    q = np.clip(q, 0, levels)
    # q tau - s written so the extreme levels reproduce +-s exactly
    return scale * (2.0 * q / levels - 1.0)


def _stoch_quant(x: np.ndarray, bits: int, u: np.ndarray) -> np.ndarray:
    """u has shape (..., d); the result broadcasts over the leading axes"""
    scale = np.max(np.abs(x))
    if scale == 0.0:
        return np.zeros(np.broadcast_shapes(x.shape, u.shape))
    half = 2.0 ** (bits - 1)
    step = scale / half
    return step * np.sign(x) * np.floor(half * np.abs(x) / scale + u)


def _top_k(x: np.ndarray, k: int) -> np.ndarray:
    # stable sort keeps the lowest index first among equal magnitudes
    keep = np.argsort(-np.abs(x), kind='stable')[:k]
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out


def _check_input(c: Compressor, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != c.dim:
        raise CompressionError(f"input has dimension {x.shape[0]}, compressor expects {c.dim}")
    if not np.all(np.isfinite(x)):
        raise CompressionError("cannot compress a non-finite vector")
    return x


def compress(c: Compressor, x, rng: Optional[np.random.Generator] = None) -> CompressedMessage:
    x = _check_input(c, x)
    if c.kind is CompressorKind.IDENTITY:
        payload = x.copy()
    elif c.kind is CompressorKind.DET_QUANT:
        payload = _det_quant(x, c.bits)
    elif c.kind is CompressorKind.STOCH_QUANT:
        if rng is None:
            raise CompressionError("stochastic quantizer needs a random stream")
        # random() samples [0, 1) so an integral argument never rounds up
        payload = _stoch_quant(x, c.bits, rng.random(c.dim))
    else:
        payload = _top_k(x, c.k)
    return CompressedMessage(payload=payload, bits=c.message_bits)


def compress_draws(c: Compressor, x, rng: Optional[np.random.Generator], draws: int) -> np.ndarray:
    """draws x d matrix of independent compressions of the same x"""
    x = _check_input(c, x)
    if c.kind is CompressorKind.STOCH_QUANT:
        return _stoch_quant(x, c.bits, rng.random((draws, c.dim)))
    return np.tile(compress(c, x).payload, (draws, 1))


# ---------------------------------------------------------------------------
# Estimators

@dataclass
class DeltaEstimate:
    delta_hat: float        # max ratio over sampled inputs
    mean_ratio: float
    half_width: float       # 3 sigma Monte-Carlo error of the maximizing ratio
    trials: int
    skipped: int


@dataclass
class BiasReport:
    bias: np.ndarray
    bias_norm: float
    band: float             # 3 sigma statistical band on the bias norm
    passed: bool


def gaussian_sampler(dim: int) -> Callable[[np.random.Generator], np.ndarray]:
    return lambda rng: rng.standard_normal(dim)


def empirical_delta(c: Compressor, sampler: Callable[[np.random.Generator], np.ndarray],
                    trials: int, rng: np.random.Generator,
                    inner: int = INNER_DRAWS) -> DeltaEstimate:
    if trials < 100:
        raise CompressionError(f"empirical delta needs at least 100 trials, got {trials}")
    ratios = []
    errors = []
    skipped = 0
    for _ in range(trials):
        x = np.asarray(sampler(rng), dtype=float)
        norm2 = float(x @ x)
        if norm2 == 0.0:
            skipped += 1
            continue
        if c.stochastic:
            out = compress_draws(c, x, rng, inner)
            sq = np.sum((out - x) ** 2, axis=1) / norm2
            ratios.append(float(sq.mean()))
            errors.append(3.0 * float(sq.std(ddof=1)) / math.sqrt(inner))
        else:
            err = x - compress(c, x).payload
            ratios.append(float(err @ err) / norm2)
            errors.append(0.0)
    if not ratios:
        raise CompressionError("sampler produced only zero vectors")
    worst = int(np.argmax(ratios))
    return DeltaEstimate(
        delta_hat=ratios[worst],
        mean_ratio=float(np.mean(ratios)),
        half_width=errors[worst],
        trials=len(ratios),
        skipped=skipped,
    )


def check_unbiased(c: Compressor, x, trials: int, rng: np.random.Generator) -> BiasReport:
    if trials < 1000:
        raise CompressionError(f"bias check needs at least 1000 trials, got {trials}")
    x = _check_input(c, x)
    if not c.stochastic:
        bias = compress(c, x).payload - x
        norm = float(np.linalg.norm(bias))
        return BiasReport(bias=bias, bias_norm=norm, band=0.0, passed=norm == 0.0)
    out = compress_draws(c, x, rng, trials)
    bias = out.mean(axis=0) - x
    band = 3.0 * math.sqrt(float(out.var(axis=0, ddof=1).sum()) / trials)
    norm = float(np.linalg.norm(bias))
    return BiasReport(bias=bias, bias_norm=norm, band=band, passed=norm <= band)
