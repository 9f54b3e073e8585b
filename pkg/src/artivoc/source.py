"""Decoding of the source network heads: pitch, periodicity, loudness.

Pitch decoding follows the frequency-bin classification scheme: the head
emits a posterior over log-spaced bins and the decoded frequency is a local
weighted average of bin cent values around the argmax. A running median of
voiced pitch supports conversion-time rescaling.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .engine import sigmoid, softmax
from .errors import DecodeError, GraphMismatchError, ParameterError

# Bins averaged on each side of the argmax.
DECODE_RADIUS = 4
VOICING_THRESHOLD = 0.5
DEFAULT_MEDIAN_HZ = 150.0


@dataclass(frozen=True)
class PitchGrid:
    """Log-spaced frequency bins: bin k sits k*cents_per_bin cents above f_min."""

    n_bins: int = 360
    f_min: float = 32.70
    cents_per_bin: float = 20.0

    def bin_hz(self, k) -> np.ndarray:
        return self.f_min * 2.0 ** (np.asarray(k, dtype=np.float64) * self.cents_per_bin / 1200.0)

    def bin_cents(self, k) -> np.ndarray:
        return np.asarray(k, dtype=np.float64) * self.cents_per_bin

    def cents_to_hz(self, cents) -> float:
        return float(self.f_min * 2.0 ** (np.asarray(cents, dtype=np.float64) / 1200.0))

    @property
    def f_max(self) -> float:
        return float(self.bin_hz(self.n_bins - 1))


DEFAULT_GRID = PitchGrid()


@dataclass
class SourceFeatures:
    """Per-frame laryngeal source description."""

    f0: float
    periodicity: float
    voiced: bool
    loudness: float


def decode_pitch(posterior, grid: PitchGrid = DEFAULT_GRID) -> float:
    """Decode Hz from a pitch-bin posterior.

    Takes the weighted average of bin cent values over a window of
    DECODE_RADIUS bins around the argmax, then converts cents to Hz.
    Scale-invariant in the posterior; exact at one-hot inputs.
    """
    p = np.asarray(posterior, dtype=np.float64).ravel()
    if p.size != grid.n_bins:
        raise ParameterError(f"posterior must have {grid.n_bins} bins, got {p.size}")
    if (p < 0).any() or not np.isfinite(p).all():
        raise ParameterError("posterior entries must be finite and non-negative")
    if not (p > 0).any():
        raise DecodeError("all-zero posterior carries no pitch evidence")
    k_star = int(np.argmax(p))
    lo = max(0, k_star - DECODE_RADIUS)
    hi = min(grid.n_bins, k_star + DECODE_RADIUS + 1)
    w = p[lo:hi]
    cents = grid.bin_cents(np.arange(lo, hi))
    return grid.cents_to_hz(np.dot(w, cents) / w.sum())


def decode_frame(
    head_outputs: dict,
    grid: PitchGrid = DEFAULT_GRID,
    voicing_threshold: float = VOICING_THRESHOLD,
) -> SourceFeatures:
    """Turn raw head outputs for one frame into SourceFeatures.

    Pitch logits go through a softmax then the weighted-average decode;
    periodicity through a logistic squash; loudness is clamped at zero.
    Unvoiced frames report f0 = 0.
    """
    for head in ("pitch", "periodicity", "loudness"):
        if head not in head_outputs:
            raise GraphMismatchError(f"missing head {head!r}")
    logits = np.asarray(head_outputs["pitch"], dtype=np.float64).ravel()
    periodicity = float(sigmoid(np.asarray([float(np.ravel(head_outputs["periodicity"])[0])]))[0])
    loudness = max(0.0, float(np.ravel(head_outputs["loudness"])[0]))
    voiced = periodicity >= voicing_threshold
    f0 = decode_pitch(softmax(logits), grid) if voiced else 0.0
    return SourceFeatures(f0=f0, periodicity=periodicity, voiced=voiced, loudness=loudness)


@dataclass
class RunningMedianState:
    """Exact running median over all voiced f0 values seen so far.

    Two-heap scheme: ``lower`` is a max-heap (negated values), ``upper`` a
    min-heap, sizes kept within one of each other.
    """

    default_hz: float = DEFAULT_MEDIAN_HZ
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.lower) + len(self.upper)

    def insert(self, value: float) -> None:
        if not self.lower or value <= -self.lower[0]:
            heapq.heappush(self.lower, -value)
        else:
            heapq.heappush(self.upper, value)
        if len(self.lower) > len(self.upper) + 1:
            heapq.heappush(self.upper, -heapq.heappop(self.lower))
        elif len(self.upper) > len(self.lower):
            heapq.heappush(self.lower, -heapq.heappop(self.upper))

    def median(self) -> float:
        if self.count == 0:
            return self.default_hz
        if len(self.lower) > len(self.upper):
            return -self.lower[0]
        return (-self.lower[0] + self.upper[0]) / 2.0


def update_median(state: RunningMedianState, feat: SourceFeatures) -> float:
    """Fold one frame into the running pitch median; unvoiced frames are
    skipped. Returns the current median (the configured default before any
    voiced frame has been seen)."""
    if feat.voiced:
        state.insert(feat.f0)
    return state.median()


def rescale_pitch(f0: float, m_src: float, m_tgt: float) -> float:
    """Move a pitch value into the target range: f0 * m_tgt / m_src.

    The ratio is formed first so equal medians give exact identity; zero
    (unvoiced) stays zero."""
    if m_src <= 0 or m_tgt <= 0:
        raise ParameterError("pitch medians must be positive")
    return f0 * (m_tgt / m_src)
