"""Streaming spectral frontend: centered mel/MFCC frames at a 200 Hz rate.

Frame i is centered on sample ``i * hop``. Centering is realized with real
lookahead of half a window in steady state; reflection padding is used only
for the first frames of a stream, where no past audio exists yet. An offline
framer with identical math serves as the equivalence oracle and as the
backend for whole-utterance conversion.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ChunkSizeError, DataError, ParameterError

# 15 ms at 16 kHz, the unit of streaming.
CHUNK_SAMPLES = 240

# Additive floor before log compression so silence stays finite.
LOG_FLOOR = 1e-5

FEATURE_RATE_HZ = 200


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class FrameSpec:
    """Framing and filterbank parameters shared by every feature consumer."""

    sample_rate: int = 16000
    window: int = 1024
    hop: int = 80
    mel_bins: int = 80
    mfcc_coeffs: int = 20
    fmin: float = 0.0
    fmax: float = 8000.0

    def __post_init__(self):
        if self.hop <= 0 or self.sample_rate != FEATURE_RATE_HZ * self.hop:
            raise ParameterError(
                f"hop must be sample_rate/{FEATURE_RATE_HZ} exactly, got hop={self.hop}"
            )
        if self.window <= 0 or self.window & (self.window - 1):
            raise ParameterError(f"window must be a power of two, got {self.window}")
        if self.window < 2 * self.hop:
            raise ParameterError("window must cover at least two hops")
        if not 0.0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ParameterError("need 0 <= fmin < fmax <= Nyquist")
        if not 0 < self.mfcc_coeffs <= self.mel_bins:
            raise ParameterError("mfcc_coeffs must be in (0, mel_bins]")

    @property
    def lookahead(self) -> int:
        """Future samples needed beyond a frame center: half the window."""
        return self.window // 2

    @property
    def frame_rate(self) -> int:
        return self.sample_rate // self.hop

    @property
    def n_fft_bins(self) -> int:
        return self.window // 2 + 1

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "window": self.window,
            "hop": self.hop,
            "mel_bins": self.mel_bins,
            "mfcc_coeffs": self.mfcc_coeffs,
            "fmin": self.fmin,
            "fmax": self.fmax,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameSpec":
        return cls(**d)


@dataclass
class SpectralFrame:
    """One centered analysis frame: linear magnitude, log-mel, and MFCC."""

    index: int
    mel: np.ndarray
    mfcc: np.ndarray
    lin_mag: np.ndarray


@lru_cache(maxsize=8)
def mel_filterbank(spec: FrameSpec) -> np.ndarray:
    """Triangular mel filterbank, shape [mel_bins, window/2 + 1].

    The first filter's lower edge and the last filter's upper edge overhang
    the [fmin, fmax] band by one mel step so that the FFT bins sitting exactly
    on the band edges keep nonzero weight.
    """
    freqs = np.fft.rfftfreq(spec.window, d=1.0 / spec.sample_rate)
    pts = np.linspace(_hz_to_mel(spec.fmin), _hz_to_mel(spec.fmax), spec.mel_bins + 2)
    step = pts[1] - pts[0]

    lo_mel = pts[: spec.mel_bins].copy()
    ctr_mel = pts[1 : spec.mel_bins + 1]
    hi_mel = pts[2 : spec.mel_bins + 2].copy()
    lo_mel[0] = pts[0] - step
    hi_mel[-1] = pts[-1] + step

    lo = _mel_to_hz(lo_mel)[:, None]
    ctr = _mel_to_hz(ctr_mel)[:, None]
    hi = _mel_to_hz(hi_mel)[:, None]

    rising = (freqs[None, :] - lo) / (ctr - lo)
    falling = (hi - freqs[None, :]) / (hi - ctr)
    return np.maximum(0.0, np.minimum(rising, falling))


@lru_cache(maxsize=8)
def dct_matrix(spec: FrameSpec) -> np.ndarray:
    """Orthonormal DCT-II matrix mapping log-mel to MFCC, [coeffs, mel_bins]."""
    n = spec.mel_bins
    i = np.arange(spec.mfcc_coeffs)[:, None]
    j = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * j + 1) * i / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] = np.sqrt(1.0 / n)
    return mat


@lru_cache(maxsize=8)
def _analysis_window(spec: FrameSpec) -> np.ndarray:
    n = np.arange(spec.window)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / spec.window)


def _analyze_block(windows: np.ndarray, spec: FrameSpec, first_index: int) -> list[SpectralFrame]:
    """FFT-analyze pre-sliced windows, shape [n, window], into frames."""
    fb = mel_filterbank(spec)
    dct = dct_matrix(spec)
    mags = np.abs(np.fft.rfft(windows * _analysis_window(spec), axis=-1))
    mels = np.log(mags @ fb.T + LOG_FLOOR)
    mfccs = mels @ dct.T
    return [
        SpectralFrame(first_index + k, mels[k], mfccs[k], mags[k])
        for k in range(windows.shape[0])
    ]


def loudness_label(frame: SpectralFrame) -> float:
    """Frame loudness label: the mean of the linear magnitude spectrum."""
    return float(frame.lin_mag.mean())


def frame_offline(signal, spec: FrameSpec = FrameSpec()) -> list[SpectralFrame]:
    """Frame a whole signal with reflection padding at both ends.

    Produces ceil(len/hop) frames; frame i is centered on sample i*hop. This
    is the reference the streaming framer must match on every prefix.
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    if x.size == 0:
        return []
    if not np.isfinite(x).all():
        raise DataError("signal contains NaN or inf")
    n_frames = -(-x.size // spec.hop)
    mode = "reflect" if x.size > 1 else "edge"
    padded = np.pad(x, spec.lookahead, mode=mode)
    windows = np.lib.stride_tricks.sliding_window_view(padded, spec.window)[:: spec.hop]
    return _analyze_block(np.ascontiguousarray(windows[:n_frames]), spec, 0)


class StreamFramer:
    """Incremental framer fed with fixed 240-sample chunks.

    Emits frame i as soon as sample ``i*hop + lookahead`` has been received,
    which is exactly when the frame's full centered window (plus the start
    reflection, for the first frames) is determined. Buffered audio stays
    bounded by one window plus one chunk.
    """

    def __init__(self, spec: FrameSpec = FrameSpec()):
        self.spec = spec
        self._buf = np.zeros(0, dtype=np.float64)
        self._buf_start = 0  # absolute sample index of _buf[0]
        self._received = 0
        self._next_frame = 0

    @property
    def emitted_frames(self) -> int:
        return self._next_frame

    @property
    def buffered_samples(self) -> int:
        return int(self._buf.size)

    def push(self, chunk) -> list[SpectralFrame]:
        x = np.asarray(chunk, dtype=np.float64).ravel()
        if x.size != CHUNK_SAMPLES:
            raise ChunkSizeError(f"chunk must be {CHUNK_SAMPLES} samples, got {x.size}")
        if not np.isfinite(x).all():
            raise DataError("chunk contains NaN or inf")

        self._buf = np.concatenate([self._buf, x])
        self._received += x.size

        spec = self.spec
        ready: list[np.ndarray] = []
        first = self._next_frame
        while self._received >= self._next_frame * spec.hop + spec.lookahead + 1:
            ready.append(self._window_for(self._next_frame))
            self._next_frame += 1

        # Drop samples that no future frame (or start reflection) can need.
        keep_from = max(0, self._next_frame * spec.hop - spec.lookahead)
        if keep_from > self._buf_start:
            self._buf = self._buf[keep_from - self._buf_start :]
            self._buf_start = keep_from

        if not ready:
            return []
        return _analyze_block(np.stack(ready), spec, first)

    def _window_for(self, i: int) -> np.ndarray:
        spec = self.spec
        lo = i * spec.hop - spec.lookahead
        hi = i * spec.hop + spec.lookahead
        if lo >= 0:
            return self._buf[lo - self._buf_start : hi - self._buf_start]
        # Start of stream: mirror samples 1..-lo, matching np.pad 'reflect'.
        left = self._buf[1 - self._buf_start : 1 - lo - self._buf_start][::-1]
        return np.concatenate([left, self._buf[0 - self._buf_start : hi - self._buf_start]])
