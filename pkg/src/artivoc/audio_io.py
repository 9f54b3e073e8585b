"""16-bit PCM mono WAV I/O and sample-format conversion."""

from __future__ import annotations

import wave

import numpy as np

from .errors import DataError, FormatError

S16_SCALE = 32768.0


def f32_to_s16(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataError("samples contain NaN or inf")
    q = np.round(x * S16_SCALE)
    return np.clip(q, -32768, 32767).astype(np.int16)


def s16_to_f32(samples) -> np.ndarray:
    return (np.asarray(samples, dtype=np.int16).astype(np.float32)) / np.float32(S16_SCALE)


def write_wav(path, samples, sample_rate: int = 16000) -> None:
    pcm = f32_to_s16(samples)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM WAV; multi-channel input is averaged to mono."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise FormatError("only 16-bit PCM WAV is supported")
        rate = wf.getframerate()
        channels = wf.getnchannels()
        raw = wf.readframes(wf.getnframes())
    data = np.frombuffer(raw, dtype="<i2")
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return s16_to_f32(data), rate
