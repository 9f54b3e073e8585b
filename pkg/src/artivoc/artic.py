"""Articulatory feature assembly: EMA inversion output plus source features.

An ArticFrame is the 15-dim vocoder input at 200 Hz, laid out as
[f0, periodicity, loudness, ema x 12]. Raw f0 in Hz is kept in the frame;
the vocoder encoder sees a bounded log transform of it instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import DataError, FormatError, ParameterError, TruncationError
from .graphs import ARTIC_DIM, EMA_DIM, ModelGraph
from .source import SourceFeatures
from .weights import WeightBundle

# Normalized articulatory units are bounded; network output is clipped here.
EMA_CLAMP = 10.0

F0_COLUMN = 0
PERIODICITY_COLUMN = 1
LOUDNESS_COLUMN = 2
EMA_COLUMNS = slice(3, 3 + EMA_DIM)


@dataclass
class ArticFrame:
    """One 200 Hz frame of the disentangled representation."""

    f0: float
    periodicity: float
    loudness: float
    ema: np.ndarray

    def as_vector(self) -> np.ndarray:
        v = np.empty(ARTIC_DIM, dtype=np.float64)
        v[F0_COLUMN] = self.f0
        v[PERIODICITY_COLUMN] = self.periodicity
        v[LOUDNESS_COLUMN] = self.loudness
        v[EMA_COLUMNS] = self.ema
        return v

    @classmethod
    def from_vector(cls, v) -> "ArticFrame":
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.size != ARTIC_DIM:
            raise ParameterError(f"artic vector must have {ARTIC_DIM} dims, got {v.size}")
        return cls(
            f0=float(v[F0_COLUMN]),
            periodicity=float(v[PERIODICITY_COLUMN]),
            loudness=float(v[LOUDNESS_COLUMN]),
            ema=v[EMA_COLUMNS].copy(),
        )


def assemble(source: SourceFeatures, ema) -> ArticFrame:
    """Field-faithful combination of source features and one EMA frame."""
    ema = np.asarray(ema, dtype=np.float64).ravel()
    if ema.size != EMA_DIM:
        raise ParameterError(f"EMA frame must have {EMA_DIM} dims, got {ema.size}")
    return ArticFrame(
        f0=source.f0,
        periodicity=source.periodicity,
        loudness=source.loudness,
        ema=ema.copy(),
    )


def invert_frames(
    mfcc,
    graph: ModelGraph,
    weights: WeightBundle,
    state: engine.ConvStreamState | None = None,
) -> np.ndarray:
    """MFCC frames -> EMA trajectories, one frame out per frame in.

    Streams when given a state, otherwise runs the offline path. Output is
    clipped to the normalized-unit bound."""
    if state is None:
        out = engine.infer_offline(graph, weights, mfcc)
    else:
        out = engine.infer_streaming(graph, weights, state, mfcc)
    return np.clip(out["ema"], -EMA_CLAMP, EMA_CLAMP)


def interpolate_labels(ema_50hz) -> np.ndarray:
    """Linearly upsample EMA frames from 50 Hz to 200 Hz.

    N input frames become 4*(N-1)+1 output frames; inputs are reproduced
    exactly at every multiple of 4."""
    x = np.asarray(ema_50hz, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ParameterError("need at least 2 frames to interpolate")
    n = x.shape[0]
    out = np.empty((4 * (n - 1) + 1, x.shape[1]), dtype=np.float64)
    out[::4] = x
    for step in (1, 2, 3):
        frac = step / 4.0
        out[step::4] = x[:-1] * (1.0 - frac) + x[1:] * frac
    return out


def network_input(artic_matrix) -> np.ndarray:
    """Vocoder-encoder view of artic frames: f0 mapped to log1p(Hz)/6 so the
    pitch channel stays on the same scale as the rest."""
    m = np.asarray(artic_matrix, dtype=np.float64)
    out = m.astype(np.float32).copy()
    out[:, F0_COLUMN] = (np.log1p(m[:, F0_COLUMN]) / 6.0).astype(np.float32)
    return out


# Raw matrix fixture format: magic "EMA0", rows u32, cols u32, rate_hz u32,
# then little-endian f32 data in row-major order.
EMA_MAGIC = b"EMA0"


def save_ema0(matrix, rate_hz: int, path) -> None:
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ParameterError("EMA0 stores 2-D matrices")
    if not np.isfinite(m).all():
        raise DataError("EMA0 matrix contains NaN or inf")
    with open(path, "wb") as fh:
        fh.write(EMA_MAGIC)
        fh.write(struct.pack("<III", m.shape[0], m.shape[1], int(rate_hz)))
        fh.write(m.tobytes(order="C"))


def load_ema0(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise TruncationError("EMA0 header is 16 bytes")
    if data[:4] != EMA_MAGIC:
        raise FormatError("bad magic, not an EMA0 file")
    rows, cols, rate = struct.unpack("<III", data[4:16])
    need = 16 + 4 * rows * cols
    if len(data) < need:
        raise TruncationError(f"EMA0 payload needs {need} bytes, file has {len(data)}")
    m = np.frombuffer(data[16:need], dtype="<f4").reshape(rows, cols).copy()
    return m, rate
