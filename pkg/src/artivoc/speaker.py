"""Offline speaker enrollment and FiLM parameter generation.

Enrollment runs a strided conv frontend over raw audio (50 Hz features), a
dilated conv backbone on top, and pools the per-frame embeddings with the
periodicity track of the same utterance as weights. The pooled 128-d vector
conditions the vocoder through a FiLM affine map.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import engine, frontend, source
from .errors import (
    DataError,
    EnrollmentError,
    FormatError,
    GraphMismatchError,
    ParameterError,
    TruncationError,
)
from .graphs import (
    FILM,
    SOURCE_EXTRACTOR,
    SPEAKER_BACKBONE,
    SPEAKER_EMBED_DIM,
    SPEAKER_FRONTEND,
    ModelGraph,
)
from .weights import WeightBundle

MIN_ENROLL_SECONDS = 1.0


@dataclass
class SpeakerEmbedding:
    vec: np.ndarray
    source_id: str = ""


@dataclass
class FilmParams:
    gamma: np.ndarray
    beta: np.ndarray


@dataclass
class EnrollmentResult:
    """Embedding plus the statistics stored beside it."""

    embedding: SpeakerEmbedding
    median_f0_hz: float
    voiced_fraction: float


def pool_weighted(features, weights) -> np.ndarray:
    """Weighted time pooling: sum_t w_t x_t / sum_t w_t."""
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] < 1:
        raise ParameterError("features must be a non-empty [T, D] matrix")
    if w.size != x.shape[0]:
        raise ParameterError(f"{w.size} weights for {x.shape[0]} frames")
    if (w < 0).any():
        raise ParameterError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise EnrollmentError("all pooling weights are zero (no voiced content)")
    return (w @ x) / total


def _periodicity_track(signal, models: dict[str, ModelGraph], weights: WeightBundle,
                       spec: frontend.FrameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame (periodicity, f0) at 200 Hz from the source extractor."""
    frames = frontend.frame_offline(signal, spec)
    mel = np.stack([f.mel for f in frames]).astype(np.float32)
    heads = engine.infer_offline(models[SOURCE_EXTRACTOR], weights, mel)
    feats = [
        source.decode_frame(
            {"pitch": heads["pitch"][i], "periodicity": heads["periodicity"][i],
             "loudness": heads["loudness"][i]}
        )
        for i in range(mel.shape[0])
    ]
    per = np.array([f.periodicity for f in feats])
    f0 = np.array([f.f0 for f in feats])
    return per, f0


def _pool_weights_at_50hz(per_200hz: np.ndarray, n_frames_50hz: int) -> np.ndarray:
    """Average periodicity over groups of four 200 Hz frames to align with the
    50 Hz feature rate of the speaker frontend."""
    w = np.empty(n_frames_50hz, dtype=np.float64)
    for t in range(n_frames_50hz):
        seg = per_200hz[4 * t : 4 * t + 4]
        w[t] = seg.mean() if seg.size else per_200hz[-1]
    return w


def enroll(
    utterance,
    models: dict[str, ModelGraph],
    weights: WeightBundle,
    spec: frontend.FrameSpec = frontend.FrameSpec(),
    source_id: str = "",
) -> EnrollmentResult:
    """Compute a speaker embedding and pitch median from one utterance.

    Deterministic in (audio, weights). Raises if the utterance is shorter
    than one second or contains no voiced frame."""
    x = np.asarray(utterance, dtype=np.float32).ravel()
    if x.size < MIN_ENROLL_SECONDS * spec.sample_rate:
        raise ParameterError(
            f"enrollment needs at least {MIN_ENROLL_SECONDS:.0f} s of audio"
        )
    if not np.isfinite(x).all():
        raise DataError("utterance contains NaN or inf")

    feats_50hz = engine.infer_offline(models[SPEAKER_FRONTEND], weights, x[:, None])
    hidden = feats_50hz[engine.FEATURES_KEY]
    embed_frames = engine.infer_offline(models[SPEAKER_BACKBONE], weights, hidden)["embed"]

    per, f0 = _periodicity_track(x, models, weights, spec)
    voiced = per >= source.VOICING_THRESHOLD
    if not voiced.any():
        raise EnrollmentError("utterance has no voiced frames")
    pooled = pool_weighted(embed_frames, _pool_weights_at_50hz(per, embed_frames.shape[0]))
    median = float(np.median(f0[voiced]))
    return EnrollmentResult(
        embedding=SpeakerEmbedding(pooled.astype(np.float32), source_id),
        median_f0_hz=median,
        voiced_fraction=float(voiced.mean()),
    )


def film(embedding: SpeakerEmbedding, models: dict[str, ModelGraph],
         weights: WeightBundle) -> FilmParams:
    """Affine map from the speaker embedding to per-channel scale and shift.

    Zero parameters leave the modulated hidden unchanged (the convention is
    h * (1 + gamma) + beta)."""
    vec = np.asarray(embedding.vec, dtype=np.float32).ravel()
    if vec.size != SPEAKER_EMBED_DIM:
        raise GraphMismatchError(
            f"embedding must have {SPEAKER_EMBED_DIM} dims, got {vec.size}"
        )
    out = engine.infer_offline(models[FILM], weights, vec[None, :])
    return FilmParams(gamma=out["gamma"][0], beta=out["beta"][0])


# Embedding file: magic "SPKE", version u32, then 128 little-endian f32.
SPKE_MAGIC = b"SPKE"
SPKE_VERSION = 1


def save_embedding(embedding: SpeakerEmbedding, path) -> None:
    vec = np.ascontiguousarray(embedding.vec, dtype=np.float32)
    if vec.shape != (SPEAKER_EMBED_DIM,):
        raise ParameterError(f"embedding must be [{SPEAKER_EMBED_DIM}]")
    if not np.isfinite(vec).all():
        raise DataError("embedding contains NaN or inf")
    with open(path, "wb") as fh:
        fh.write(SPKE_MAGIC)
        fh.write(struct.pack("<I", SPKE_VERSION))
        fh.write(vec.tobytes(order="C"))


def load_embedding(path, source_id: str = "") -> SpeakerEmbedding:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise TruncationError("SPKE header is 8 bytes")
    if data[:4] != SPKE_MAGIC:
        raise FormatError("bad magic, not a speaker embedding file")
    (version,) = struct.unpack("<I", data[4:8])
    if version != SPKE_VERSION:
        raise FormatError(f"unsupported embedding version {version}")
    need = 8 + 4 * SPEAKER_EMBED_DIM
    if len(data) != need:
        raise TruncationError(f"embedding file must be {need} bytes, got {len(data)}")
    vec = np.frombuffer(data[8:], dtype="<f4").copy()
    return SpeakerEmbedding(vec, source_id)
