"""End-to-end conversion session: chunk scheduler, pitch rescaling, speaker
hot-swap, and latency accounting.

The streaming path is frontend -> source decode -> EMA inversion -> artic
assembly -> vocoder, all stateful. An offline path with full-utterance
framing runs the same math and serves as the equivalence oracle and the CLI
backend. Output keeps one sample out per sample in; the constant algorithmic
delay equals the frontend lookahead, realized as two leading zero chunks.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import artic, engine, frontend, source, vocoder, weights as weights_mod
from .errors import ChunkSizeError, DataError, ParameterError, StateError
from .frontend import CHUNK_SAMPLES, FrameSpec, StreamFramer
from .graphs import (
    EMA_INVERTER,
    PIPELINE_MODELS,
    SOURCE_EXTRACTOR,
    VOCODER_ENCODER,
    VOCODER_POST,
    ModelGraph,
    default_registry,
    load_registry,
)
from .speaker import FilmParams, SpeakerEmbedding, film as make_film
from .weights import WeightBundle


@dataclass
class PipelineConfig:
    frame_spec: FrameSpec = field(default_factory=FrameSpec)
    chunk_ms: int = 15
    # model name -> {"graph": registry name, "weights": path or "random:<seed>"}
    graphs: dict[str, dict] = field(default_factory=dict)
    registry_path: str | None = None  # None selects the builtin registry
    default_median_hz: float = source.DEFAULT_MEDIAN_HZ
    noise_seed: int = 2024
    debug_tap_dir: str | None = None

    def __post_init__(self):
        chunk = self.chunk_samples
        if chunk <= 0 or chunk % self.frame_spec.hop:
            raise ParameterError("chunk must be a whole number of hops")
        if self.default_median_hz <= 0:
            raise ParameterError("default median must be positive")

    @property
    def chunk_samples(self) -> int:
        return self.chunk_ms * self.frame_spec.sample_rate // 1000

    @property
    def lookahead_ms(self) -> float:
        return 1000.0 * self.frame_spec.lookahead / self.frame_spec.sample_rate

    def to_dict(self) -> dict:
        return {
            "frame_spec": self.frame_spec.to_dict(),
            "chunk_ms": self.chunk_ms,
            "graphs": self.graphs,
            "registry": self.registry_path or "builtin",
            "default_median_hz": self.default_median_hz,
            "noise_seed": self.noise_seed,
            "debug_tap_dir": self.debug_tap_dir,
        }


# Default desk-scale weights: an untrained draw picked so speech-like input
# exercises both the voiced and unvoiced paths.
DEFAULT_WEIGHTS_REF = "random:24"


def default_config(weights_ref: str = DEFAULT_WEIGHTS_REF) -> PipelineConfig:
    graphs = {name: {"graph": name, "weights": weights_ref} for name in default_registry()}
    return PipelineConfig(graphs=graphs)


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    registry = doc.get("registry", "builtin")
    return PipelineConfig(
        frame_spec=FrameSpec.from_dict(doc["frame_spec"]) if "frame_spec" in doc else FrameSpec(),
        chunk_ms=doc.get("chunk_ms", 15),
        graphs=doc.get("graphs", default_config().graphs),
        registry_path=None if registry in (None, "builtin") else registry,
        default_median_hz=doc.get("default_median_hz", source.DEFAULT_MEDIAN_HZ),
        noise_seed=doc.get("noise_seed", 2024),
        debug_tap_dir=doc.get("debug_tap_dir"),
    )


def save_config(config: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class Models:
    """Graphs plus one merged weight bundle, shared read-only by sessions."""

    graphs: dict[str, ModelGraph]
    weights: WeightBundle

    def graph(self, name: str) -> ModelGraph:
        if name not in self.graphs:
            raise ParameterError(f"no model named {name!r} in the pipeline config")
        return self.graphs[name]


def build_models(config: PipelineConfig, base_dir: str | None = None) -> Models:
    """Materialize the graphs and weights a config references.

    A weights ref is either a bundle path (resolved against the config's
    directory) or "random:<seed>" for deterministic desk-scale weights."""
    registry = (
        default_registry()
        if config.registry_path is None
        else load_registry(_resolve(config.registry_path, base_dir))
    )
    graphs: dict[str, ModelGraph] = {}
    merged: dict[str, np.ndarray] = {}
    bundle_cache: dict[str, WeightBundle] = {}
    for name, ref in config.graphs.items():
        graph_name = ref.get("graph", name)
        if graph_name not in registry:
            raise ParameterError(f"registry has no graph {graph_name!r}")
        graph = registry[graph_name]
        graphs[name] = graph
        wref = ref.get("weights", "random:0")
        if isinstance(wref, str) and wref.startswith("random:"):
            bundle = weights_mod.random_init(graph, int(wref.split(":", 1)[1]))
        else:
            path = _resolve(wref, base_dir)
            if path not in bundle_cache:
                bundle_cache[path] = weights_mod.load_file(path)
            bundle = bundle_cache[path]
        bundle.validate_for(graph)
        for tname, shape in graph.tensor_shapes().items():
            merged[tname] = bundle.require(tname, shape)
    return Models(graphs, WeightBundle(tensors=merged))


def _resolve(path: str, base_dir: str | None) -> str:
    if base_dir and not os.path.isabs(path):
        return os.path.join(base_dir, path)
    return path


@dataclass
class LatencyReport:
    """End-to-end latency decomposition: lookahead + chunk + processing."""

    t_lookahead_ms: float
    t_chunksize_ms: float
    t_processing_ms: float
    t_processing_p95_ms: float
    total_ms: float
    rtf: float
    chunks: int = 0
    overruns: int = 0

    def as_dict(self) -> dict:
        return {
            "t_lookahead_ms": self.t_lookahead_ms,
            "t_chunksize_ms": self.t_chunksize_ms,
            "t_processing_ms": self.t_processing_ms,
            "t_processing_p95_ms": self.t_processing_p95_ms,
            "total_ms": self.total_ms,
            "rtf": self.rtf,
            "chunks": self.chunks,
            "overruns": self.overruns,
        }


class Session:
    """One live conversion stream. Strictly sequential; owns all its state."""

    def __init__(
        self,
        config: PipelineConfig,
        models: Models,
        embedding: SpeakerEmbedding | None = None,
        m_tgt_hz: float | None = None,
        artic_tap=None,
    ):
        self.config = config
        self.models = models
        self.framer = StreamFramer(config.frame_spec)
        self._source_state = engine.make_stream_state(models.graph(SOURCE_EXTRACTOR))
        self._ema_state = engine.make_stream_state(models.graph(EMA_INVERTER))
        self._enc_state = engine.make_stream_state(models.graph(VOCODER_ENCODER))
        self._synth = vocoder.make_synth_state(models.graph(VOCODER_POST), config.noise_seed)
        self.median = source.RunningMedianState(default_hz=config.default_median_hz)
        self._film: FilmParams | None = None
        self._m_tgt: float | None = None
        self._pending_swap: tuple[SpeakerEmbedding, float] | None = None
        self._out_buf = np.zeros(0, dtype=np.float32)
        self.chunks_processed = 0
        self.frames_processed = 0
        self.overruns = 0
        self.processing_ms: list[float] = []
        self.artic_tap = artic_tap
        self._tap_dir = config.debug_tap_dir
        if self._tap_dir:
            os.makedirs(self._tap_dir, exist_ok=True)
        if embedding is not None:
            if m_tgt_hz is None:
                raise ParameterError("a target embedding needs its pitch median")
            self._apply_speaker(embedding, m_tgt_hz)

    @property
    def has_speaker(self) -> bool:
        return self._film is not None

    @property
    def m_tgt_hz(self) -> float | None:
        return self._m_tgt

    def swap_speaker(self, embedding: SpeakerEmbedding, m_tgt_hz: float) -> None:
        """Stage a target-speaker change; it takes effect at the next chunk
        boundary. Conv states are kept so audio stays continuous."""
        if m_tgt_hz <= 0:
            raise ParameterError("target median must be positive")
        self._pending_swap = (embedding, float(m_tgt_hz))

    def _apply_speaker(self, embedding: SpeakerEmbedding, m_tgt_hz: float) -> None:
        self._film = make_film(embedding, self.models.graphs, self.models.weights)
        self._m_tgt = float(m_tgt_hz)

    def process_chunk(self, chunk) -> np.ndarray:
        """Convert one 15 ms chunk; returns exactly one chunk of output."""
        x = np.asarray(chunk)
        if x.size != self.config.chunk_samples:
            raise ChunkSizeError(
                f"chunk must be {self.config.chunk_samples} samples, got {x.size}"
            )
        return self.process(x)

    def process(self, samples) -> np.ndarray:
        """Convert a block of whole chunks; one sample out per sample in."""
        x = np.asarray(samples, dtype=np.float32).ravel()
        if x.size == 0 or x.size % self.config.chunk_samples:
            raise ChunkSizeError(
                f"block must be a positive multiple of {self.config.chunk_samples} samples"
            )
        if not np.isfinite(x).all():
            raise DataError("audio block contains NaN or inf")
        if self._film is None:
            raise StateError("no target speaker set")

        if self._pending_swap is not None:
            self._apply_speaker(*self._pending_swap)
            self._pending_swap = None

        t0 = time.perf_counter()
        frames: list[frontend.SpectralFrame] = []
        chunk = self.config.chunk_samples
        for off in range(0, x.size, chunk):
            frames.extend(self.framer.push(x[off : off + chunk]))
        if frames:
            audio = self._process_frames(frames)
            self._out_buf = np.concatenate([self._out_buf, audio.astype(np.float32)])
        elapsed_ms = (time.perf_counter() - t0) * 1000.0

        n_chunks = x.size // chunk
        self.chunks_processed += n_chunks
        per_chunk = elapsed_ms / n_chunks
        self.processing_ms.extend([per_chunk] * n_chunks)
        if per_chunk > self.config.chunk_ms:
            self.overruns += n_chunks

        need = x.size
        if self._out_buf.size >= need:
            out, self._out_buf = self._out_buf[:need], self._out_buf[need:]
            return out
        # Stream start: synthesis has not caught up with the lookahead yet.
        pad = np.zeros(need - self._out_buf.size, dtype=np.float32)
        out = np.concatenate([pad, self._out_buf])
        self._out_buf = np.zeros(0, dtype=np.float32)
        return out

    def _process_frames(self, frames: list[frontend.SpectralFrame]) -> np.ndarray:
        models = self.models
        mel = np.stack([f.mel for f in frames]).astype(np.float32)
        mfcc = np.stack([f.mfcc for f in frames]).astype(np.float32)

        heads = engine.infer_streaming(
            models.graph(SOURCE_EXTRACTOR), models.weights, self._source_state, mel
        )
        ema = artic.invert_frames(
            mfcc, models.graph(EMA_INVERTER), models.weights, self._ema_state
        )

        n = mel.shape[0]
        artic_mat = np.empty((n, artic.ARTIC_DIM))
        for i in range(n):
            feat = source.decode_frame(
                {
                    "pitch": heads["pitch"][i],
                    "periodicity": heads["periodicity"][i],
                    "loudness": heads["loudness"][i],
                }
            )
            m_src = source.update_median(self.median, feat)
            rescaled = source.rescale_pitch(feat.f0, m_src, self._m_tgt)
            artic_mat[i, artic.F0_COLUMN] = rescaled
            artic_mat[i, artic.PERIODICITY_COLUMN] = feat.periodicity
            artic_mat[i, artic.LOUDNESS_COLUMN] = feat.loudness
            artic_mat[i, artic.EMA_COLUMNS] = ema[i]

        control_tap = None
        if self.artic_tap is not None:
            self.artic_tap(artic_mat.copy())
        if self._tap_dir:
            artic.save_ema0(
                artic_mat, 200,
                os.path.join(self._tap_dir, f"chunk_{self.chunks_processed:06d}.ema0"),
            )
            control_tap = lambda controls: artic.save_ema0(  # noqa: E731
                controls, 200,
                os.path.join(self._tap_dir, f"controls_{self.chunks_processed:06d}.ema0"),
            )

        self.frames_processed += n
        return vocoder.synth_chunk(
            artic_mat, self._film, models.graphs, models.weights,
            self._synth, encoder_state=self._enc_state, control_tap=control_tap,
        )

    def stats(self) -> dict:
        mean = float(np.mean(self.processing_ms)) if self.processing_ms else 0.0
        return {
            "chunks": self.chunks_processed,
            "frames": self.frames_processed,
            "overruns": self.overruns,
            "mean_processing_ms": mean,
            "rtf": mean / self.config.chunk_ms if self.processing_ms else 0.0,
            "buffered_output": int(self._out_buf.size),
        }


@dataclass
class ConversionDiagnostics:
    """Per-frame taps collected during offline conversion."""

    f0_source: np.ndarray
    f0_rescaled: np.ndarray
    periodicity: np.ndarray
    voiced: np.ndarray
    artic: np.ndarray


def convert_offline(
    signal,
    embedding: SpeakerEmbedding,
    m_tgt_hz: float,
    config: PipelineConfig,
    models: Models,
    collect_diagnostics: bool = False,
):
    """Whole-utterance conversion with the same math as the streaming path.

    Returns the converted signal (length = frames * hop, i.e. the input
    length rounded up to a hop), plus diagnostics when asked."""
    if m_tgt_hz <= 0:
        raise ParameterError("target median must be positive")
    x = np.asarray(signal, dtype=np.float64).ravel()
    frames = frontend.frame_offline(x, config.frame_spec)
    if not frames:
        raise ParameterError("signal is empty")
    mel = np.stack([f.mel for f in frames]).astype(np.float32)
    mfcc = np.stack([f.mfcc for f in frames]).astype(np.float32)

    heads = engine.infer_offline(models.graph(SOURCE_EXTRACTOR), models.weights, mel)
    ema = artic.invert_frames(mfcc, models.graph(EMA_INVERTER), models.weights)

    median = source.RunningMedianState(default_hz=config.default_median_hz)
    n = mel.shape[0]
    artic_mat = np.empty((n, artic.ARTIC_DIM))
    f0_src = np.empty(n)
    per = np.empty(n)
    for i in range(n):
        feat = source.decode_frame(
            {
                "pitch": heads["pitch"][i],
                "periodicity": heads["periodicity"][i],
                "loudness": heads["loudness"][i],
            }
        )
        m_src = source.update_median(median, feat)
        rescaled = source.rescale_pitch(feat.f0, m_src, m_tgt_hz)
        f0_src[i] = feat.f0
        per[i] = feat.periodicity
        artic_mat[i, artic.F0_COLUMN] = rescaled
        artic_mat[i, artic.PERIODICITY_COLUMN] = feat.periodicity
        artic_mat[i, artic.LOUDNESS_COLUMN] = feat.loudness
        artic_mat[i, artic.EMA_COLUMNS] = ema[i]

    film_params = make_film(embedding, models.graphs, models.weights)
    synth = vocoder.make_synth_state(models.graph(VOCODER_POST), config.noise_seed)
    audio = vocoder.synth_chunk(
        artic_mat, film_params, models.graphs, models.weights, synth, encoder_state=None
    ).astype(np.float32)

    if not collect_diagnostics:
        return audio
    diag = ConversionDiagnostics(
        f0_source=f0_src,
        f0_rescaled=artic_mat[:, artic.F0_COLUMN].copy(),
        periodicity=per,
        voiced=per >= source.VOICING_THRESHOLD,
        artic=artic_mat,
    )
    return audio, diag


# Constant part of the latency identity: lookahead + chunk, in ms.
def floor_latency_ms(config: PipelineConfig) -> float:
    return config.lookahead_ms + float(config.chunk_ms)


def stream_delay_samples(config: PipelineConfig) -> int:
    """Leading zeros in the emitted stream: the lookahead rounded up to whole
    chunks, minus the chunk that produces the first frames. Streaming output
    equals this many zeros followed by the offline conversion."""
    chunk = config.chunk_samples
    first_ready_chunk = -(-(config.frame_spec.lookahead + 1) // chunk)
    return (first_ready_chunk - 1) * chunk


def _report_from_times(config: PipelineConfig, times_ms, overruns: int = 0) -> LatencyReport:
    times = np.asarray(times_ms, dtype=np.float64)
    mean = float(times.mean())
    p95 = float(np.percentile(times, 95))
    return LatencyReport(
        t_lookahead_ms=config.lookahead_ms,
        t_chunksize_ms=float(config.chunk_ms),
        t_processing_ms=mean,
        t_processing_p95_ms=p95,
        total_ms=config.lookahead_ms + float(config.chunk_ms) + mean,
        rtf=mean / float(config.chunk_ms),
        chunks=int(times.size),
        overruns=overruns,
    )


def measure_latency(session: Session, test_signal, repetitions: int = 1) -> LatencyReport:
    """Wall-clock the per-chunk processing time over a test signal.

    Lookahead and chunk terms come from configuration; only processing is
    measured (monotonic clock around the full chunk path)."""
    x = np.asarray(test_signal, dtype=np.float32).ravel()
    chunk = session.config.chunk_samples
    n_chunks = x.size // chunk
    if n_chunks < 100:
        raise ParameterError("latency measurement needs at least 100 chunks")
    if repetitions < 1:
        raise ParameterError("repetitions must be positive")
    times: list[float] = []
    overruns = 0
    for _ in range(repetitions):
        for c in range(n_chunks):
            t0 = time.perf_counter()
            session.process_chunk(x[c * chunk : (c + 1) * chunk])
            dt = (time.perf_counter() - t0) * 1000.0
            times.append(dt)
            if dt > session.config.chunk_ms:
                overruns += 1
    return _report_from_times(session.config, times, overruns)


def mock_latency_report(config: PipelineConfig, processing_ms: float) -> LatencyReport:
    """Latency arithmetic with an injected processing time; no pipeline runs."""
    if processing_ms < 0:
        raise ParameterError("processing time cannot be negative")
    return _report_from_times(config, [processing_ms])
