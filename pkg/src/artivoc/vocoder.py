"""DDSP harmonic-plus-noise vocoder driven by articulatory frames.

A causal conv encoder (FiLM-modulated mid-stack by the speaker embedding)
predicts per-frame controls; a sinusoidal harmonic bank and a filtered-noise
generator synthesize at 16 kHz; their sum passes through a causal post
convolution. Controls are upsampled from 200 Hz by linear interpolation, one
frame of delay, so the whole path streams chunk by chunk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .artic import network_input
from .errors import ParameterError
from .graphs import (
    HARMONICS,
    NOISE_BANDS,
    VOCODER_ENCODER,
    VOCODER_POST,
    ModelGraph,
)
from .speaker import FilmParams
from .weights import WeightBundle

SAMPLE_RATE = 16000
HOP = 80
NYQUIST = SAMPLE_RATE / 2.0

# The "intermediate encoding" the FiLM layer modulates: after this many
# encoder layers have run.
FILM_AFTER_LAYER = 6

# Zero-phase FIR length for the noise shaper.
NOISE_FIR_LEN = 2 * NOISE_BANDS - 1


@dataclass
class HarmonicControls:
    """Per-frame harmonic drive: global amplitude and a distribution over
    harmonic numbers (non-negative, summing to one per frame)."""

    global_amp: np.ndarray  # [T]
    harm_dist: np.ndarray  # [T, HARMONICS]


@dataclass
class NoiseControls:
    band_mags: np.ndarray  # [T, NOISE_BANDS], linear bands over [0, Nyquist]


@dataclass
class SynthState:
    """Mutable per-stream synthesis state.

    Keeps the fundamental phase, the previous frame's controls (interpolation
    anchor), the noise overlap-add tail, the seeded noise RNG, and the post
    convolution ring."""

    rng: np.random.Generator
    post_state: engine.ConvStreamState
    phase: float = 0.0
    prev: dict | None = None
    ola_tail: np.ndarray = field(default_factory=lambda: np.zeros(NOISE_FIR_LEN - 1))


def make_synth_state(post_graph: ModelGraph, noise_seed: int) -> SynthState:
    return SynthState(
        rng=np.random.default_rng(noise_seed),
        post_state=engine.make_stream_state(post_graph),
    )


def encode_controls(
    artic_frames,
    film: FilmParams | None,
    graph: ModelGraph,
    weights: WeightBundle,
    state: engine.ConvStreamState | None = None,
) -> tuple[HarmonicControls, NoiseControls]:
    """Run the control encoder over artic frames [T, 15].

    Heads: sigmoid global amplitude, softmax harmonic distribution, sigmoid
    noise band magnitudes. Streams when given a state."""
    x = network_input(artic_frames)
    mod = None
    if film is not None:
        mod = engine.FilmMod(FILM_AFTER_LAYER, film.gamma, film.beta)
    if state is None:
        heads = engine.infer_offline(graph, weights, x, film=mod)
    else:
        heads = engine.infer_streaming(graph, weights, state, x, film=mod)
    amp = engine.sigmoid(heads["harm_amp"].astype(np.float64))[:, 0]
    dist = engine.softmax(heads["harm_dist"].astype(np.float64), axis=1)
    mags = engine.sigmoid(heads["noise_mags"].astype(np.float64))
    return HarmonicControls(amp, dist), NoiseControls(mags)


def _interp_block(prev: np.ndarray | float, cur: np.ndarray | float, n: int = HOP):
    """Linear ramp ending exactly on the current frame's value."""
    alpha = (np.arange(1, n + 1) / n)[:, None] if np.ndim(cur) else np.arange(1, n + 1) / n
    return prev + (np.asarray(cur) - prev) * alpha


def _f0_block(prev_f0: float, cur_f0: float, n: int = HOP) -> np.ndarray | None:
    """Per-sample f0 for one frame block, or None when the block is silent.

    Voiced-to-voiced blocks ramp linearly. A block arriving at an unvoiced
    frame is silent; a block leaving one holds the new f0 flat so the onset
    does not sweep up from zero."""
    if cur_f0 <= 0.0:
        return None
    if prev_f0 <= 0.0:
        return np.full(n, cur_f0)
    return _interp_block(prev_f0, cur_f0, n)


def synth_harmonic(f0_frames, controls: HarmonicControls, state: SynthState) -> np.ndarray:
    """Additive harmonic synthesis at 16 kHz from 200 Hz frames.

    phase[n] = phase[n-1] + 2*pi*f0[n]/sr; harmonic k contributes
    a_k * sin(k * phase) and is masked wherever k * f0 reaches Nyquist.
    Unvoiced frames contribute exact silence and freeze the phase."""
    f0_frames = np.asarray(f0_frames, dtype=np.float64).ravel()
    t = f0_frames.size
    if controls.global_amp.shape[0] != t or controls.harm_dist.shape[0] != t:
        raise ParameterError("controls and f0 must cover the same frames")
    out = np.zeros(t * HOP)
    k = np.arange(1, HARMONICS + 1)
    for i in range(t):
        cur = {
            "f0": float(f0_frames[i]),
            "amp": float(controls.global_amp[i]),
            "dist": controls.harm_dist[i],
        }
        prev = state.prev if state.prev is not None else cur
        f0_s = _f0_block(prev["f0"], cur["f0"])
        if f0_s is not None:
            amp_s = _interp_block(prev["amp"], cur["amp"])
            dist_s = _interp_block(prev["dist"][None, :], cur["dist"][None, :])
            phases = state.phase + np.cumsum(2.0 * np.pi * f0_s / SAMPLE_RATE)
            theta = phases[:, None] * k[None, :]
            audible = (f0_s[:, None] * k[None, :]) < NYQUIST
            block = amp_s * np.sum(dist_s * np.sin(theta) * audible, axis=1)
            out[i * HOP : (i + 1) * HOP] = block
            state.phase = float(phases[-1] % (2.0 * np.pi))
        state.prev = cur
    return out


def _noise_fir(band_mags: np.ndarray) -> np.ndarray:
    """Linear-phase FIR from band magnitudes: inverse real DFT of the
    magnitude response, rolled to center, Hann-windowed."""
    h = np.fft.irfft(band_mags, n=NOISE_FIR_LEN)
    h = np.roll(h, NOISE_FIR_LEN // 2)
    return h * np.hanning(NOISE_FIR_LEN)


def synth_noise(controls: NoiseControls, state: SynthState) -> np.ndarray:
    """Filtered-noise synthesis: per frame, shape 80 samples of seeded white
    noise with that frame's FIR and overlap-add the tails."""
    mags = np.asarray(controls.band_mags, dtype=np.float64)
    if mags.ndim != 2 or mags.shape[1] != NOISE_BANDS:
        raise ParameterError(f"band_mags must be [T, {NOISE_BANDS}]")
    t = mags.shape[0]
    tail_len = NOISE_FIR_LEN - 1
    out = np.empty(t * HOP)
    for i in range(t):
        noise = state.rng.uniform(-1.0, 1.0, HOP)
        seg = np.convolve(noise, _noise_fir(mags[i]))
        block = seg[:HOP] + state.ola_tail[:HOP]
        new_tail = np.zeros(tail_len)
        new_tail[: tail_len - HOP] = state.ola_tail[HOP:]
        new_tail += seg[HOP:]
        state.ola_tail = new_tail
        out[i * HOP : (i + 1) * HOP] = block
    return out


def post_filter(
    samples,
    graph: ModelGraph,
    weights: WeightBundle,
    state: engine.ConvStreamState | None = None,
) -> np.ndarray:
    """Causal audio-rate post convolution over the summed branches."""
    x = np.asarray(samples, dtype=np.float32)[:, None]
    if state is None:
        y = engine.infer_offline(graph, weights, x)
    else:
        y = engine.infer_streaming(graph, weights, state, x)
    return y[engine.FEATURES_KEY][:, 0]


def synth_chunk(
    artic_frames,
    film: FilmParams | None,
    models: dict[str, ModelGraph],
    weights: WeightBundle,
    state: SynthState,
    encoder_state: engine.ConvStreamState | None = None,
    control_tap=None,
) -> np.ndarray:
    """Full vocoder for a block of artic frames: encode controls, synthesize
    both branches, sum, post-filter. 80 samples out per frame in."""
    frames = np.asarray(artic_frames, dtype=np.float64)
    harm, noise = encode_controls(
        frames, film, models[VOCODER_ENCODER], weights, encoder_state
    )
    if control_tap is not None:
        control_tap(control_matrix(harm, noise))
    mix = synth_harmonic(frames[:, 0], harm, state) + synth_noise(noise, state)
    return post_filter(
        mix.astype(np.float32), models[VOCODER_POST], weights,
        state.post_state if encoder_state is not None else None,
    )


def control_matrix(harm: HarmonicControls, noise: NoiseControls) -> np.ndarray:
    """Per-frame control tensors flattened for debug dumps:
    [global_amp, harm_dist x 60, band_mags x 65]."""
    return np.column_stack([harm.global_amp, harm.harm_dist, noise.band_mags])


# Evaluation metric: multi-scale spectral distance.
MSD_FFT_SIZES = (2048, 1024, 512, 256, 128, 64)
MSD_LOG_FLOOR = 1e-7


def _stft_mag(x: np.ndarray, size: int) -> np.ndarray:
    hop = size // 4
    windows = np.lib.stride_tricks.sliding_window_view(x, size)[::hop]
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)
    return np.abs(np.fft.rfft(windows * win, axis=-1))


def multiscale_spectral_distance(a, b) -> float:
    """Sum over FFT sizes of mean L1 distances between magnitude spectra and
    between their logs. Symmetric; zero iff magnitudes match at all scales."""
    xa = np.asarray(a, dtype=np.float64).ravel()
    xb = np.asarray(b, dtype=np.float64).ravel()
    if xa.size != xb.size:
        raise ParameterError(f"length mismatch: {xa.size} vs {xb.size}")
    if xa.size < max(MSD_FFT_SIZES):
        raise ParameterError(f"signals must have at least {max(MSD_FFT_SIZES)} samples")
    total = 0.0
    for size in MSD_FFT_SIZES:
        sa = _stft_mag(xa, size)
        sb = _stft_mag(xb, size)
        total += float(np.mean(np.abs(sa - sb)))
        total += float(
            np.mean(np.abs(np.log(sa + MSD_LOG_FLOOR) - np.log(sb + MSD_LOG_FLOOR)))
        )
    return total
