"""Noise-robustness evaluation: colored noise, SNR mixing, f0 correlation.

The sweep mixes white/pink/brown noise into source utterances at a grid of
SNRs, converts with the same target speaker, and reports how far each noisy
conversion drifts from the clean-input conversion (multi-scale spectral
distance and f0 contour correlation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .errors import ParameterError, UndefinedMetricError
from .runtime import Models, PipelineConfig, convert_offline
from .speaker import SpeakerEmbedding
from .vocoder import multiscale_spectral_distance

NOISE_COLORS = ("white", "pink", "brown")


@dataclass(frozen=True)
class NoiseSpec:
    color: str
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if self.color not in NOISE_COLORS:
            raise ParameterError(f"color must be one of {NOISE_COLORS}")


@dataclass
class MetricRow:
    condition: str
    color: str
    snr_db: float
    metric: str
    value: float


@dataclass
class MixResult:
    signal: np.ndarray
    noise_scale: float
    clipped: int


def gen_noise(spec: NoiseSpec, n_samples: int) -> np.ndarray:
    """Deterministic colored noise.

    White is seeded Gaussian; pink shapes the white spectrum by 1/sqrt(f);
    brown integrates white, then is de-meaned and peak-normalized."""
    if n_samples < 4096:
        raise ParameterError("need at least 4096 samples of noise")
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal(n_samples)
    if spec.color == "white":
        return white
    if spec.color == "pink":
        spec_fft = np.fft.rfft(white)
        k = np.arange(spec_fft.size, dtype=np.float64)
        k[0] = 1.0
        spec_fft /= np.sqrt(k)
        spec_fft[0] = 0.0
        pink = np.fft.irfft(spec_fft, n=n_samples)
        return pink / pink.std()
    brown = np.cumsum(white)
    brown -= brown.mean()
    return brown / np.abs(brown).max()


def mix_at_snr(clean, noise, snr_db: float) -> MixResult:
    """Scale noise to hit the requested SNR exactly, add, clip to [-1, 1].

    An infinite SNR returns the clean signal untouched."""
    x = np.asarray(clean, dtype=np.float64).ravel()
    n = np.asarray(noise, dtype=np.float64).ravel()
    if x.size != n.size:
        raise ParameterError("clean and noise must have equal lengths")
    p_clean = float(np.mean(x**2))
    if p_clean <= 0:
        raise ParameterError("clean signal has zero energy")
    if math.isinf(snr_db):
        return MixResult(x.copy(), 0.0, 0)
    p_noise = float(np.mean(n**2))
    if p_noise <= 0:
        raise ParameterError("noise signal has zero energy")
    scale = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = x + scale * n
    clipped = int(np.count_nonzero((mixed < -1.0) | (mixed > 1.0)))
    return MixResult(np.clip(mixed, -1.0, 1.0), scale, clipped)


def f0_pcc(src_f0, conv_f0) -> float:
    """Pearson correlation between two f0 contours over the frames voiced in
    both (f0 > 0). Needs at least two such frames and nonzero variance."""
    a = np.asarray(src_f0, dtype=np.float64).ravel()
    b = np.asarray(conv_f0, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ParameterError("contours must have equal lengths")
    mask = (a > 0) & (b > 0)
    if mask.sum() < 2:
        raise ParameterError("need at least 2 frames voiced in both contours")
    av = a[mask] - a[mask].mean()
    bv = b[mask] - b[mask].mean()
    denom = math.sqrt(float(av @ av) * float(bv @ bv))
    if denom == 0.0:
        raise UndefinedMetricError("a contour is constant: correlation undefined")
    return float(av @ bv) / denom


def psd_slope_db_per_octave(
    signal, sample_rate: int = 16000, f_lo: float = 100.0, f_hi: float = 7000.0
) -> float:
    """Least-squares slope of the Welch PSD in dB per octave over a band."""
    x = np.asarray(signal, dtype=np.float64).ravel()
    freqs, psd = welch(x, fs=sample_rate, nperseg=min(4096, x.size))
    band = (freqs >= f_lo) & (freqs <= f_hi) & (psd > 0)
    octaves = np.log2(freqs[band])
    level_db = 10.0 * np.log10(psd[band])
    slope, _ = np.polyfit(octaves, level_db, 1)
    return float(slope)


def band_power_db(signal, sample_rate, f_lo, f_hi) -> float:
    x = np.asarray(signal, dtype=np.float64).ravel()
    freqs, psd = welch(x, fs=sample_rate, nperseg=min(4096, x.size))
    band = (freqs >= f_lo) & (freqs <= f_hi)
    return float(10.0 * np.log10(np.mean(psd[band]) + 1e-300))


def run_sweep(
    config: PipelineConfig,
    models: Models,
    sources: list[np.ndarray],
    embedding: SpeakerEmbedding,
    m_tgt_hz: float,
    snr_grid_db: list[float],
    colors: list[str] = list(NOISE_COLORS),
    noise_seed: int = 7,
) -> list[MetricRow]:
    """Noise sweep over (color, SNR): each condition's metrics are averaged
    over the source utterances and compared against the clean-input
    conversion of the same utterance."""
    if not sources:
        raise ParameterError("need at least one source utterance")
    clean_runs = []
    for sig in sources:
        audio, diag = convert_offline(
            sig, embedding, m_tgt_hz, config, models, collect_diagnostics=True
        )
        clean_runs.append((np.asarray(sig, dtype=np.float64).ravel(), audio, diag))

    rows: list[MetricRow] = []
    for color in colors:
        for snr in snr_grid_db:
            dists, pccs = [], []
            for idx, (sig, clean_audio, clean_diag) in enumerate(clean_runs):
                noise = gen_noise(NoiseSpec(color, snr, seed=noise_seed + idx), sig.size)
                noisy = mix_at_snr(sig, noise, snr).signal
                audio, diag = convert_offline(
                    noisy, embedding, m_tgt_hz, config, models, collect_diagnostics=True
                )
                dists.append(multiscale_spectral_distance(audio, clean_audio))
                pccs.append(f0_pcc(diag.f0_rescaled, clean_diag.f0_rescaled))
            label = f"{color}@{_fmt_snr(snr)}"
            rows.append(MetricRow(label, color, snr, "spectral_distance", float(np.mean(dists))))
            rows.append(MetricRow(label, color, snr, "f0_pcc", float(np.mean(pccs))))
    return rows


def _fmt_snr(snr: float) -> str:
    return "inf" if math.isinf(snr) else f"{snr:g}dB"
