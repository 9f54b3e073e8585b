"""CSV and figure rendering for the evaluation and benchmark surfaces.

Figures are written next to the delimited output; matplotlib is imported
lazily with the Agg backend so headless runs never touch a display.
"""

from __future__ import annotations

import csv

import numpy as np

from .eval_harness import MetricRow

SWEEP_HEADER = ("condition", "color", "snr_db", "metric", "value")


def save_sweep_csv(rows: list[MetricRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for r in rows:
            writer.writerow([r.condition, r.color, r.snr_db, r.metric, r.value])


def load_sweep_csv(path) -> list[MetricRow]:
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                MetricRow(
                    rec["condition"], rec["color"], float(rec["snr_db"]),
                    rec["metric"], float(rec["value"]),
                )
            )
    return rows


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_sweep(rows: list[MetricRow], path) -> None:
    """Metric-vs-SNR curves, one line per noise color, one panel per metric."""
    plt = _pyplot()
    metrics = sorted({r.metric for r in rows})
    colors = sorted({r.color for r in rows})
    fig, axes = plt.subplots(1, len(metrics), figsize=(5.5 * len(metrics), 4.0))
    if len(metrics) == 1:
        axes = [axes]
    for ax, metric in zip(axes, metrics):
        for color in colors:
            pts = sorted(
                [(r.snr_db, r.value) for r in rows if r.metric == metric and r.color == color]
            )
            finite = [(s, v) for s, v in pts if np.isfinite(s)]
            if finite:
                ax.plot(*zip(*finite), marker="o", label=color)
        ax.set_xlabel("input SNR (dB)")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        ax.legend(title="noise")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_latency(report_dict: dict, path) -> None:
    """Stacked latency budget bar: lookahead + chunk + measured processing."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 2.8))
    parts = [
        ("lookahead", report_dict["t_lookahead_ms"]),
        ("chunk", report_dict["t_chunksize_ms"]),
        ("processing (mean)", report_dict["t_processing_ms"]),
    ]
    left = 0.0
    for label, value in parts:
        ax.barh([0], [value], left=left, label=f"{label}: {value:.1f} ms")
        left += value
    ax.set_xlim(0, max(left * 1.15, 1.0))
    ax.set_yticks([])
    ax.set_xlabel("end-to-end latency (ms)")
    ax.set_title(f"total {report_dict['total_ms']:.1f} ms, rtf {report_dict['rtf']:.3f}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spectrum(signal, sample_rate: int, path, title: str = "") -> None:
    """Welch magnitude spectrum of a probe signal, log-log."""
    from scipy.signal import welch

    plt = _pyplot()
    x = np.asarray(signal, dtype=np.float64).ravel()
    freqs, psd = welch(x, fs=sample_rate, nperseg=min(4096, x.size))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    keep = freqs > 0
    ax.semilogx(freqs[keep], 10.0 * np.log10(psd[keep] + 1e-300))
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("PSD (dB/Hz)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
