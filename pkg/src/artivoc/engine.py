"""Causal convolution inference, offline and streaming.

Offline inference left-zero-pads every layer; streaming inference keeps a
per-layer ring of past input frames sized to the layer's context, pre-filled
with zeros. The two paths run identical arithmetic (float32, fixed tap
order), so any chunking of a stream reproduces the offline output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphMismatchError, ParameterError
from .graphs import ConvLayerCfg, ModelGraph
from .weights import WeightBundle

FEATURES_KEY = "features"


@dataclass(frozen=True)
class FilmMod:
    """Feature-wise modulation h * (1 + gamma) + beta, applied to the hidden
    sequence after ``after_layer`` layers have run."""

    after_layer: int
    gamma: np.ndarray
    beta: np.ndarray


def _activate(name: str, x: np.ndarray) -> np.ndarray:
    if name == "identity":
        return x
    if name == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return sigmoid(x)
    if name == "softmax":
        return softmax(x, axis=-1)
    raise ParameterError(f"unknown activation {name!r}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    pos = x >= 0
    out = np.empty_like(x)
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def _apply_film(h: np.ndarray, film: FilmMod) -> np.ndarray:
    gamma = np.asarray(film.gamma, dtype=np.float32)
    beta = np.asarray(film.beta, dtype=np.float32)
    if gamma.shape != (h.shape[1],) or beta.shape != (h.shape[1],):
        raise GraphMismatchError(
            f"FiLM width {gamma.shape} does not match hidden width {h.shape[1]}"
        )
    return h * (1.0 + gamma) + beta


# Multiply-accumulate runs in float64 and rounds back to float32 once per
# layer: results then do not depend on how the stream was chunked (BLAS
# reorders float32 sums differently per batch shape).
def _matmul_taps(taps, b: np.ndarray) -> np.ndarray:
    acc = np.empty(taps[0][0].shape[:1] + (b.shape[0],), np.float64)
    acc[:] = b
    for sl, w_tap in taps:
        acc += sl @ w_tap
    return acc.astype(np.float32)


def _conv_offline(cfg: ConvLayerCfg, w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    t_in = x.shape[0]
    t_out = (t_in - 1) // cfg.stride + 1
    xp = x
    if cfg.context:
        xp = np.concatenate([np.zeros((cfg.context, cfg.in_ch), np.float32), x])
    xp64 = xp.astype(np.float64)
    w64 = w.astype(np.float64)
    taps = []
    for j in range(cfg.kernel):
        start = j * cfg.dilation
        taps.append(
            (xp64[start : start + (t_out - 1) * cfg.stride + 1 : cfg.stride], w64[:, :, j].T)
        )
    y = _activate(cfg.activation, _matmul_taps(taps, b))
    if cfg.residual:
        y = y + x
    return y


def _conv_streaming(
    cfg: ConvLayerCfg, w: np.ndarray, b: np.ndarray, buf: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    ctx = np.concatenate([buf, x]) if buf.size else x
    t = x.shape[0]
    ctx64 = ctx.astype(np.float64)
    w64 = w.astype(np.float64)
    taps = [
        (ctx64[j * cfg.dilation : j * cfg.dilation + t], w64[:, :, j].T)
        for j in range(cfg.kernel)
    ]
    y = _activate(cfg.activation, _matmul_taps(taps, b))
    if cfg.residual:
        y = y + x
    new_buf = ctx[ctx.shape[0] - cfg.context :] if cfg.context else buf
    return y, new_buf


def _as_input(graph: ModelGraph, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != graph.input_dim:
        raise GraphMismatchError(
            f"{graph.name}: input must be [T, {graph.input_dim}], got {x.shape}"
        )
    return x


def _check_film(graph: ModelGraph, film: FilmMod | None) -> None:
    if film is not None and not 0 <= film.after_layer <= len(graph.layers):
        raise ParameterError(f"FiLM injection index {film.after_layer} out of range")


def _run_heads(graph: ModelGraph, weights: WeightBundle, h: np.ndarray) -> dict[str, np.ndarray]:
    if not graph.heads:
        return {FEATURES_KEY: h}
    out = {}
    h64 = h.astype(np.float64)
    for head, dim in graph.heads.items():
        w = weights.require(graph.head_weight(head), (dim, graph.feature_dim))
        b = weights.require(graph.head_bias(head), (dim,))
        out[head] = _matmul_taps([(h64, w.astype(np.float64).T)], b)
    return out


def infer_offline(
    graph: ModelGraph,
    weights: WeightBundle,
    x,
    film: FilmMod | None = None,
) -> dict[str, np.ndarray]:
    """Run a whole input matrix [T, input_dim] through the graph.

    Returns one [T_out, dim] matrix per head (or {"features": h} for graphs
    without heads). Serves as the oracle for the streaming path.
    """
    h = _as_input(graph, x)
    _check_film(graph, film)
    for i, cfg in enumerate(graph.layers):
        if film is not None and film.after_layer == i:
            h = _apply_film(h, film)
        w = weights.require(graph.layer_weight(i), (cfg.out_ch, cfg.in_ch, cfg.kernel))
        b = weights.require(graph.layer_bias(i), (cfg.out_ch,))
        h = _conv_offline(cfg, w, b, h)
    if film is not None and film.after_layer == len(graph.layers):
        h = _apply_film(h, film)
    return _run_heads(graph, weights, h)


@dataclass
class ConvStreamState:
    """Per-layer rings of past input frames; owned by exactly one stream."""

    graph_name: str
    buffers: list[np.ndarray]
    frames_seen: int = 0

    def memory_bytes(self) -> int:
        return sum(b.nbytes for b in self.buffers)


def make_stream_state(graph: ModelGraph) -> ConvStreamState:
    if any(cfg.stride != 1 for cfg in graph.layers):
        raise ParameterError(f"{graph.name}: strided graphs are offline-only")
    return ConvStreamState(
        graph.name,
        [np.zeros((cfg.context, cfg.in_ch), np.float32) for cfg in graph.layers],
    )


def infer_streaming(
    graph: ModelGraph,
    weights: WeightBundle,
    state: ConvStreamState,
    x,
    film: FilmMod | None = None,
) -> dict[str, np.ndarray]:
    """Feed new frames through the graph, updating ring buffers in place.

    Concatenating outputs over any chunking of an input equals
    ``infer_offline`` on the whole input.
    """
    if state.graph_name != graph.name or len(state.buffers) != len(graph.layers):
        raise GraphMismatchError(
            f"stream state built for {state.graph_name!r}, not {graph.name!r}"
        )
    h = _as_input(graph, x)
    _check_film(graph, film)
    for i, cfg in enumerate(graph.layers):
        if state.buffers[i].shape != (cfg.context, cfg.in_ch):
            raise GraphMismatchError(f"{graph.name}: layer {i} ring has wrong shape")
        if film is not None and film.after_layer == i:
            h = _apply_film(h, film)
        w = weights.require(graph.layer_weight(i), (cfg.out_ch, cfg.in_ch, cfg.kernel))
        b = weights.require(graph.layer_bias(i), (cfg.out_ch,))
        h, state.buffers[i] = _conv_streaming(cfg, w, b, state.buffers[i], h)
    if film is not None and film.after_layer == len(graph.layers):
        h = _apply_film(h, film)
    state.frames_seen += x.shape[0]
    return _run_heads(graph, weights, h)
