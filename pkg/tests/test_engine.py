import numpy as np
import pytest

from artivoc import engine
from artivoc.errors import GraphMismatchError, ParameterError
from artivoc.graphs import ConvLayerCfg, ModelGraph, default_registry
from artivoc.weights import WeightBundle, random_init


def _bundle_for(graph, tensors):
    return WeightBundle(tensors={k: np.asarray(v, np.float32) for k, v in tensors.items()})


def identity_graph(dim=4):
    g = ModelGraph("ident", dim, 200.0, (ConvLayerCfg(dim, dim, 1, activation="identity"),), {})
    w = np.eye(dim, dtype=np.float32)[:, :, None]
    b = np.zeros(dim, np.float32)
    return g, _bundle_for(g, {"ident.layers.0.weight": w, "ident.layers.0.bias": b})


class TestOffline:
    def test_identity_graph_reproduces_input(self):
        g, w = identity_graph()
        x = np.random.default_rng(0).normal(size=(16, 4)).astype(np.float32)
        out = engine.infer_offline(g, w, x)
        np.testing.assert_array_equal(out[engine.FEATURES_KEY], x)

    def test_kernel2_hand_computed(self):
        # Single layer, kernel 2, scalar channels, weights [a, b], zero bias:
        # y[t] = a*x[t-1] + b*x[t] with x[-1] = 0.
        a, b = 0.5, -2.0
        g = ModelGraph("k2", 1, 200.0, (ConvLayerCfg(1, 1, 2, activation="identity"),), {})
        w = _bundle_for(g, {
            "k2.layers.0.weight": np.array([[[a, b]]]),
            "k2.layers.0.bias": np.zeros(1),
        })
        x = np.array([[1.0], [2.0], [3.0], [4.0]], dtype=np.float32)
        out = engine.infer_offline(g, w, x)[engine.FEATURES_KEY][:, 0]
        expected = [b * 1, a * 1 + b * 2, a * 2 + b * 3, a * 3 + b * 4]
        np.testing.assert_allclose(out, expected, rtol=1e-6)

    def test_future_perturbation_never_leaks_backward(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=5)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(64, g.input_dim)).astype(np.float32)
        base = engine.infer_offline(g, w, x)["ema"]
        for t in (0, 10, 40):
            x2 = x.copy()
            x2[t + 1 :] += rng.normal(size=x2[t + 1 :].shape).astype(np.float32)
            out = engine.infer_offline(g, w, x2)["ema"]
            np.testing.assert_array_equal(out[: t + 1], base[: t + 1])

    def test_input_dim_mismatch_raises(self):
        g, w = identity_graph(4)
        with pytest.raises(GraphMismatchError):
            engine.infer_offline(g, w, np.zeros((3, 5), np.float32))

    def test_missing_tensor_named_in_error(self):
        g, w = identity_graph(4)
        del w.tensors["ident.layers.0.bias"]
        with pytest.raises(GraphMismatchError, match="ident.layers.0.bias"):
            engine.infer_offline(g, w, np.zeros((3, 4), np.float32))


class TestStreaming:
    def test_chunked_equals_offline_fixed_chunks(self):
        g = default_registry()["source_extractor"]
        w = random_init(g, seed=2)
        x = np.random.default_rng(3).normal(size=(300, g.input_dim)).astype(np.float32)
        offline = engine.infer_offline(g, w, x)
        state = engine.make_stream_state(g)
        parts = {h: [] for h in offline}
        for c in range(100):
            out = engine.infer_streaming(g, w, state, x[c * 3 : (c + 1) * 3])
            for h, v in out.items():
                parts[h].append(v)
        for h in offline:
            np.testing.assert_allclose(np.concatenate(parts[h]), offline[h], atol=1e-5)

    def test_chunk_size_one_matches_offline(self):
        g = default_registry()["vocoder_encoder"]
        w = random_init(g, seed=4)
        x = np.random.default_rng(5).normal(size=(100, g.input_dim)).astype(np.float32)
        offline = engine.infer_offline(g, w, x)["harm_dist"]
        state = engine.make_stream_state(g)
        rows = [engine.infer_streaming(g, w, state, x[i : i + 1])["harm_dist"] for i in range(100)]
        np.testing.assert_allclose(np.concatenate(rows), offline, atol=1e-5)

    def test_random_chunkings_match_offline(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=6)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(200, g.input_dim)).astype(np.float32)
        offline = engine.infer_offline(g, w, x)["ema"]
        for trial in range(5):
            state = engine.make_stream_state(g)
            pos, out = 0, []
            while pos < 200:
                n = int(rng.integers(1, 17))
                n = min(n, 200 - pos)
                out.append(engine.infer_streaming(g, w, state, x[pos : pos + n])["ema"])
                pos += n
            np.testing.assert_allclose(np.concatenate(out), offline, atol=1e-5)

    def test_fresh_state_zero_input_matches_offline(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=8)
        x = np.zeros((12, g.input_dim), np.float32)
        offline = engine.infer_offline(g, w, x)["ema"]
        state = engine.make_stream_state(g)
        streamed = engine.infer_streaming(g, w, state, x)["ema"]
        np.testing.assert_array_equal(streamed, offline)

    def test_state_graph_mismatch_raises(self):
        reg = default_registry()
        state = engine.make_stream_state(reg["ema_inverter"])
        w = random_init(reg["source_extractor"], seed=0)
        with pytest.raises(GraphMismatchError):
            engine.infer_streaming(reg["source_extractor"], w, state,
                                   np.zeros((1, 80), np.float32))

    def test_strided_graph_not_streamable(self):
        g = default_registry()["speaker_frontend"]
        with pytest.raises(ParameterError):
            engine.make_stream_state(g)

    def test_ring_memory_independent_of_stream_length(self):
        g = default_registry()["source_extractor"]
        w = random_init(g, seed=9)
        state = engine.make_stream_state(g)
        x = np.zeros((3, g.input_dim), np.float32)
        engine.infer_streaming(g, w, state, x)
        early = state.memory_bytes()
        for _ in range(200):
            engine.infer_streaming(g, w, state, x)
        assert state.memory_bytes() == early
        expected = sum(cfg.context * cfg.in_ch * 4 for cfg in g.layers)
        assert early == expected


class TestReceptiveField:
    def test_tightness_on_dilated_stack(self):
        g = default_registry()["ema_inverter"]
        ctx = g.receptive_field - 1
        x = np.random.default_rng(0).normal(size=(ctx + 10, g.input_dim)).astype(np.float32)
        t = ctx + 5
        influenced = False
        for seed in range(5):
            w = random_init(g, seed=seed)
            base = engine.infer_offline(g, w, x)["ema"]
            x_in = x.copy()
            x_in[t - ctx] += 1.0
            out = engine.infer_offline(g, w, x_in)["ema"]
            if not np.array_equal(out[t], base[t]):
                influenced = True
            x_out = x.copy()
            x_out[t - ctx - 1] += 1.0
            out2 = engine.infer_offline(g, w, x_out)["ema"]
            np.testing.assert_array_equal(out2[t:], base[t:])
        assert influenced, "edge of receptive field never reached output"

    def test_strided_graph_causality_in_input_space(self):
        g = default_registry()["speaker_frontend"]
        w = random_init(g, seed=1)
        x = np.random.default_rng(2).normal(size=(2000, 1)).astype(np.float32)
        base = engine.infer_offline(g, w, x)[engine.FEATURES_KEY]
        t = 3
        latest = g.latest_input_for(t)
        x2 = x.copy()
        x2[latest + 1 :] += 1.0
        out = engine.infer_offline(g, w, x2)[engine.FEATURES_KEY]
        np.testing.assert_array_equal(out[: t + 1], base[: t + 1])


class TestFilm:
    def test_zero_film_is_identity(self):
        g = default_registry()["vocoder_encoder"]
        w = random_init(g, seed=3)
        x = np.random.default_rng(4).normal(size=(20, g.input_dim)).astype(np.float32)
        plain = engine.infer_offline(g, w, x)
        zero = engine.FilmMod(6, np.zeros(64, np.float32), np.zeros(64, np.float32))
        with_film = engine.infer_offline(g, w, x, film=zero)
        for h in plain:
            np.testing.assert_array_equal(plain[h], with_film[h])

    def test_film_width_mismatch_raises(self):
        g = default_registry()["vocoder_encoder"]
        w = random_init(g, seed=3)
        bad = engine.FilmMod(6, np.zeros(32, np.float32), np.zeros(32, np.float32))
        with pytest.raises(GraphMismatchError):
            engine.infer_offline(g, w, np.zeros((2, g.input_dim), np.float32), film=bad)

    def test_film_streaming_matches_offline(self):
        g = default_registry()["vocoder_encoder"]
        w = random_init(g, seed=5)
        rng = np.random.default_rng(6)
        mod = engine.FilmMod(6, rng.normal(size=64).astype(np.float32),
                             rng.normal(size=64).astype(np.float32))
        x = rng.normal(size=(60, g.input_dim)).astype(np.float32)
        offline = engine.infer_offline(g, w, x, film=mod)["harm_amp"]
        state = engine.make_stream_state(g)
        parts = [
            engine.infer_streaming(g, w, state, x[i * 6 : (i + 1) * 6], film=mod)["harm_amp"]
            for i in range(10)
        ]
        np.testing.assert_allclose(np.concatenate(parts), offline, atol=1e-5)
