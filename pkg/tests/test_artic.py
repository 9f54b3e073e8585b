import numpy as np
import pytest
from hypothesis import given, strategies as st

from artivoc import artic, engine
from artivoc.errors import FormatError, ParameterError, TruncationError
from artivoc.graphs import ConvLayerCfg, ModelGraph, default_registry
from artivoc.source import SourceFeatures
from artivoc.weights import WeightBundle, random_init


class TestAssemble:
    def test_zero_frame(self):
        src = SourceFeatures(0.0, 0.0, False, 0.0)
        frame = artic.assemble(src, np.zeros(12))
        np.testing.assert_array_equal(frame.as_vector(), np.zeros(15))

    def test_layout_fixture(self):
        src = SourceFeatures(f0=123.0, periodicity=0.75, voiced=True, loudness=2.5)
        ema = np.arange(12, dtype=float) + 10
        v = artic.assemble(src, ema).as_vector()
        assert v[0] == 123.0
        assert v[1] == 0.75
        assert v[2] == 2.5
        np.testing.assert_array_equal(v[3:], ema)

    def test_round_trip(self):
        src = SourceFeatures(200.0, 0.9, True, 1.1)
        frame = artic.assemble(src, np.linspace(-1, 1, 12))
        again = artic.ArticFrame.from_vector(frame.as_vector())
        assert again.f0 == frame.f0
        assert again.periodicity == frame.periodicity
        assert again.loudness == frame.loudness
        np.testing.assert_array_equal(again.ema, frame.ema)

    def test_wrong_ema_dim_rejected(self):
        with pytest.raises(ParameterError):
            artic.assemble(SourceFeatures(0, 0, False, 0), np.zeros(11))


class TestInterpolate:
    def test_linear_ramp(self):
        out = artic.interpolate_labels(np.stack([np.zeros(12), np.full(12, 4.0)]))
        assert out.shape == (5, 12)
        for i in range(5):
            np.testing.assert_allclose(out[i], i)

    def test_constant_input_constant_output(self):
        x = np.tile(np.arange(12.0), (7, 1))
        out = artic.interpolate_labels(x)
        assert out.shape == (4 * 6 + 1, 12)
        for row in out:
            np.testing.assert_array_equal(row, x[0])

    def test_inputs_reproduced_and_midpoints_are_means(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(9, 12))
        out = artic.interpolate_labels(x)
        assert out.shape == (4 * 8 + 1, 12)
        np.testing.assert_array_equal(out[::4], x)
        np.testing.assert_allclose(out[2::4], (x[:-1] + x[1:]) / 2.0, atol=1e-12)

    def test_too_few_frames_rejected(self):
        with pytest.raises(ParameterError):
            artic.interpolate_labels(np.zeros((1, 12)))

    @given(st.integers(min_value=0, max_value=10**6))
    def test_commutes_with_affine_maps(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(5, 3))
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        lhs = artic.interpolate_labels(x * a + b)
        rhs = artic.interpolate_labels(x) * a + b
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestInvertFrames:
    def test_identity_micro_graph(self):
        g = ModelGraph("ema_id", 12, 200.0,
                       (ConvLayerCfg(12, 12, 1, activation="identity"),), {"ema": 12})
        tensors = {
            "ema_id.layers.0.weight": np.eye(12, dtype=np.float32)[:, :, None],
            "ema_id.layers.0.bias": np.zeros(12, np.float32),
            "ema_id.heads.ema.weight": np.eye(12, dtype=np.float32),
            "ema_id.heads.ema.bias": np.zeros(12, np.float32),
        }
        x = np.random.default_rng(0).uniform(-2, 2, (10, 12)).astype(np.float32)
        out = artic.invert_frames(x, g, WeightBundle(tensors=tensors))
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_zero_input_zero_bias_gives_constant_output(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=1)
        x = np.zeros((40, g.input_dim), np.float32)
        out = artic.invert_frames(x, g, w)
        np.testing.assert_array_equal(out, np.tile(out[0], (40, 1)))
        offline = np.clip(engine.infer_offline(g, w, x)["ema"], -10, 10)
        np.testing.assert_array_equal(out, offline)

    def test_chunked_matches_whole(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=2)
        x = np.random.default_rng(3).normal(size=(60, g.input_dim)).astype(np.float32)
        whole = artic.invert_frames(x, g, w)
        state = engine.make_stream_state(g)
        parts = [artic.invert_frames(x[i * 5 : (i + 1) * 5], g, w, state) for i in range(12)]
        np.testing.assert_allclose(np.concatenate(parts), whole, atol=1e-5)

    def test_frame_count_conserved(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=4)
        for n in (1, 7, 33):
            x = np.zeros((n, g.input_dim), np.float32)
            assert artic.invert_frames(x, g, w).shape == (n, 12)

    def test_clamp_bounds_output(self):
        g = default_registry()["ema_inverter"]
        w = random_init(g, seed=5)
        x = 100.0 * np.ones((8, g.input_dim), np.float32)
        out = artic.invert_frames(x, g, w)
        assert (np.abs(out) <= artic.EMA_CLAMP).all()


class TestNetworkInput:
    def test_f0_column_log_compressed(self):
        m = np.zeros((3, 15))
        m[:, 0] = [0.0, 150.0, 300.0]
        out = artic.network_input(m)
        np.testing.assert_allclose(out[:, 0], np.log1p([0.0, 150.0, 300.0]) / 6.0, rtol=1e-6)
        np.testing.assert_array_equal(out[:, 1:], m[:, 1:].astype(np.float32))


class TestEma0Format:
    def test_round_trip(self, tmp_path):
        m = np.random.default_rng(0).normal(size=(17, 12)).astype(np.float32)
        path = tmp_path / "x.ema0"
        artic.save_ema0(m, 50, path)
        again, rate = artic.load_ema0(path)
        assert rate == 50
        np.testing.assert_array_equal(again, m)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ema0"
        path.write_bytes(b"NOPE" + b"\0" * 12)
        with pytest.raises(FormatError):
            artic.load_ema0(path)

    def test_truncated(self, tmp_path):
        m = np.zeros((4, 12), np.float32)
        path = tmp_path / "t.ema0"
        artic.save_ema0(m, 200, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(TruncationError):
            artic.load_ema0(path)
