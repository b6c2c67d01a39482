import struct

import numpy as np
import pytest

from fbp.errors import (
    ConfigurationError,
    ShapeError,
    WeightFormatError,
    WeightValidationError,
)
from fbp.nn import (
    CONV_CHANNELS,
    LAYER_SEQUENCE,
    WeightStore,
    conv2d,
    forward_taps,
    load_weights,
    maxpool2,
    relu,
    save_weights,
    tap_shape,
)

from helpers_fbp import make_random_store


def conv2d_oracle(x, weight, bias):
    """Nested-loop 3x3 convolution, float64, zero padding 1."""
    c, h, w = x.shape
    o = weight.shape[0]
    out = np.zeros((o, h, w), dtype=np.float64)
    for oo in range(o):
        for y in range(h):
            for xx in range(w):
                acc = float(bias[oo])
                for cc in range(c):
                    for dy in range(3):
                        for dx in range(3):
                            sy, sx = y + dy - 1, xx + dx - 1
                            if 0 <= sy < h and 0 <= sx < w:
                                acc += float(x[cc, sy, sx]) * float(weight[oo, cc, dy, dx])
                out[oo, y, xx] = acc
    return out


def maxpool2_oracle(x):
    """Window-scan 2x2/stride-2 max."""
    c, h, w = x.shape
    out = np.empty((c, h // 2, w // 2), dtype=np.float64)
    for cc in range(c):
        for y in range(h // 2):
            for xx in range(w // 2):
                out[cc, y, xx] = max(
                    x[cc, 2 * y, 2 * xx], x[cc, 2 * y, 2 * xx + 1],
                    x[cc, 2 * y + 1, 2 * xx], x[cc, 2 * y + 1, 2 * xx + 1],
                )
    return out


class TestConv2d:
    def test_identity_kernel(self):
        x = np.full((1, 1, 1), 3.5, dtype=np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        w[0, 0, 1, 1] = 1.0
        out = conv2d(x, w, np.zeros(1, dtype=np.float32))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == pytest.approx(3.5)

    def test_all_ones_hand_case(self):
        x = np.ones((1, 3, 3), dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        out = conv2d(x, w, np.zeros(1, dtype=np.float32))
        # direct summation: full 3x3 window at the center, 2x2 at corners
        assert out[0, 1, 1] == pytest.approx(9.0)
        for y, x_ in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            assert out[0, y, x_] == pytest.approx(4.0)

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, 8, 8)).astype(np.float32)
        w = rng.standard_normal((6, 4, 3, 3)).astype(np.float32)
        b = rng.standard_normal(6).astype(np.float32)
        np.testing.assert_allclose(conv2d(x, w, b), conv2d_oracle(x, w, b), atol=1e-5)

    def test_channel_mismatch(self):
        x = np.zeros((2, 4, 4), dtype=np.float32)
        w = np.zeros((3, 4, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            conv2d(x, w, np.zeros(3, dtype=np.float32))

    def test_non_3x3_kernel_rejected(self):
        x = np.zeros((1, 4, 4), dtype=np.float32)
        w = np.zeros((1, 1, 5, 5), dtype=np.float32)
        with pytest.raises(ShapeError):
            conv2d(x, w, np.zeros(1, dtype=np.float32))

    def test_linearity_in_input(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = np.zeros(3, dtype=np.float32)
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        y = rng.standard_normal((2, 6, 6)).astype(np.float32)
        a, c = np.float32(1.7), np.float32(-0.4)
        lhs = conv2d(a * x + c * y, w, b)
        rhs = a * conv2d(x, w, b) + c * conv2d(y, w, b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-4)


class TestRelu:
    def test_definition(self):
        np.testing.assert_array_equal(
            relu(np.array([-1.0, 0.0, 2.0], dtype=np.float32)),
            np.array([0.0, 0.0, 2.0], dtype=np.float32),
        )

    def test_identity_on_nonnegative(self):
        x = np.abs(np.random.default_rng(0).standard_normal((2, 3, 3))).astype(np.float32)
        np.testing.assert_array_equal(relu(x), x)

    def test_saturates_negatives(self):
        x = -np.ones((2, 2), dtype=np.float32)
        assert not relu(x).any()


class TestMaxpool2:
    def test_single_window(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        out = maxpool2(x)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 4.0

    def test_constant_tensor(self):
        x = np.full((2, 4, 6), 2.5, dtype=np.float32)
        out = maxpool2(x)
        assert out.shape == (2, 2, 3)
        assert (out == 2.5).all()

    def test_matches_window_scan_oracle(self):
        x = np.random.default_rng(3).standard_normal((3, 8, 8)).astype(np.float32)
        np.testing.assert_allclose(maxpool2(x), maxpool2_oracle(x), atol=1e-6)

    def test_odd_extent_rejected(self):
        with pytest.raises(ShapeError):
            maxpool2(np.zeros((1, 3, 4), dtype=np.float32))


class TestForwardTaps:
    def test_tap_shapes(self, random_store):
        img = np.random.default_rng(1).standard_normal((3, 224, 224)).astype(np.float32)
        taps = forward_taps(img, random_store, ["conv4_1", "conv5_1"])
        assert taps["conv4_1"].shape == (512, 28, 28)
        assert taps["conv5_1"].shape == (512, 14, 14)

    def test_zero_image_zero_bias_propagates_zero(self):
        store = make_random_store(seed=2, layers=["conv1_1"])
        store.entries["conv1_1.bias"] = np.zeros(64, dtype=np.float32)
        taps = forward_taps(np.zeros((3, 224, 224), dtype=np.float32), store, ["conv1_1"])
        assert not taps["conv1_1"].any()

    def test_deterministic_rerun(self, random_store):
        img = np.random.default_rng(4).standard_normal((3, 224, 224)).astype(np.float32)
        a = forward_taps(img, random_store, ["conv3_1"])["conv3_1"]
        b = forward_taps(img, random_store, ["conv3_1"])["conv3_1"]
        assert a.tobytes() == b.tobytes()

    def test_halving_schedule(self):
        for k in range(1, 6):
            c, h, w = tap_shape(f"pool{k}")
            assert h == w == 224 // 2 ** k
        assert tap_shape("conv1_1")[0] == 64
        assert tap_shape("conv2_2")[0] == 128
        assert tap_shape("conv3_3")[0] == 256
        assert tap_shape("conv5_3") == (512, 14, 14)

    def test_unknown_tap(self, random_store):
        with pytest.raises(ConfigurationError):
            forward_taps(np.zeros((3, 224, 224), np.float32), random_store, ["conv6_1"])

    def test_missing_weights(self):
        store = make_random_store(seed=2, layers=["conv1_1"])
        with pytest.raises(WeightValidationError, match="conv1_2"):
            forward_taps(np.zeros((3, 224, 224), np.float32), store, ["conv1_2"])

    def test_bad_input_shape(self, random_store):
        with pytest.raises(ShapeError):
            forward_taps(np.zeros((3, 112, 112), np.float32), random_store, ["conv1_1"])

    def test_pre_relu_taps_keep_negatives(self):
        store = make_random_store(seed=9, layers=["conv1_1"])
        img = np.random.default_rng(0).standard_normal((3, 224, 224)).astype(np.float32)
        pre = forward_taps(img, store, ["conv1_1"], pre_relu=True)["conv1_1"]
        post = forward_taps(img, store, ["conv1_1"])["conv1_1"]
        assert (pre < 0).any()
        np.testing.assert_array_equal(relu(pre), post)


class TestWeightFile:
    def test_empty_store_round_trip(self, tmp_path):
        path = tmp_path / "empty.bwf"
        save_weights(WeightStore(provenance="nothing"), path)
        store = load_weights(path)
        assert store.entries == {}
        assert store.provenance == "nothing"

    def test_round_trip_bytes(self, tmp_path):
        store = make_random_store(seed=1, layers=["conv1_1", "conv1_2"])
        first = tmp_path / "a.bwf"
        second = tmp_path / "b.bwf"
        save_weights(store, first)
        loaded = load_weights(first)
        assert loaded.entries["conv1_1.weight"].shape == (64, 3, 3, 3)
        for name, arr in store.entries.items():
            np.testing.assert_array_equal(loaded.entries[name], arr)
        save_weights(loaded, second)
        assert first.read_bytes() == second.read_bytes()

    def test_wrong_kernel_size_rejected(self, tmp_path):
        store = WeightStore(entries={
            "conv1_1.weight": np.zeros((64, 3, 5, 5), dtype=np.float32),
            "conv1_1.bias": np.zeros(64, dtype=np.float32),
        })
        path = tmp_path / "bad.bwf"
        save_weights(store, path)
        with pytest.raises(WeightValidationError, match="conv1_1"):
            load_weights(path)

    def test_unknown_layer_rejected(self, tmp_path):
        store = WeightStore(entries={"fc6.weight": np.zeros((4,), dtype=np.float32)})
        path = tmp_path / "bad.bwf"
        save_weights(store, path)
        with pytest.raises(WeightValidationError, match="fc6"):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bwf"
        path.write_bytes(b"NOPE" + struct.pack("<II", 1, 0) + struct.pack("<I", 0))
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.bwf"
        path.write_bytes(b"BWF1" + struct.pack("<II", 2, 0) + struct.pack("<I", 0))
        with pytest.raises(WeightFormatError, match="version"):
            load_weights(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "bad.bwf"
        path.write_bytes(b"BWF1" + struct.pack("<II", 1, 3))
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "bad.bwf"
        path.write_bytes(b"BWF1" + struct.pack("<III", 1, 0, 0) + b"x")
        with pytest.raises(WeightFormatError, match="trailing"):
            load_weights(path)

    def test_hand_written_fixture(self, tmp_path):
        # bytes assembled field by field, independent of save_weights
        name = b"conv1_1.bias"
        values = np.arange(64, dtype="<f4")
        blob = (
            b"BWF1"
            + struct.pack("<II", 1, 1)
            + struct.pack("<I", len(name)) + name
            + struct.pack("<II", 1, 64)
            + values.tobytes()
            + struct.pack("<I", 5) + b"fixed"
        )
        path = tmp_path / "hand.bwf"
        path.write_bytes(blob)
        store = load_weights(path)
        assert store.provenance == "fixed"
        np.testing.assert_array_equal(store.entries["conv1_1.bias"], values)

    def test_checked_in_fixture_loads(self):
        import pathlib

        fixture = pathlib.Path(__file__).parent / "data" / "tiny.bwf"
        store = load_weights(fixture)
        assert set(store.entries) == {"conv1_1.weight", "conv1_1.bias"}
        assert store.entries["conv1_1.weight"].shape == (64, 3, 3, 3)
        assert store.provenance == "hand-written test fixture"


def test_vgg_config_validates_taps():
    from fbp.nn import VggConfig

    config = VggConfig(taps=("conv4_1", "conv5_1"))
    assert not config.pre_relu
    with pytest.raises(ConfigurationError, match="fc7"):
        VggConfig(taps=("conv1_1", "fc7"))


def test_layer_sequence_matches_channel_plan():
    convs = [l for l in LAYER_SEQUENCE if not l.startswith("pool")]
    assert convs == list(CONV_CHANNELS)
    widths = [CONV_CHANNELS[l][1] for l in convs]
    assert widths == [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512]
