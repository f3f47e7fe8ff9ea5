import numpy as np
import pytest

from nbb.tensor import ConvLayer, bilinear_resize, conv2d, maxpool2, relu


def conv2d_oracle(x, weights, biases, padding):
    """Quadruple-loop reference convolution (stride 1, zero padding)."""
    out_c, in_c, kh, kw = weights.shape
    c, h, w = x.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((out_c, h, w))
    for o in range(out_c):
        for y in range(h):
            for xx in range(w):
                acc = biases[o]
                for i in range(in_c):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += weights[o, i, ky, kx] * xp[i, y + ky, xx + kx]
                out[o, y, xx] = acc
    return out


def maxpool2_oracle(x):
    c, h, w = x.shape
    out = np.zeros((c, h // 2, w // 2), dtype=x.dtype)
    for i in range(c):
        for y in range(h // 2):
            for xx in range(w // 2):
                out[i, y, xx] = x[i, 2 * y:2 * y + 2, 2 * xx:2 * xx + 2].max()
    return out


def make_layer(rng, out_c, in_c, k):
    return ConvLayer("test",
                     rng.standard_normal((out_c, in_c, k, k)).astype(np.float32),
                     rng.standard_normal(out_c).astype(np.float32))


class TestConv2d:
    def test_scalar_kernel(self):
        x = np.ones((1, 3, 3), dtype=np.float32)
        layer = ConvLayer("s", np.full((1, 1, 1, 1), 2.0, np.float32),
                          np.array([0.5], np.float32))
        assert np.allclose(conv2d(x, layer, 0), 2.5)

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 5, 6)).astype(np.float32)
        w = np.zeros((2, 2, 3, 3), np.float32)
        w[0, 0, 1, 1] = 1.0
        w[1, 1, 1, 1] = 1.0
        layer = ConvLayer("id", w, np.zeros(2, np.float32))
        assert np.allclose(conv2d(x, layer, 1), x, atol=1e-6)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 4, 4)).astype(np.float32)
        layer = make_layer(rng, 3, 2, 3)
        got = conv2d(x, layer, 1)
        want = conv2d_oracle(x, layer.weights, layer.biases, 1)
        assert got.shape == (3, 4, 4)
        assert np.allclose(got, want, atol=1e-5)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        layer = ConvLayer("lin", rng.standard_normal((3, 2, 3, 3)).astype(np.float32),
                          np.zeros(3, np.float32))
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        y = rng.standard_normal((2, 6, 6)).astype(np.float32)
        combined = conv2d(2.0 * x + 0.5 * y, layer, 1)
        separate = 2.0 * conv2d(x, layer, 1) + 0.5 * conv2d(y, layer, 1)
        assert np.allclose(combined, separate, rtol=1e-5, atol=1e-5)

    def test_channel_mismatch(self):
        rng = np.random.default_rng(3)
        layer = make_layer(rng, 2, 3, 3)
        with pytest.raises(ValueError):
            conv2d(np.zeros((2, 4, 4), np.float32), layer, 1)

    def test_bad_padding(self):
        rng = np.random.default_rng(4)
        layer = make_layer(rng, 2, 2, 3)
        with pytest.raises(ValueError):
            conv2d(np.zeros((2, 4, 4), np.float32), layer, 2)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 16, 16)).astype(np.float32)
        layer = make_layer(rng, 8, 4, 3)
        a = conv2d(x, layer, 1)
        b = conv2d(x, layer, 1)
        assert (a == b).all()


class TestRelu:
    def test_definition(self):
        x = np.array([[[-1.0, 0.0, 2.0]]], np.float32)
        assert (relu(x) == [[[0.0, 0.0, 2.0]]]).all()

    def test_all_negative(self):
        assert (relu(np.full((2, 3, 3), -5.0, np.float32)) == 0).all()

    def test_fixpoint(self):
        x = np.abs(np.random.default_rng(0).standard_normal((2, 3, 3))).astype(np.float32)
        assert (relu(x) == x).all()


class TestMaxpool2:
    def test_constant(self):
        out = maxpool2(np.full((3, 4, 6), 7.0, np.float32))
        assert out.shape == (3, 2, 3)
        assert (out == 7.0).all()

    def test_single_window(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]], np.float32)
        assert maxpool2(x).reshape(()) == 4.0

    def test_matches_oracle(self):
        x = np.random.default_rng(6).standard_normal((4, 8, 8)).astype(np.float32)
        assert (maxpool2(x) == maxpool2_oracle(x)).all()

    def test_odd_dimension(self):
        with pytest.raises(ValueError):
            maxpool2(np.zeros((1, 3, 4), np.float32))

    def test_commutes_with_relu(self):
        for seed in range(5):
            x = np.random.default_rng(seed).standard_normal((3, 6, 8)).astype(np.float32)
            assert (maxpool2(relu(x)) == relu(maxpool2(x))).all()


class TestBilinearResize:
    def test_identity(self):
        x = np.random.default_rng(7).standard_normal((2, 5, 7)).astype(np.float32)
        assert (bilinear_resize(x, 5, 7) == x).all()

    def test_constant(self):
        out = bilinear_resize(np.full((1, 4, 4), 3.5, np.float32), 9, 3)
        assert out.shape == (1, 9, 3)
        assert np.allclose(out, 3.5)

    def test_linear_midpoint(self):
        x = np.array([[[0.0, 2.0], [0.0, 2.0]]], np.float32)
        out = bilinear_resize(x, 2, 3)
        assert np.allclose(out[0, :, 1], 1.0)

    def test_zero_target(self):
        with pytest.raises(ValueError):
            bilinear_resize(np.zeros((1, 4, 4), np.float32), 0, 4)

    def test_outputs_finite(self):
        x = np.random.default_rng(8).standard_normal((3, 6, 6)).astype(np.float32)
        assert np.isfinite(bilinear_resize(x, 13, 4)).all()
