import numpy as np
import pytest

from panosynth import tensor as T
from panosynth.clae import (AffineHead, ConditionEncoder, cross_patch_corr,
                            digitize_angle, modulate)
from panosynth.tensor import ShapeError, Tensor

from util import rand_tensor


def brute_force_cpc(x: np.ndarray, y: np.ndarray, patch: int) -> np.ndarray:
    """Quadruple-nested reference implementation of the patch correlation."""
    c, h, w = x.shape
    pad = patch // 2
    s = np.zeros((h, w))
    for pi in range(h // patch):
        for pj in range(w // patch):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for ch in range(c):
                        for a in range(patch):
                            for b in range(patch):
                                yi, yj = i + a - pad, j + b - pad
                                if 0 <= yi < h and 0 <= yj < w:
                                    acc += x[ch, pi * patch + a, pj * patch + b] * y[ch, yi, yj]
                    s[i, j] += acc
    return s


class TestDigitizeAngle:
    def test_published_example(self):
        code = digitize_angle(30, 60, 13)
        assert code.index == 6
        assert "".join(str(int(v)) for v in code.onehot) == "0000001000000"

    def test_zero_maps_to_zero(self):
        assert digitize_angle(0, 60, 12).index == 0

    def test_exact_rational_boundary(self):
        # 25/60*12 = 5 exactly; float evaluation order must not lose it
        assert digitize_angle(25, 60, 12).index == 5

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            digitize_angle(60, 60, 12)
        with pytest.raises(ValueError):
            digitize_angle(-1, 60, 12)

    @pytest.mark.parametrize("delta", [12, 13])
    def test_monotone_and_surjective(self, delta):
        thetas = np.linspace(0, 60, 2000, endpoint=False)
        indices = [digitize_angle(t, 60, delta).index for t in thetas]
        assert all(b >= a for a, b in zip(indices, indices[1:]))
        assert set(indices) == set(range(delta))

    def test_onehot_wellformed(self):
        code = digitize_angle(42.5, 60, 12)
        assert code.onehot.sum() == 1
        assert code.onehot[code.index] == 1


class TestCrossPatchCorr:
    def test_zero_input_gives_zero_map(self):
        x = Tensor(np.zeros((2, 8, 8)))
        y = rand_tensor((2, 8, 8), seed=1)
        np.testing.assert_array_equal(cross_patch_corr(x, y, 4).s.data, 0.0)

    def test_impulse_patch_reads_window(self):
        # a single unit impulse in one patch turns the response into a
        # shifted copy of the target's matching channel window
        patch = 2
        x = np.zeros((1, 4, 4))
        x[0, 0, 0] = 1.0  # patch (0,0), offset (0,0)
        y = np.random.default_rng(2).normal(size=(1, 4, 4))
        s = cross_patch_corr(Tensor(x), Tensor(y), patch).s.data
        np.testing.assert_allclose(s, brute_force_cpc(x, y, patch), atol=1e-12)
        # impulse at kernel offset (0,0) with pad 1: S[i,j] = y[i-1, j-1]
        np.testing.assert_allclose(s[1:, 1:], y[0, :-1, :-1], atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force_oracle_both_directions(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(1, 8, 8))
        y = rng.normal(size=(1, 8, 8))
        got_lr = cross_patch_corr(Tensor(x), Tensor(y), 4, "left_to_right")
        got_rl = cross_patch_corr(Tensor(y), Tensor(x), 4, "right_to_left")
        np.testing.assert_allclose(got_lr.s.data, brute_force_cpc(x, y, 4), atol=1e-5)
        np.testing.assert_allclose(got_rl.s.data, brute_force_cpc(y, x, 4), atol=1e-5)
        assert got_lr.direction == "left_to_right"
        assert got_rl.direction == "right_to_left"

    def test_single_patch_degenerate_case(self):
        # P = H = W: the only patch is X itself used as one big kernel
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 4, 4))
        y = rng.normal(size=(2, 4, 4))
        s = cross_patch_corr(Tensor(x), Tensor(y), 4).s.data
        np.testing.assert_allclose(s, brute_force_cpc(x, y, 4), atol=1e-10)

    def test_indivisible_patch_rejected(self):
        with pytest.raises(ShapeError):
            cross_patch_corr(rand_tensor((1, 6, 8)), rand_tensor((1, 6, 8)), 4)

    def test_swapping_inputs_swaps_maps(self):
        rng = np.random.default_rng(6)
        x, y = Tensor(rng.normal(size=(2, 4, 4))), Tensor(rng.normal(size=(2, 4, 4)))
        ab = cross_patch_corr(x, y, 2).s.data
        ba = cross_patch_corr(y, x, 2).s.data
        np.testing.assert_allclose(ab, brute_force_cpc(x.data, y.data, 2), atol=1e-10)
        np.testing.assert_allclose(ba, brute_force_cpc(y.data, x.data, 2), atol=1e-10)


class TestModulate:
    def test_identity_modulation(self):
        g = rand_tensor((2, 5), seed=7)
        zero = Tensor(np.zeros((2, 5)))
        np.testing.assert_allclose(modulate(g, zero, zero).data, g.data)

    def test_shift_only(self):
        g = rand_tensor((2, 5), seed=8)
        one = Tensor(np.ones((2, 5)))
        zero = Tensor(np.zeros((2, 5)))
        np.testing.assert_allclose(modulate(g, one, zero).data, g.data + 1.0)

    def test_formula_value(self):
        g = Tensor(np.array([[2.0]]))
        mu = Tensor(np.array([[-1.0]]))
        sigma = Tensor(np.array([[0.5]]))
        np.testing.assert_allclose(modulate(g, mu, sigma).data, [[2.0]])

    def test_exactly_invertible(self):
        rng = np.random.default_rng(9)
        g = Tensor(rng.normal(size=(3, 4)))
        mu = Tensor(rng.normal(size=(3, 4)))
        sigma = Tensor(rng.uniform(-0.5, 0.5, size=(3, 4)))
        h = modulate(g, mu, sigma)
        recovered = (h - mu) / (1.0 + sigma)
        np.testing.assert_allclose(recovered.data, g.data, atol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            modulate(rand_tensor((2, 5)), rand_tensor((2, 4)), rand_tensor((2, 5)))


class TestConditionEncoder:
    def test_deterministic(self):
        enc = ConditionEncoder(12, 32, np.random.default_rng(0))
        onehot = Tensor(np.eye(12, dtype=np.float32)[None, 3])
        a = enc(onehot)
        b = enc(onehot)
        np.testing.assert_array_equal(a.mu.data, b.mu.data)
        np.testing.assert_array_equal(a.sigma.data, b.sigma.data)

    def test_output_width_is_latent(self):
        enc = ConditionEncoder(12, 48, np.random.default_rng(0))
        cond = enc(Tensor(np.eye(12, dtype=np.float32)[None, 0]))
        assert cond.z.shape == (1, 48)
        assert cond.mu.shape == (1, 48)
        assert cond.sigma.shape == (1, 48)

    def test_distinct_codes_distinct_conditions(self):
        enc = ConditionEncoder(12, 32, np.random.default_rng(1))
        eye = np.eye(12, dtype=np.float32)
        a = enc(Tensor(eye[None, 2]))
        b = enc(Tensor(eye[None, 9]))
        assert np.abs(a.mu.data - b.mu.data).sum() > 0

    def test_wrong_length_rejected(self):
        enc = ConditionEncoder(12, 32, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            enc(Tensor(np.zeros((1, 13), dtype=np.float32)))


class TestAffineHead:
    def test_zero_weights_give_identity(self):
        head = AffineHead(16, 3, np.random.default_rng(0))
        head.fc1.w.data[:] = 0
        head.fc2.w.data[:] = 0
        out = head(Tensor(np.random.default_rng(1).normal(size=(2, 16)).astype(np.float32)))
        assert out.shape == (2, 3, 2, 3)
        for n in range(2):
            for k in range(3):
                np.testing.assert_allclose(out.data[n, k], [[1, 0, 0], [0, 1, 0]])

    def test_translation_locked(self):
        head = AffineHead(16, 3, np.random.default_rng(2), translation_locked=True)
        out = head(Tensor(np.random.default_rng(3).normal(size=(4, 16)).astype(np.float32)))
        np.testing.assert_array_equal(out.data[..., 0, 2], 0.0)
        np.testing.assert_array_equal(out.data[..., 1, 2], 0.0)

    def test_unlocked_translations_move(self):
        head = AffineHead(16, 3, np.random.default_rng(2), translation_locked=False)
        out = head(Tensor(np.random.default_rng(3).normal(size=(4, 16)).astype(np.float32)))
        assert np.abs(out.data[..., :, 2]).sum() > 0

    def test_reshape_order(self):
        # raw output (0.1, 0, ...) must perturb exactly entry a of matrix 1
        head = AffineHead(8, 3, np.random.default_rng(4), translation_locked=True)
        head.fc1.w.data[:] = 0
        head.fc1.b.data[:] = 0
        head.fc2.w.data[:] = 0
        head.fc2.b.data[:] = 0
        head.fc2.b.data[0] = 0.1
        out = head(Tensor(np.zeros((1, 8), dtype=np.float32)))
        expected = np.tile(np.array([[1.0, 0, 0], [0, 1.0, 0]]), (3, 1, 1))
        expected[0, 0, 0] += 0.1
        np.testing.assert_allclose(out.data[0], expected, atol=1e-7)
