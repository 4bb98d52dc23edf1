import numpy as np
import pytest
from scipy import ndimage

from panosynth import losses
from panosynth.losses import (FeatureExtractor, GeneratorLossParts, LossWeights,
                              adv_losses, feat_match_loss, laplacian_loss, pd_loss,
                              psnr, ssim, ssim_metric, total_generator_loss)
from panosynth.tensor import ShapeError, Tensor

from util import rand_image


class TestSSIM:
    def test_self_similarity_is_one(self):
        x = Tensor(rand_image((1, 3, 16, 20), seed=0))
        assert abs(float(ssim(x, x).data) - 1.0) < 1e-6

    def test_constant_zero_vs_one_closed_form(self):
        # means 0 and 1, zero variances: SSIM = C1 / (1 + C1)
        a = Tensor(np.zeros((1, 1, 16, 16)))
        b = Tensor(np.ones((1, 1, 16, 16)))
        expected = 1e-4 / (1 + 1e-4)
        assert abs(float(ssim(a, b).data) - expected) < 1e-6

    def test_symmetry(self):
        a = Tensor(rand_image((1, 2, 14, 14), seed=1, dtype=np.float64))
        b = Tensor(rand_image((1, 2, 14, 14), seed=2, dtype=np.float64))
        assert abs(float(ssim(a, b).data) - float(ssim(b, a).data)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(Tensor(np.zeros((1, 1, 16, 16))), Tensor(np.zeros((1, 1, 16, 17))))

    def test_too_small_rejected(self):
        with pytest.raises(ShapeError):
            ssim(Tensor(np.zeros((1, 1, 8, 8))), Tensor(np.zeros((1, 1, 8, 8))))


class TestLaplacianLoss:
    def test_zero_on_identical(self):
        x = Tensor(rand_image((1, 3, 16, 16), seed=3))
        assert float(laplacian_loss(x, x, 2).data) == 0.0

    def test_symmetric(self):
        a = Tensor(rand_image((1, 1, 16, 16), seed=4, dtype=np.float64))
        b = Tensor(rand_image((1, 1, 16, 16), seed=5, dtype=np.float64))
        assert abs(float(laplacian_loss(a, b, 2).data)
                   - float(laplacian_loss(b, a, 2).data)) < 1e-12

    def test_one_level_direct_oracle(self):
        # independent pipeline: scipy blur -> subsample -> bilinear up,
        # band = img - up(down(img)); loss = L1(band) + 2 * L1(lowpass)
        rng = np.random.default_rng(6)
        a = rng.uniform(0, 1, (6, 8))
        b = rng.uniform(0, 1, (6, 8))
        k = np.array([1, 4, 6, 4, 1]) / 16.0

        def blur_down(img):
            sm = ndimage.correlate1d(img, k, axis=0, mode="constant")
            sm = ndimage.correlate1d(sm, k, axis=1, mode="constant")
            return sm[::2, ::2]

        def up2(img):
            h, w = img.shape
            src_r = np.clip((np.arange(2 * h) + 0.5) / 2 - 0.5, 0, h - 1)
            src_c = np.clip((np.arange(2 * w) + 0.5) / 2 - 0.5, 0, w - 1)
            r0 = np.floor(src_r).astype(int)
            c0 = np.floor(src_c).astype(int)
            fr = src_r - r0
            fc = src_c - c0
            r1 = np.minimum(r0 + 1, h - 1)
            c1 = np.minimum(c0 + 1, w - 1)
            top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
            bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
            return top * (1 - fr)[:, None] + bot * fr[:, None]

        def bands(img):
            low = blur_down(img)
            return img - up2(low), low

        band_a, low_a = bands(a)
        band_b, low_b = bands(b)
        expected = np.mean(np.abs(band_a - band_b)) + 2.0 * np.mean(np.abs(low_a - low_b))
        got = float(laplacian_loss(Tensor(a[None, None]), Tensor(b[None, None]), 1).data)
        assert abs(got - expected) < 1e-10

    def test_indivisible_dims_rejected(self):
        with pytest.raises(ShapeError):
            laplacian_loss(Tensor(np.zeros((1, 1, 6, 6))),
                           Tensor(np.zeros((1, 1, 6, 6))), 3)


class TestPdLoss:
    def test_zero_on_identical(self):
        x = Tensor(rand_image((1, 3, 16, 16), seed=7))
        assert float(pd_loss(x, x, FeatureExtractor(seed=0)).data) == 0.0

    def test_sorted_difference_oracle(self):
        a = Tensor(np.array([[[[0.0, 2.0]]]]))
        b = Tensor(np.array([[[[1.0, 3.0]]]]))
        assert float(pd_loss(a, b).data) == 1.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        vals = rng.normal(size=16)
        a = Tensor(vals.reshape(1, 1, 4, 4))
        b = Tensor(rng.normal(size=(1, 1, 4, 4)))
        base = float(pd_loss(a, b).data)
        shuffled = Tensor(rng.permutation(vals).reshape(1, 1, 4, 4))
        assert abs(float(pd_loss(shuffled, b).data) - base) < 1e-12

    def test_matches_exact_w1(self):
        # sorted mean-absolute-difference equals 1D Wasserstein-1
        rng = np.random.default_rng(9)
        xa, xb = rng.normal(size=25), rng.normal(size=25)
        expected = np.mean(np.abs(np.sort(xa) - np.sort(xb)))
        got = float(pd_loss(Tensor(xa.reshape(1, 1, 5, 5)),
                            Tensor(xb.reshape(1, 1, 5, 5))).data)
        assert abs(got - expected) < 1e-12

    def test_extractor_reproducible_from_seed(self):
        x = Tensor(rand_image((1, 3, 16, 16), seed=10))
        y = Tensor(rand_image((1, 3, 16, 16), seed=11))
        v1 = float(pd_loss(x, y, FeatureExtractor(seed=42)).data)
        v2 = float(pd_loss(x, y, FeatureExtractor(seed=42)).data)
        v3 = float(pd_loss(x, y, FeatureExtractor(seed=43)).data)
        assert v1 == v2
        assert v1 != v3


class TestFeatMatch:
    def test_identical_lists_zero(self):
        feats = [Tensor(rand_image((1, 4, 8, 8), seed=i)) for i in range(3)]
        assert float(feat_match_loss(feats, feats).data) == 0.0

    def test_single_layer_unit_difference(self):
        real = [Tensor(np.zeros((1, 2, 4, 4)))]
        fake = [Tensor(np.ones((1, 2, 4, 4)))]
        assert float(feat_match_loss(real, fake).data) == 1.0

    def test_two_layer_average(self):
        real = [Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 2)))]
        fake = [Tensor(np.ones((1, 1, 2, 2))), Tensor(3 * np.ones((1, 1, 2, 2)))]
        assert float(feat_match_loss(real, fake).data) == 2.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            feat_match_loss([Tensor(np.zeros((1, 1, 2, 2)))], [])


class TestAdvLosses:
    def test_perfect_discriminator_drives_loss_to_zero(self):
        real = Tensor(np.full((1, 1, 3, 3), 20.0))
        fake = Tensor(np.full((1, 1, 3, 3), -20.0))
        loss_d, _ = adv_losses(real, fake)
        assert float(loss_d.data) < 1e-6

    def test_neutral_scores_give_log2(self):
        z = Tensor(np.zeros((2, 1, 4, 4)))
        loss_d, _ = adv_losses(z, z)
        assert abs(float(loss_d.data) - np.log(2)) < 1e-6

    def test_generator_loss_monotone_in_fake_score(self):
        z = Tensor(np.zeros((1, 1, 2, 2)))
        values = []
        for s in (-2.0, 0.0, 2.0):
            _, lg = adv_losses(z, Tensor(np.full((1, 1, 2, 2), s)))
            values.append(float(lg.data))
        assert values[0] > values[1] > values[2]

    def test_literal_convention_available(self):
        z = Tensor(np.zeros((1, 1, 2, 2)))
        loss_d, loss_g = adv_losses(z, z, convention="one-minus-log")
        # log D(real) + (1 - log D(fake)) with D = 0.5: -(-log2) - 1 + (-log2)
        assert abs(float(loss_d.data) - (np.log(2) - np.log(2) - 1.0)) < 1e-6
        assert abs(float(loss_g.data) - np.log(2)) < 1e-6

    def test_unknown_convention(self):
        z = Tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ValueError):
            adv_losses(z, z, convention="hinge")


class TestTotalGeneratorLoss:
    def test_adv_only(self):
        parts = GeneratorLossParts(adv=Tensor(np.array(0.25)))
        w = LossWeights(lambda_ssim=0, lambda_pd=0, lambda_feat=0, lambda_lap=0)
        assert float(total_generator_loss(parts, w).data) == 0.25

    def test_perfect_prediction_ssim_term_vanishes(self):
        parts = GeneratorLossParts(adv=Tensor(np.array(0.1)),
                                   ssim=Tensor(np.array(1.0)))
        w = LossWeights(lambda_ssim=1, lambda_pd=0, lambda_feat=0, lambda_lap=0)
        assert abs(float(total_generator_loss(parts, w).data) - 0.1) < 1e-12

    def test_weighted_formula(self):
        parts = GeneratorLossParts(adv=Tensor(np.array(0.1)),
                                   ssim=Tensor(np.array(0.75)))
        w = LossWeights(lambda_ssim=2, lambda_pd=0, lambda_feat=0, lambda_lap=0)
        assert abs(float(total_generator_loss(parts, w).data) - 0.6) < 1e-12

    def test_missing_term_with_weight_rejected(self):
        parts = GeneratorLossParts(adv=Tensor(np.array(0.1)))
        with pytest.raises(ValueError):
            total_generator_loss(parts, LossWeights())

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_ssim=-1)


class TestPSNR:
    def test_identical_gives_inf_sentinel(self):
        x = rand_image((3, 20, 20), seed=12)
        assert psnr(x, x, border=2) == float("inf")

    def test_closed_form_constant_difference(self):
        a = np.zeros((3, 32, 32), dtype=np.float64)
        b = np.full((3, 32, 32), 100.0 / 255.0)
        expected = 10 * np.log10(255.0 ** 2 / 100.0 ** 2)
        assert abs(psnr(a, b, border=8) - expected) < 0.01

    def test_border_corruption_ignored(self):
        x = rand_image((3, 24, 24), seed=13)
        y = x.copy()
        y[:, :8, :] = 0.0
        y[:, -8:, :] = 0.0
        y[:, :, :8] = 0.0
        y[:, :, -8:] = 0.0
        assert psnr(x, y, border=8) == float("inf")

    def test_interior_corruption_detected(self):
        x = rand_image((3, 24, 24), seed=14)
        y = x.copy()
        y[:, 12, 12] += 0.5
        assert psnr(x, y, border=8) < float("inf")

    def test_strictly_decreasing_in_mse(self):
        x = np.zeros((1, 20, 20))
        noisy = [psnr(x, np.full_like(x, v), border=2) for v in (0.1, 0.2, 0.4)]
        assert noisy[0] > noisy[1] > noisy[2]

    def test_empty_interior_rejected(self):
        x = rand_image((3, 16, 16), seed=15)
        with pytest.raises(ValueError):
            psnr(x, x, border=8)

    def test_ssim_metric_border(self):
        x = rand_image((3, 40, 40), seed=16)
        y = x.copy()
        y[:, :8, :] = 0.0
        assert abs(ssim_metric(x, y, border=8) - 1.0) < 1e-6
