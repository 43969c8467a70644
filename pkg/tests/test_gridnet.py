import math

import numpy as np
import pytest

from pointsal.gridnet import (
    GridNet,
    backward_input,
    backward_weights,
    bce_loss,
    forward,
    gradient_check,
    load_checkpoint,
    masked_bce,
    save_checkpoint,
    sgd_step,
    train_step,
)
from pointsal.labels import SparseLabels
from pointsal.seeding import rng_for

from conftest import random_labels


# --- independent oracle: nested-loop same-padding 3x3 convolution ----------

def naive_conv_net(model, image):
    """Plain-Python forward pass used as the reference implementation."""
    x = image
    h, w, _ = image.shape
    for li, (wt, b) in enumerate(zip(model.weights, model.biases)):
        c_out, c_in = wt.shape[:2]
        out = np.zeros((h, w, c_out))
        for i in range(h):
            for j in range(w):
                for o in range(c_out):
                    acc = b[o]
                    for ci in range(c_in):
                        for ki in range(3):
                            for kj in range(3):
                                ii, jj = i + ki - 1, j + kj - 1
                                if 0 <= ii < h and 0 <= jj < w:
                                    acc += x[ii, jj, ci] * wt[o, ci, ki, kj]
                    out[i, j, o] = acc
        if li < model.num_layers - 1:
            x = np.maximum(out, 0.0)
        else:
            return 1.0 / (1.0 + np.exp(-out[:, :, 0]))


class TestForward:
    def test_zero_weights_give_uniform_half(self):
        model = GridNet.create("test", in_channels=1, seed=0, hidden=(4,))
        for w in model.weights:
            w[:] = 0.0
        image = rng_for(0, "fwd0").uniform(size=(8, 8, 1))
        assert np.all(forward(model, image) == 0.5)

    def test_single_center_tap_matches_sigmoid(self):
        # one conv layer whose kernel only has a center weight acts per pixel
        model = GridNet.create("test", in_channels=1, seed=0, hidden=())
        model.weights[0][:] = 0.0
        model.weights[0][0, 0, 1, 1] = 1.7
        image = rng_for(1, "fwd1").uniform(size=(5, 5, 1))
        expected = 1.0 / (1.0 + np.exp(-1.7 * image[:, :, 0]))
        np.testing.assert_allclose(forward(model, image), expected, rtol=0, atol=1e-15)

    def test_matches_naive_loop_oracle(self):
        model = GridNet.create("test", in_channels=1, seed=5, hidden=(3,))
        image = rng_for(2, "fwd2").uniform(size=(5, 5, 1))
        got = forward(model, image)
        want = naive_conv_net(model, image)
        np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)
        assert np.all((got > 0) & (got < 1))

    def test_pure_function_bitwise(self):
        model = GridNet.create("k16", in_channels=3, seed=9)
        image = rng_for(3, "fwd3").uniform(size=(10, 10, 3))
        a = forward(model, image)
        b = forward(model, image)
        assert np.array_equal(a, b)

    def test_shape_mismatch_rejected(self):
        model = GridNet.create("test", in_channels=3, seed=0, hidden=(2,))
        with pytest.raises(ValueError):
            forward(model, np.zeros((8, 8, 1)))


class TestMaskedBce:
    def test_empty_labels_zero(self):
        pred = np.full((4, 4), 0.3)
        assert masked_bce(pred, SparseLabels("x", 4, 4)) == 0.0

    def test_single_pixel_half(self):
        labels = SparseLabels("x", 4, 4)
        labels.add_point(1, 2, 1, "queried", 0)
        pred = np.full((4, 4), 0.5)
        assert masked_bce(pred, labels) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_two_pixel_hand_value(self):
        labels = SparseLabels("x", 2, 2)
        labels.add_point(0, 0, 1, "queried", 0)
        labels.add_point(0, 1, 0, "queried", 0)
        pred = np.array([[0.9, 0.2], [0.5, 0.5]])
        expected = (-math.log(0.9) - math.log(0.8)) / 2.0
        assert masked_bce(pred, labels) == pytest.approx(expected, abs=1e-12)

    def test_clamp_keeps_loss_finite(self):
        labels = SparseLabels("x", 1, 1)
        labels.add_point(0, 0, 1, "queried", 0)
        assert math.isfinite(masked_bce(np.array([[0.0]]), labels))


class TestGradients:
    def test_empty_labels_zero_grads(self, tiny_net, tiny_image):
        labels = SparseLabels("x", 6, 6)
        grads = backward_weights(tiny_net, tiny_image, labels)
        assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)
        assert np.all(backward_input(tiny_net, tiny_image, labels) == 0)

    def test_weight_gradients_match_finite_differences(self):
        for seed in (0, 1):
            model = GridNet.create("test", in_channels=1, seed=seed, hidden=(3, 3))
            image = rng_for(seed, "gradw").uniform(size=(6, 6, 1))
            labels = random_labels("x", 6, 6, 8, seed)
            report = gradient_check(model, image, labels, check_input=False)
            assert report.max_rel_err < 1e-4
            assert report.num_params_checked == model.num_params()

    def test_input_gradients_match_finite_differences(self):
        model = GridNet.create("test", in_channels=2, seed=7, hidden=(3,))
        image = rng_for(7, "gradi").uniform(size=(5, 5, 2))
        labels = random_labels("x", 5, 5, 6, 7)
        report = gradient_check(model, image, labels, check_input=True)
        assert report.max_rel_err < 1e-4

    def test_linear_conv_input_gradient_closed_form(self):
        # single conv + sigmoid: d loss / d x = transposed conv of (p - y)/n
        model = GridNet.create("test", in_channels=1, seed=0, hidden=())
        wt = model.weights[0]
        image = rng_for(8, "gradl").uniform(size=(3, 3, 1))
        labels = SparseLabels("x", 3, 3)
        labels.add_point(1, 1, 1, "queried", 0)
        labels.add_point(0, 2, 0, "queried", 0)
        mask, classes = labels.as_arrays()

        prob = forward(model, image)
        residual = np.where(mask, (prob - classes) / mask.sum(), 0.0)
        expected = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                for ki in range(3):
                    for kj in range(3):
                        oi, oj = i - (ki - 1), j - (kj - 1)
                        if 0 <= oi < 3 and 0 <= oj < 3:
                            expected[i, j] += residual[oi, oj] * wt[0, 0, ki, kj]
        got = backward_input(model, image, labels)[:, :, 0]
        np.testing.assert_allclose(got, expected, atol=1e-12, rtol=0)


class TestSgd:
    def test_zero_lr_keeps_weights_but_counts(self, tiny_net, tiny_image):
        labels = random_labels("x", 6, 6, 4, 0)
        before = tiny_net.flat_params()
        grads = backward_weights(tiny_net, tiny_image, labels)
        sgd_step(tiny_net, grads, lr=0.0)
        assert np.array_equal(tiny_net.flat_params(), before)
        assert tiny_net.update_count == 1

    def test_plain_step_without_momentum(self, tiny_net, tiny_image):
        labels = random_labels("x", 6, 6, 4, 0)
        grads = backward_weights(tiny_net, tiny_image, labels)
        w_before = tiny_net.weights[0].copy()
        sgd_step(tiny_net, grads, lr=0.1, momentum=0.0)
        np.testing.assert_allclose(
            tiny_net.weights[0], w_before - 0.1 * grads[0][0], atol=1e-15
        )

    def test_two_momentum_steps_hand_value(self):
        model = GridNet.create("test", in_channels=1, seed=1, hidden=())
        w0 = model.weights[0].copy()
        g1 = [(np.ones_like(model.weights[0]), np.ones_like(model.biases[0]))]
        g2 = [(2.0 * np.ones_like(model.weights[0]), 2.0 * np.ones_like(model.biases[0]))]
        lr = 0.1
        sgd_step(model, g1, lr=lr, momentum=0.9)
        sgd_step(model, g2, lr=lr, momentum=0.9)
        expected = w0 - lr * g1[0][0] - lr * (0.9 * g1[0][0] + g2[0][0])
        np.testing.assert_allclose(model.weights[0], expected, atol=1e-15)

    def test_nonfinite_gradient_rejected(self, tiny_net, tiny_image):
        labels = random_labels("x", 6, 6, 4, 0)
        grads = backward_weights(tiny_net, tiny_image, labels)
        grads[0][0][0, 0, 0, 0] = np.nan
        before = tiny_net.flat_params()
        with pytest.raises(FloatingPointError):
            sgd_step(tiny_net, grads, lr=0.1)
        assert np.array_equal(tiny_net.flat_params(), before)
        assert tiny_net.update_count == 0

    def test_loss_decreases_over_training(self):
        model = GridNet.create("test", in_channels=1, seed=4, hidden=(4, 4))
        image = rng_for(4, "train").uniform(size=(8, 8, 1))
        labels = random_labels("x", 8, 8, 10, 4)
        mask, classes = labels.as_arrays()
        initial = bce_loss(forward(model, image), mask, classes)
        for _ in range(50):
            train_step(model, image, mask, classes, lr=0.05, momentum=0.9)
        final = bce_loss(forward(model, image), mask, classes)
        assert final < initial


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        model = GridNet.create("k12x24", in_channels=3, seed=21)
        model.update_count = 17
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.architecture_id == "k12x24"
        assert loaded.seed == 21
        assert loaded.update_count == 17
        assert np.array_equal(loaded.flat_params(), model.flat_params())

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)
