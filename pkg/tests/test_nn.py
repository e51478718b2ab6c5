"""Projection head, latent rescaling, classifier MLP, weighted
cross-entropy, and Adam, with finite-difference checks on every
backward pass."""

import math

import numpy as np
import pytest

from qcnnkit import nn
from qcnnkit.errors import ConfigurationError


def make_head(rng, feature_dim=12, proj_hidden=6, latent=4):
    return nn.init_head(rng, latent, feature_dim, proj_hidden)


class TestInit:
    def test_shapes(self, rng):
        head = nn.init_head(rng, 8)
        assert head.proj_w1.shape == (256, 2048)
        assert head.proj_w2.shape == (8, 256)
        assert head.mlp_w1.shape == (16, 4)
        assert head.mlp_w2.shape == (8, 16)
        assert head.mlp_w3.shape == (4, 8)
        head.validate()

    def test_fan_in_bound(self, rng):
        head = nn.init_head(rng, 8)
        assert np.abs(head.proj_w1).max() <= 1.0 / math.sqrt(2048)
        assert np.abs(head.mlp_w1).max() <= 1.0 / math.sqrt(4)

    def test_seeded_determinism(self):
        a = nn.init_head(np.random.default_rng(3), 4)
        b = nn.init_head(np.random.default_rng(3), 4)
        assert np.array_equal(a.proj_w1, b.proj_w1)
        assert np.array_equal(a.mlp_b3, b.mlp_b3)

    def test_dict_round_trip(self, rng):
        head = make_head(rng)
        back = nn.HeadParams.from_dict(head.to_dict())
        for k, v in head.to_dict().items():
            assert np.array_equal(getattr(back, k), v)

    def test_validate_rejects_nan(self, rng):
        head = make_head(rng)
        head.proj_b1[0] = np.nan
        with pytest.raises(ConfigurationError):
            head.validate()


class TestProject:
    def test_zero_weights_give_zero(self, rng):
        head = make_head(rng)
        for k, v in head.to_dict().items():
            if k.startswith("proj"):
                v[:] = 0.0
        assert np.allclose(nn.project(np.ones(12), head), 0.0)

    def test_hand_computed_toy(self):
        head = make_head(np.random.default_rng(0), feature_dim=2,
                         proj_hidden=2, latent=4)
        head.proj_w1[:] = [[1.0, 0.0], [0.0, -1.0]]
        head.proj_b1[:] = [0.0, 0.5]
        head.proj_w2[:] = [[1.0, 1.0], [2.0, 0.0], [0.0, 3.0], [1.0, -1.0]]
        head.proj_b2[:] = [0.0, 0.1, 0.0, 0.0]
        # x = (2, 1): pre1 = (2, -0.5), relu -> (2, 0)
        out = nn.project(np.array([2.0, 1.0]), head)
        assert np.allclose(out, [2.0, 4.1, 0.0, 2.0])

    def test_batch_matches_loop(self, rng):
        head = make_head(rng)
        x = rng.normal(size=(5, 12))
        batch = nn.project(x, head)
        for b in range(5):
            assert np.allclose(batch[b], nn.project(x[b], head))

    def test_rejects_dim_mismatch(self, rng):
        with pytest.raises(ConfigurationError):
            nn.project(np.ones(13), make_head(rng))


class TestRescale:
    def test_midpoint(self):
        assert nn.rescale_latent(np.array(0.0)) == pytest.approx(math.pi / 2)

    def test_saturation(self):
        assert nn.rescale_latent(np.array(-20.0)) < 1e-8 * math.pi
        assert nn.rescale_latent(np.array(np.inf)) == pytest.approx(math.pi)
        assert nn.rescale_latent(np.array(-np.inf)) == pytest.approx(0.0)

    def test_range_and_monotonicity(self, rng):
        x = np.sort(rng.normal(scale=5, size=200))
        z = nn.rescale_latent(x)
        assert np.all(z > 0) and np.all(z < math.pi)
        assert np.all(np.diff(z) >= 0)

    def test_grad_matches_finite_difference(self, rng):
        x = rng.normal(scale=2, size=50)
        eps = 1e-6
        fd = (nn.rescale_latent(x + eps) - nn.rescale_latent(x - eps)) / (2 * eps)
        assert np.allclose(nn.rescale_grad(x), fd, atol=1e-8)

    def test_grad_at_zero(self):
        assert nn.rescale_grad(np.array(0.0)) == pytest.approx(math.pi / 4)


class TestMlp:
    def test_zero_weights_give_zero_logits(self, rng):
        head = make_head(rng)
        for k, v in head.to_dict().items():
            if k.startswith("mlp"):
                v[:] = 0.0
        assert np.allclose(nn.mlp_forward(np.ones(4), head), 0.0)

    def test_relu_blocks_negative_paths(self, rng):
        head = make_head(rng)
        head.mlp_w1[:] = 0.0
        head.mlp_b1[:] = -1.0  # first hidden layer saturated at zero
        a = nn.mlp_forward(np.zeros(4), head)
        b = nn.mlp_forward(rng.normal(size=4), head)
        assert np.allclose(a, b)

    def test_rejects_wrong_readout_length(self, rng):
        with pytest.raises(ConfigurationError):
            nn.mlp_forward(np.ones(5), make_head(rng))

    def test_deterministic(self, rng):
        head = make_head(rng)
        q = rng.normal(size=4)
        assert np.array_equal(nn.mlp_forward(q, head), nn.mlp_forward(q, head))


class TestSoftmaxAndLoss:
    def test_softmax_normalized(self, rng):
        p = nn.softmax(rng.normal(scale=10, size=(7, 4)))
        assert np.allclose(p.sum(axis=-1), 1.0)
        assert np.all(p > 0)

    def test_softmax_shift_invariant(self, rng):
        x = rng.normal(size=4)
        assert np.allclose(nn.softmax(x), nn.softmax(x + 123.0))

    def test_uniform_logits_unit_weight(self):
        loss, d = nn.weighted_cross_entropy(np.zeros(4), 1, np.ones(4))
        assert loss == pytest.approx(math.log(4))
        assert np.allclose(d, [0.25, -0.75, 0.25, 0.25])

    def test_weight_scales_loss_and_grad(self):
        w = np.array([1.0, 2.0, 1.0, 1.0])
        loss1, d1 = nn.weighted_cross_entropy(np.zeros(4), 1, np.ones(4))
        loss2, d2 = nn.weighted_cross_entropy(np.zeros(4), 1, w)
        assert loss2 == pytest.approx(2 * loss1)
        assert np.allclose(d2, 2 * d1)

    def test_batch_form(self, rng):
        logits = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, 6)
        w = rng.uniform(0.5, 2.0, 4)
        losses, grads = nn.weighted_cross_entropy(logits, labels, w)
        assert losses.shape == (6,)
        for b in range(6):
            l, g = nn.weighted_cross_entropy(logits[b], int(labels[b]), w)
            assert losses[b] == pytest.approx(l)
            assert np.allclose(grads[b], g)

    def test_grad_matches_finite_difference(self, rng):
        logits = rng.normal(size=4)
        w = rng.uniform(0.5, 3.0, 4)
        _, d = nn.weighted_cross_entropy(logits, 2, w)
        eps = 1e-7
        for k in range(4):
            hi, lo = logits.copy(), logits.copy()
            hi[k] += eps
            lo[k] -= eps
            fd = (nn.weighted_cross_entropy(hi, 2, w)[0]
                  - nn.weighted_cross_entropy(lo, 2, w)[0]) / (2 * eps)
            assert d[k] == pytest.approx(fd, abs=1e-6)

    def test_rejects_non_finite_logits(self):
        with pytest.raises(FloatingPointError):
            nn.weighted_cross_entropy(np.array([0.0, np.nan, 0.0, 0.0]), 0,
                                      np.ones(4))

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ConfigurationError):
            nn.weighted_cross_entropy(np.zeros(4), 0, np.array([1, 0, 1, 1.0]))


class TestBackward:
    def _loss_from_head(self, head, feature, label, w):
        cache = {}
        raw = nn.project(feature, head, cache)
        # stand-in for the quantum readout: any smooth map to length 4
        q = np.tanh(raw)
        logits = nn.mlp_forward(q, head, cache)
        loss, d_logits = nn.weighted_cross_entropy(logits, label, w)
        return loss, cache, q, raw, d_logits

    def test_matches_finite_difference(self, rng):
        head = make_head(rng)
        feature = rng.normal(size=12)
        w = np.ones(4)
        loss, cache, q, raw, d_logits = self._loss_from_head(head, feature, 1, w)
        mlp_grads, d_q = nn.mlp_backward(cache, d_logits, head)
        d_raw = d_q * (1.0 - q ** 2)
        grads = nn.backward_head(feature, head, cache, d_raw, d_logits)
        grads.update(mlp_grads)
        eps = 1e-6
        for name, p in head.to_dict().items():
            flat = p.ravel()
            for k in range(0, flat.size, max(1, flat.size // 7)):
                orig = flat[k]
                flat[k] = orig + eps
                hi = self._loss_from_head(head, feature, 1, w)[0]
                flat[k] = orig - eps
                lo = self._loss_from_head(head, feature, 1, w)[0]
                flat[k] = orig
                fd = (hi - lo) / (2 * eps)
                assert grads[name].ravel()[k] == pytest.approx(fd, abs=5e-6), name

    def test_zero_upstream_gives_zero_grads(self, rng):
        head = make_head(rng)
        cache = {}
        nn.project(rng.normal(size=12), head, cache)
        nn.mlp_forward(rng.normal(size=4), head, cache)
        grads = nn.backward_head(None, head, cache, np.zeros(4), np.zeros(4))
        assert all(not np.any(g) for g in grads.values())

    def test_requires_cache(self, rng):
        head = make_head(rng)
        with pytest.raises(ConfigurationError):
            nn.mlp_backward({}, np.zeros(4), head)
        with pytest.raises(ConfigurationError):
            nn.project_backward({}, np.zeros(4), head)

    def test_dead_relu_unit_gets_no_gradient(self, rng):
        head = make_head(rng)
        head.proj_b1[:] = -100.0  # every hidden unit clamped at zero
        cache = {}
        nn.project(rng.normal(size=12), head, cache)
        grads = nn.project_backward(cache, np.ones(4), head)
        assert not np.any(grads["proj_w1"])
        assert not np.any(grads["proj_b1"])


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = {"w": np.array([1.0, -2.0])}
        st = nn.AdamState(lr=0.1)
        st.step(p, {"w": np.zeros(2)})
        assert np.array_equal(p["w"], [1.0, -2.0])
        assert st.t == 1

    def test_first_step_is_signed_lr(self):
        p = {"w": np.array([0.0, 0.0])}
        st = nn.AdamState(lr=0.01)
        st.step(p, {"w": np.array([3.0, -7.0])})
        assert np.allclose(p["w"], [-0.01, 0.01], atol=1e-6)

    def test_quadratic_converges(self):
        # 200 steps on f(x) = x^2 from x = 1
        p = {"x": np.array([1.0])}
        st = nn.AdamState(lr=0.1)
        for _ in range(200):
            st.step(p, {"x": 2.0 * p["x"]})
        assert abs(p["x"][0]) < 0.05

    def test_rejects_shape_mismatch(self):
        st = nn.AdamState()
        with pytest.raises(ConfigurationError):
            st.step({"w": np.zeros(3)}, {"w": np.zeros(2)})

    def test_adam_step_wrapper(self):
        p = {"w": np.array([1.0])}
        st = nn.AdamState(lr=0.5)
        nn.adam_step(p, {"w": np.array([1.0])}, st)
        assert p["w"][0] < 1.0
