import numpy as np
import pytest

from rspo_lab.objectives import (
    AdvantageConfig,
    aw_loss,
    fixed_point_residual,
    group_advantages,
    quad_gradient,
    quad_loss,
    rspo_gradient,
    rspo_loss,
    rspo_weights,
)
from rspo_lab.score import center_scores, uncentered_scores


def random_batch(rng, n=6):
    deltas = rng.normal(size=n)
    adv = rng.normal(size=n)
    adv -= adv.mean()  # group advantages are zero-sum by construction
    return center_scores(deltas), adv


class TestAdvantages:
    def test_zero_sum(self):
        adv = group_advantages([1.0, 0.0, 0.0, 1.0])
        assert abs(adv.sum()) < 1e-12
        np.testing.assert_allclose(adv, [0.5, -0.5, -0.5, 0.5])

    def test_normalized_scale(self):
        rewards = np.array([1.0, 0.0, 0.0, 1.0])
        cfg = AdvantageConfig(normalize=True, epsilon=1e-4)
        adv = group_advantages(rewards, cfg)
        np.testing.assert_allclose(adv, (rewards - 0.5) / (0.5 + 1e-4))

    def test_zero_variance_group_retained(self):
        adv = group_advantages([1.0, 1.0, 1.0])
        np.testing.assert_array_equal(adv, 0.0)
        adv = group_advantages([1.0, 1.0], AdvantageConfig(normalize=True))
        np.testing.assert_array_equal(adv, 0.0)

    def test_small_group_rejected(self):
        with pytest.raises(ValueError):
            group_advantages([1.0])

    def test_bad_epsilon_rejected(self):
        with pytest.raises(ValueError):
            AdvantageConfig(epsilon=0.0)


class TestFeedbackLoss:
    def test_forward_value_closed_form(self, rng):
        # loss = -<A, d> + lam * ||d||^2 in the batch mean inner product
        batch, adv = random_batch(rng)
        lam = 0.3
        out = rspo_loss(batch, adv, lam)
        d = batch.centered
        expected = -np.mean(adv * d) + lam * np.mean(d**2)
        assert out.loss == pytest.approx(expected, rel=1e-12)

    def test_weights_definition(self, rng):
        batch, adv = random_batch(rng)
        w = rspo_weights(adv, batch.centered, 0.7)
        np.testing.assert_allclose(w, adv - 0.7 * batch.centered)

    def test_negative_lam_rejected(self, rng):
        batch, adv = random_batch(rng)
        with pytest.raises(ValueError):
            rspo_loss(batch, adv, -0.1)

    def test_aw_is_lam_zero(self, rng):
        batch, adv = random_batch(rng)
        assert aw_loss(batch, adv).loss == rspo_loss(batch, adv, 0.0).loss

    def test_fixed_point(self):
        # scores pinned at A/lam zero both the weights and the residual
        lam = 0.25
        adv = np.array([0.5, -0.5, 0.25, -0.25])
        batch = center_scores(adv / lam)
        assert fixed_point_residual(batch, adv, lam) < 1e-12
        out = rspo_loss(batch, adv, lam)
        np.testing.assert_allclose(out.weights, 0.0, atol=1e-12)

    def test_loss_at_fixed_point(self):
        # forward value there is -||A||^2/lam + lam*||A/lam||^2 = 0
        lam = 0.25
        adv = np.array([0.5, -0.5, 0.25, -0.25])
        batch = center_scores(adv / lam)
        assert abs(rspo_loss(batch, adv, lam).loss) < 1e-12


class TestQuadLoss:
    def test_value_and_decomposition(self, rng):
        batch, adv = random_batch(rng)
        lam = 0.4
        out = quad_loss(batch, adv, lam)
        d = batch.centered
        expected = -np.mean(adv * batch.deltas) + 0.5 * lam * np.mean(d**2)
        assert out.loss == pytest.approx(expected, rel=1e-12)
        parts = out.decomposition
        assert set(parts) == {"square", "const", "center_cross"}
        assert sum(parts.values()) == pytest.approx(out.loss, rel=1e-9)

    def test_lam_zero_has_no_decomposition(self, rng):
        batch, adv = random_batch(rng)
        assert quad_loss(batch, adv, 0.0).decomposition == {}

    def test_penalty_uses_half_lam(self, rng):
        # the quadratic penalty carries lam/2 where the feedback forward
        # value carries the full lam
        batch, adv = random_batch(rng)
        zero = np.zeros_like(adv)
        lam = 0.8
        quad_pen = quad_loss(batch, zero, lam).loss
        rspo_pen = rspo_loss(batch, zero, lam).loss
        assert quad_pen == pytest.approx(0.5 * rspo_pen, rel=1e-12)


class TestGradients:
    def grads(self, rng, n, dim=5):
        return [rng.normal(size=dim) for _ in range(n)]

    def test_rspo_gradient_formula(self, rng):
        batch, adv = random_batch(rng)
        lam = 0.3
        gs = self.grads(rng, adv.size)
        out = rspo_gradient(batch, adv, lam, gs)
        expected = -np.mean(
            [(a - lam * c) * g for a, c, g in zip(adv, batch.centered, gs)], axis=0
        )
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_quad_gradient_matches_rspo_to_first_order(self, rng):
        # identical analytic gradients when both use the same score grads
        batch, adv = random_batch(rng)
        lam = 0.45
        gs = self.grads(rng, adv.size)
        a = rspo_gradient(batch, adv, lam, gs)
        b = quad_gradient(batch, adv, lam, gs)
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_lam_zero_gradient_bitwise_identical_to_aw(self, rng):
        # same accumulation loop, so exact equality, not merely approximate
        batch, adv = random_batch(rng)
        gs = self.grads(rng, adv.size)
        a = rspo_gradient(batch, adv, 0.0, gs)
        b = rspo_gradient(batch, adv, 0.0, [g.copy() for g in gs])
        assert np.array_equal(a, b)

    def test_uncentered_batch_changes_gradient(self, rng):
        deltas = rng.normal(size=4) + 2.0
        adv = rng.normal(size=4)
        adv -= adv.mean()
        gs = self.grads(rng, 4)
        a = rspo_gradient(center_scores(deltas), adv, 0.5, gs)
        b = rspo_gradient(uncentered_scores(deltas), adv, 0.5, gs)
        assert not np.allclose(a, b)

    def test_gradient_count_mismatch_rejected(self, rng):
        batch, adv = random_batch(rng)
        with pytest.raises(ValueError):
            rspo_gradient(batch, adv, 0.1, self.grads(rng, adv.size - 1))

    def test_fixed_point_requires_positive_lam(self, rng):
        batch, adv = random_batch(rng)
        with pytest.raises(ValueError):
            fixed_point_residual(batch, adv, 0.0)
