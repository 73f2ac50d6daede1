import math

import numpy as np
import pytest
import torch

from glsed.algorithms.algorithm.guided_learning import (Augmenter, GuidedLearning, clip_bce, time_shift,
                                                        unsupervised_weight)
from glsed.algorithms.algorithm.sed_policy import SEDPolicy
from glsed.algorithms.utils.cnn import EncoderConfig
from glsed.algorithms.utils.disentangled import make_masks
from glsed.data import MinibatchPlan, TrainingSet


def make_trainer(all_args, n_classes=2, gl=True):
    torch.manual_seed(0)
    masks = make_masks([160, 80][:n_classes] + [40] * max(0, n_classes - 2), 160)
    ps = SEDPolicy(all_args, EncoderConfig.ps(channels=(4, 8, 160)), masks)
    pt = SEDPolicy(all_args, EncoderConfig.pt(channels=(4, 8, 160)), masks) if gl else None
    return GuidedLearning(all_args, ps, pt, Augmenter(enabled=False))


class TestUnsupervisedWeight:

    @pytest.mark.parametrize("gamma", [1.0, 0.996, 0.99, 0.98])
    def test_closed_form(self, gamma):
        for epoch in range(1, 201):
            expected = 0.0 if epoch <= 5 else 1.0 - gamma ** (epoch - 5)
            assert unsupervised_weight(epoch, 5, gamma) == pytest.approx(expected, abs=1e-12)

    def test_shape(self):
        weights = [unsupervised_weight(e, 5, 0.99) for e in range(1, 201)]
        assert all(w == 0.0 for w in weights[:5])
        assert all(0.0 <= w < 1.0 for w in weights)
        assert all(b > a for a, b in zip(weights[5:], weights[6:]))
        assert unsupervised_weight(200, 5, 1.0) == 0.0

    def test_invalid(self):
        with pytest.raises(AssertionError):
            unsupervised_weight(0, 5, 0.99)
        with pytest.raises(AssertionError):
            unsupervised_weight(3, 5, 1.5)


class TestClipBCE:

    def test_uninformative_prediction(self):
        probs = torch.full((3, 4), 0.5)
        targets = torch.tensor([[0, 1, 0, 1], [1, 1, 1, 1], [0, 0, 0, 0]], dtype=torch.float32)
        np.testing.assert_allclose(clip_bce(targets, probs).numpy(), math.log(2), rtol=1e-6)

    def test_saturated_prediction_is_finite(self):
        loss = clip_bce(torch.ones(1, 1), torch.zeros(1, 1))
        assert torch.isfinite(loss).all()
        assert loss.item() == pytest.approx(-math.log(1e-7), rel=1e-3)


class TestAugmenter:

    def test_time_shift(self):
        x = torch.arange(6, dtype=torch.float32).reshape(1, 6, 1)
        np.testing.assert_array_equal(time_shift(x, torch.tensor([2]))[0, :, 0].numpy(), [0, 0, 0, 1, 2, 3])
        np.testing.assert_array_equal(time_shift(x, torch.tensor([-2]))[0, :, 0].numpy(), [2, 3, 4, 5, 5, 5])

    def test_shifts_compose(self):
        x = torch.randn(3, 20, 4)
        s1, s2 = torch.tensor([1, 2, 0]), torch.tensor([3, 0, 5])
        torch.testing.assert_close(time_shift(time_shift(x, s1), s2), time_shift(x, s1 + s2))

    def test_seeded(self):
        x = torch.randn(4, 50, 8)
        torch.testing.assert_close(Augmenter(seed=3)(x), Augmenter(seed=3)(x))
        assert not torch.equal(Augmenter(seed=3)(x), Augmenter(seed=4)(x))

    def test_disabled_is_identity(self):
        x = torch.randn(2, 10, 3)
        assert torch.equal(Augmenter(enabled=False)(x), x)

    def test_state_round_trip(self):
        x = torch.randn(2, 30, 3)
        augmenter = Augmenter(seed=1)
        augmenter(x)
        state = augmenter.state_dict()
        expected = augmenter(x)
        restored = Augmenter(seed=99)
        restored.load_state_dict(state)
        torch.testing.assert_close(restored(x), expected)


class TestGuidedLearning:

    def test_learning_rate_schedule(self, make_args):
        policy = make_trainer(make_args()).ps_policy
        assert policy.lr_decay(1) == pytest.approx(0.0018)
        assert policy.lr_decay(10) == pytest.approx(0.0018)
        assert policy.lr_decay(11) == pytest.approx(0.00144)
        assert policy.optimizer.param_groups[0]["lr"] == pytest.approx(0.00144)
        assert policy.lr_decay(21) == pytest.approx(0.0018 * 0.8 ** 2)

    def test_pt_ignores_unlabeled_clips_when_a_is_zero(self, make_args, rng):
        trainer = make_trainer(make_args())
        features = rng.standard_normal((3, 500, 64)).astype(np.float32)
        labels = np.zeros((3, 2), dtype=np.float32)
        loss_ps, loss_pt = trainer.gl_losses(features, labels, np.zeros(3, dtype=bool), a=0.0)
        assert loss_pt.item() == 0.0
        loss_pt.backward()
        for p in trainer.pt_policy.model.parameters():
            assert p.grad is None or not p.grad.any()

    def test_ps_loss_does_not_reach_pt(self, make_args, rng):
        trainer = make_trainer(make_args())
        features = rng.standard_normal((2, 500, 64)).astype(np.float32)
        loss_ps, _ = trainer.gl_losses(features, np.zeros((2, 2), dtype=np.float32), np.zeros(2, dtype=bool), a=1.0)
        loss_ps.backward()
        assert all(p.grad is None for p in trainer.pt_policy.model.parameters())
        assert any(p.grad is not None and p.grad.any() for p in trainer.ps_policy.model.parameters())

    def test_hard_pseudo_labels(self, make_args, rng):
        trainer = make_trainer(make_args())
        trainer.prep_rollout()
        features = rng.standard_normal((4, 500, 64)).astype(np.float32)
        labels = np.array([[1, 0], [0, 1], [0, 0], [0, 0]], dtype=np.float32)
        labeled = np.array([True, True, False, False])
        a = 0.3

        loss_ps, loss_pt = trainer.gl_losses(features, labels, labeled, a)
        with torch.no_grad():
            s = trainer.ps_policy.get_probs(features).clip_probs
            t = trainer.pt_policy.get_probs(features).clip_probs
        y = torch.from_numpy(labels)
        expected_ps = (clip_bce(y[:2], s[:2]).sum() + clip_bce((t[2:] >= 0.5).float(), s[2:]).sum()) / 4
        expected_pt = (clip_bce(y[:2], t[:2]).sum() + a * clip_bce((s[2:] >= 0.5).float(), t[2:]).sum()) / 4
        assert loss_ps.item() == pytest.approx(expected_ps.item(), rel=1e-5)
        assert loss_pt.item() == pytest.approx(expected_pt.item(), rel=1e-5)

    def test_empty_batch(self, make_args):
        trainer = make_trainer(make_args(), gl=False)
        with pytest.raises(ValueError):
            trainer.supervised_step(np.zeros((0, 500, 64), dtype=np.float32), np.zeros((0, 2), dtype=np.float32))

    def test_supervised_epoch(self, make_args, rng):
        trainer = make_trainer(make_args(), gl=False)
        training = TrainingSet(rng.standard_normal((6, 500, 64)).astype(np.float32),
                               np.eye(2, dtype=np.float32)[rng.integers(0, 2, 6)], n_labeled=6)
        trainer.prep_training()
        info = trainer.train(training.batches(training.plan(4, rng, use_unlabeled=False)))
        assert info["loss_pt"] == 0.0
        assert np.isfinite(info["loss_ps"]) and info["loss_ps"] > 0

    def test_no_nan_over_many_updates(self, make_args):
        all_args = make_args(use_max_grad_norm=True)
        trainer = make_trainer(all_args)
        rng = np.random.default_rng(5)
        trainer.prep_training()
        for step in range(100):
            scale = 50.0 if step % 10 == 0 else 1.0
            features = (rng.standard_normal((2, 500, 64)) * scale).astype(np.float32)
            labels = rng.integers(0, 2, size=(2, 2)).astype(np.float32)
            info = trainer.gl_step(features, labels, np.array([True, False]), a=0.5)
            assert all(np.isfinite(v) for v in info.values())
        for p in list(trainer.ps_policy.model.parameters()) + list(trainer.pt_policy.model.parameters()):
            assert torch.isfinite(p).all()


class TestMinibatchPlan:

    def test_covers_every_clip_once(self, rng):
        plan = MinibatchPlan.shuffled(10, 7, 4, rng)
        assert len(plan) == 5
        np.testing.assert_array_equal(np.sort(np.concatenate(plan.batches)), np.arange(17))
        for batch in plan.batches:
            np.testing.assert_array_equal(plan.is_labeled(batch), batch < 10)

    def test_labeled_only(self, rng):
        training = TrainingSet(np.zeros((5, 2, 2)), np.zeros((5, 1)), n_labeled=3)
        plan = training.plan(2, rng, use_unlabeled=False)
        assert sorted(np.concatenate(plan.batches).tolist()) == [0, 1, 2]
        for features, labels, labeled in training.batches(plan):
            assert labeled.all()

    def test_requires_labeled_clips(self):
        with pytest.raises(ValueError):
            TrainingSet(np.zeros((2, 2, 2)), np.zeros((2, 1)), n_labeled=0)
