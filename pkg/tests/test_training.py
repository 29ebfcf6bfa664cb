"""
Тесты обучения дрейфа: данные, целевая функция, Adam и цикл обучения
"""
import numpy as np
import pytest

from daisi_assimilation.api.errors import ConfigError, TrainingDivergedError
from daisi_assimilation.config.constants import L63_X0
from daisi_assimilation.core.drift import GaussianDrift, GmmPrior, NetDrift
from daisi_assimilation.core.interpolant import NormStats
from daisi_assimilation.core.metrics import mmd_rbf
from daisi_assimilation.core.sde import SdeConfig, integrate_forward
from daisi_assimilation.core.training import (
    Adam,
    Dataset,
    FlowBatch,
    TrainConfig,
    flow_matching_loss,
    generate_l63_dataset,
    train_drift,
)


def _gaussian_samples(n=2000, seed=5):
    rng = np.random.default_rng(seed)
    return np.array([3.0, -1.0]) + 2.0 * rng.standard_normal((n, 2))


class TestDataset:
    def test_single_step_trajectory(self):
        dataset = generate_l63_dataset(1)
        np.testing.assert_array_equal(dataset.samples, [L63_X0])
        assert dataset.stats.sigma == 1.0
        assert dataset.val_idx.size == 0

    def test_split_is_partition(self):
        dataset = Dataset.from_samples(_gaussian_samples(100), split=0.8)
        assert dataset.train_idx.size == 80
        assert dataset.val_idx.size == 20
        assert not set(dataset.train_idx) & set(dataset.val_idx)
        np.testing.assert_array_equal(np.sort(np.concatenate([dataset.train_idx, dataset.val_idx])),
                                      np.arange(100))

    def test_stats_from_train_part_only(self):
        dataset = Dataset.from_samples(_gaussian_samples(100), split=0.5)
        np.testing.assert_allclose(dataset.stats.mu, dataset.train.mean(axis=0))
        assert dataset.stats.sigma == pytest.approx(np.std(dataset.train - dataset.train.mean(axis=0)))

    def test_split_is_chronological(self):
        dataset = generate_l63_dataset(200, split=0.8)
        assert dataset.val_idx.min() > dataset.train_idx.max()
        np.testing.assert_array_equal(dataset.train_idx, np.arange(160))
        np.testing.assert_array_equal(dataset.val, dataset.samples[160:])

    def test_l63_dataset_dimensions(self):
        dataset = generate_l63_dataset(200)
        assert dataset.samples.shape == (200, 3)
        assert dataset.dim == 3


class TestFlowMatching:
    def test_interpolate_linear(self):
        z1 = np.array([[1.0, 2.0]])
        z0 = np.array([[-1.0, 0.5]])
        inputs, target = FlowBatch(z1, z0, np.array([0.25])).interpolate()
        np.testing.assert_allclose(inputs, [[0.25 * 1.0 - 0.75, 0.5 + 0.375, 0.25]])
        np.testing.assert_allclose(target, z1 - z0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        model = NetDrift.build(2, (5,), seed=4)
        model.params = model.params + 0.1 * rng.standard_normal(model.params.size)
        batch = FlowBatch(rng.standard_normal((4, 2)), rng.standard_normal((4, 2)), rng.uniform(0.1, 0.9, 4))
        _, grad = flow_matching_loss(model, batch)
        h = 1e-6
        numeric = np.empty_like(grad)
        for i in range(grad.size):
            step = np.zeros_like(model.params)
            step[i] = h
            plus, _ = flow_matching_loss(model, batch, model.params + step)
            minus, _ = flow_matching_loss(model, batch, model.params - step)
            numeric[i] = (plus - minus) / (2.0 * h)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-7)

    def test_perfect_model_has_zero_loss_at_fixed_pair(self):
        model = NetDrift(
            [2, 1], np.array([0.0, 0.0, 3.0]), NormStats.identity(1)
        )
        batch = FlowBatch(np.array([[2.0]]), np.array([[-1.0]]), np.array([0.4]))
        loss, _ = flow_matching_loss(model, batch)
        assert loss == pytest.approx(0.0)


class TestAdam:
    def test_first_step_is_signed_lr(self):
        optimizer = Adam(lr=0.01)
        params = np.array([1.0, -2.0, 0.5])
        grad = np.array([3.0, -0.2, 1e-3])
        updated = optimizer.step(params, grad)
        np.testing.assert_allclose(updated, params - 0.01 * np.sign(grad), rtol=1e-6)

    def test_zero_gradient_keeps_params(self):
        optimizer = Adam(lr=0.1)
        params = np.array([1.0, 2.0])
        np.testing.assert_array_equal(optimizer.step(params, np.zeros(2)), params)


class TestTrainDrift:
    def test_deterministic(self):
        dataset = Dataset.from_samples(_gaussian_samples(300))
        cfg = TrainConfig(lr=1e-3, epochs=2, seed=7)
        a = train_drift(dataset, (16,), cfg)
        b = train_drift(dataset, (16,), cfg)
        np.testing.assert_array_equal(a.params, b.params)
        assert a.history == b.history

    def test_history_per_epoch(self):
        dataset = Dataset.from_samples(_gaussian_samples(200))
        model = train_drift(dataset, (8,), TrainConfig(lr=1e-3, epochs=3))
        assert [h["epoch"] for h in model.history] == [0, 1, 2]
        assert all(np.isfinite(h["train_loss"]) and np.isfinite(h["val_loss"]) for h in model.history)
        assert model.stats == dataset.stats

    def test_training_reduces_loss(self):
        dataset = Dataset.from_samples(_gaussian_samples())
        untrained = train_drift(dataset, (32, 32), TrainConfig(lr=3e-3, epochs=0, seed=2))
        trained = train_drift(dataset, (32, 32), TrainConfig(lr=3e-3, epochs=10, seed=2))
        rng = np.random.default_rng(99)
        w = dataset.stats.normalize(dataset.val)
        batch = FlowBatch(w, rng.standard_normal(w.shape), rng.uniform(0.0, 1.0, w.shape[0]))
        loss_before, _ = flow_matching_loss(untrained, batch)
        loss_after, _ = flow_matching_loss(trained, batch)
        assert loss_after < loss_before

    def test_divergence_reports_epoch(self):
        samples = np.full((8, 2), 1e200)
        dataset = Dataset(samples, np.arange(8), np.array([], dtype=int), NormStats.identity(2))
        with pytest.raises(TrainingDivergedError) as exc_info:
            train_drift(dataset, (4,), TrainConfig(epochs=1))
        assert exc_info.value.details["epoch"] == 0
        assert exc_info.value.details["batch"] == 0


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"batch_size": 0},
        {"split": 1.0},
        {"split": 0.0},
        {"lr": 0.0},
        {"epochs": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


@pytest.mark.slow
class TestTrainedDriftAccuracy:
    def test_matches_gaussian_drift(self):
        samples = np.random.default_rng(31).standard_normal((50_000, 1))
        model = train_drift(Dataset.from_samples(samples), (64, 64),
                            TrainConfig(lr=1e-3, batch_size=256, epochs=30, seed=1))
        exact = GaussianDrift(0.0, 1.0)
        rng = np.random.default_rng(32)
        errors = []
        for z, t in zip(rng.uniform(-2.0, 2.0, 100), rng.uniform(0.1, 0.9, 100)):
            errors.append(abs(model.drift([[z]], t)[0, 0] - exact.drift([[z]], t)[0, 0]))
        assert np.mean(errors) <= 0.05

    def test_gmm_net_samples(self):
        rng = np.random.default_rng(33)
        prior = GmmPrior.testbed()
        dataset = Dataset.from_samples(prior.sample(50_000, rng))
        model = train_drift(dataset, (64,), TrainConfig(lr=1e-3, batch_size=256, epochs=40, seed=1))
        z0 = dataset.stats.mu + dataset.stats.sigma * rng.standard_normal((10_000, 1))
        out = integrate_forward(model, SdeConfig(steps=500), z0)
        assert mmd_rbf(out, prior.sample(10_000, rng)) <= 0.02
