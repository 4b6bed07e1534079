"""Tests for the training loop, early stopping, and cross-validation."""
import numpy as np
import pytest

from whistlekit.dataset import FoldAssignment
from whistlekit.nn import Model, ModelConfig, dense, relu, softmax
from whistlekit.training import TrainConfig, cross_validate, evaluate_loss, train


def toy_separable(n=40, seed=0):
    """Two 2-d gaussian blobs with a wide margin."""
    rng = np.random.default_rng(seed)
    half = n // 2
    x0 = rng.normal((-2.0, -2.0), 0.4, size=(half, 2))
    x1 = rng.normal((2.0, 2.0), 0.4, size=(n - half, 2))
    x = np.vstack([x0, x1]).astype(np.float32)
    y = np.array([0] * half + [1] * (n - half))
    order = rng.permutation(n)
    return x[order], y[order]


def tiny_model(seed=0):
    config = ModelConfig(input_shape=(2,),
                         layers=(dense(8), relu(), dense(2), softmax()))
    return Model(config, seed=seed)


class TestTrainLoop:
    def test_separable_toy_reaches_95_percent(self):
        x, y = toy_separable()
        model = tiny_model()
        config = TrainConfig(lr=0.05, batch_size=8, max_epochs=200,
                             patience=15, seed=0)
        train(model, (x, y), (x.copy(), y.copy()), config)
        _, acc = evaluate_loss(model, x, y)
        assert acc >= 0.95

    def test_empty_sets_rejected(self):
        x, y = toy_separable(8)
        with pytest.raises(ValueError):
            train(tiny_model(), (x[:0], y[:0]), (x, y))
        with pytest.raises(ValueError):
            train(tiny_model(), (x, y), (x[:0], y[:0]))

    def test_frozen_val_loss_stops_after_patience_plus_one(self):
        # lr=0 never changes the weights, so the validation loss is
        # constant: the first epoch counts as the improvement over +inf and
        # the next `patience` epochs exhaust the counter
        x, y = toy_separable(12)
        config = TrainConfig(lr=0.0, batch_size=4, max_epochs=50,
                             patience=3, seed=1)
        result = train(tiny_model(), (x, y), (x, y), config)
        assert len(result.history) == config.patience + 1
        assert result.best_epoch == 0

    def test_improving_val_loss_runs_to_max_epochs(self):
        x, y = toy_separable()
        config = TrainConfig(lr=0.01, batch_size=40, max_epochs=10,
                             patience=2, seed=0)
        result = train(tiny_model(), (x, y), (x, y), config)
        losses = [h["val_loss"] for h in result.history]
        assert all(b < a for a, b in zip(losses, losses[1:]))  # premise
        assert len(result.history) == config.max_epochs

    def test_best_checkpoint_is_min_val_loss(self):
        x, y = toy_separable()
        # large lr makes the loss bounce so the best epoch is not the last
        config = TrainConfig(lr=0.5, batch_size=4, max_epochs=30,
                             patience=30, seed=2)
        model = tiny_model()
        result = train(model, (x, y), (x, y), config)
        losses = [h["val_loss"] for h in result.history]
        assert result.best_val_loss == min(losses)
        assert result.history[result.best_epoch]["val_loss"] == min(losses)
        # the model holds the best weights, not the last ones
        val_loss, _ = evaluate_loss(model, x, y)
        assert val_loss == pytest.approx(result.best_val_loss, rel=1e-6)

    def test_deterministic_given_seed(self):
        x, y = toy_separable()
        config = TrainConfig(lr=0.05, batch_size=8, max_epochs=5,
                             patience=5, seed=7)
        r1 = train(tiny_model(seed=3), (x, y), (x, y), config)
        r2 = train(tiny_model(seed=3), (x, y), (x, y), config)
        assert r1.best_val_loss == r2.best_val_loss
        for name in r1.best_weights:
            assert np.array_equal(r1.best_weights[name], r2.best_weights[name])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestCrossValidate:
    def test_symmetric_duplicated_dataset(self):
        # each fold holds an identical copy of the same data, and the
        # builder ignores the seed, so both folds must score identically
        x, y = toy_separable(20, seed=4)
        images = np.vstack([x, x])
        labels = np.concatenate([y, y])
        folds = FoldAssignment(
            k=2, assignment={i: (0 if i < 20 else 1) for i in range(40)})
        config = TrainConfig(lr=0.05, batch_size=10, max_epochs=15,
                             patience=15, seed=0)
        out = cross_validate(lambda seed: tiny_model(seed=5), images, labels,
                             folds, config)
        a, b = out["folds"]
        assert a["metrics"]["accuracy"] == b["metrics"]["accuracy"]
        assert a["roc"].auc == b["roc"].auc
        assert a["scores"] == b["scores"]

    def test_mean_accuracy_is_arithmetic_mean(self):
        x, y = toy_separable(24, seed=8)
        folds = FoldAssignment(
            k=2, assignment={i: int(y[i]) ^ (i % 2) for i in range(24)})
        config = TrainConfig(lr=0.05, batch_size=8, max_epochs=10,
                             patience=10, seed=0)
        out = cross_validate(tiny_model, x, y, folds, config)
        accs = [f["metrics"]["accuracy"] for f in out["folds"]]
        assert out["mean_accuracy"] == pytest.approx(float(np.mean(accs)))

    def test_single_class_fold_rejected(self):
        x, y = toy_separable(10, seed=1)
        order = np.argsort(y)
        x, y = x[order], y[order]  # fold 0 all-negative, fold 1 all-positive
        folds = FoldAssignment(
            k=2, assignment={i: (0 if i < 5 else 1) for i in range(10)})
        with pytest.raises(ValueError, match="single class"):
            cross_validate(tiny_model, x, y, folds,
                           TrainConfig(max_epochs=1, seed=0))

    def test_fold_report_recomputable(self):
        from whistlekit.metrics import confusion_and_metrics
        x, y = toy_separable(24, seed=8)
        folds = FoldAssignment(
            k=2, assignment={i: int(y[i]) ^ (i % 2) for i in range(24)})
        config = TrainConfig(lr=0.05, batch_size=8, max_epochs=5,
                             patience=5, seed=0)
        out = cross_validate(tiny_model, x, y, folds, config)
        for fold in out["folds"]:
            preds = [1 if s >= 0.5 else 0 for s in fold["scores"]]
            again = confusion_and_metrics(fold["labels"], preds)
            assert again["confusion"] == fold["metrics"]["confusion"]
