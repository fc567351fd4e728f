"""Losses, schedule, optimizer, and the fit loop's contracts."""

import math

import numpy as np
import pytest

from concurve.data import gen_toy1, gen_toy2
from concurve.diffcore import Tape
from concurve.errors import ConfigError, ContractError, DataError, DivergenceError
from concurve.models import MlpSpec, ModelSpec, init
from concurve.regularizers import RegConfig
from concurve.training import (
    AdamW,
    TrainConfig,
    cosine_lr,
    fit,
    get_preset,
    load_config,
    loss,
    save_config,
)


def run_loss(kind, pred, target):
    tape = Tape()
    p = tape.constant(np.asarray(pred, dtype=np.float64).reshape(-1, 1))
    return loss(tape, kind, p, np.asarray(target, dtype=np.float64)).item()


class TestLoss:
    def test_mse_zero_on_perfect_prediction(self):
        assert run_loss("mse", [1.0, -2.0, 3.0], [1.0, -2.0, 3.0]) == 0.0

    def test_mse_hand_value(self):
        assert run_loss("mse", [1.0, 2.0], [3.0, 2.0]) == pytest.approx(2.0)

    def test_bce_at_zero_logit(self):
        assert run_loss("bce_logits", [0.0], [1.0]) == pytest.approx(math.log(2.0))

    def test_bce_rejects_non_binary_targets(self):
        with pytest.raises(DataError):
            run_loss("bce_logits", [0.0], [0.5])

    def test_bce_stable_at_extreme_logits(self):
        # composed softplus must not overflow
        val = run_loss("bce_logits", [500.0, -500.0], [1.0, 0.0])
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_bce_gradient_is_sigmoid_minus_target(self):
        logits = np.array([[-1.5], [0.3], [2.0]])
        target = np.array([1.0, 0.0, 1.0])
        tape = Tape()
        p = tape.param(logits)
        tape.backward(loss(tape, "bce_logits", p, target))
        sig = 1.0 / (1.0 + np.exp(-logits))
        np.testing.assert_allclose(p.grad, (sig - target.reshape(-1, 1)) / 3.0,
                                   atol=1e-12)


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0.1, 0, 100) == pytest.approx(0.1)
        assert cosine_lr(0.1, 100, 100) == pytest.approx(0.0, abs=1e-18)
        assert cosine_lr(0.1, 50, 100) == pytest.approx(0.05)

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            cosine_lr(0.1, 101, 100)


class TestAdamW:
    def test_zero_grads_zero_decay_is_identity(self):
        p = np.array([[1.0, -2.0]])
        opt = AdamW([p], weight_decay=0.0)
        opt.step([np.zeros_like(p)], lr=0.1)
        np.testing.assert_array_equal(p, [[1.0, -2.0]])
        assert np.all(opt.m[0] == 0.0) and np.all(opt.v[0] == 0.0)

    def test_first_step_on_quadratic_moves_by_lr(self):
        # f(x) = x^2 at x=1: bias-corrected first step is ~ a sign step
        x = np.array([[1.0]])
        opt = AdamW([x], weight_decay=0.0)
        opt.step([np.array([[2.0]])], lr=0.1)
        assert x[0, 0] == pytest.approx(0.9, abs=1e-6)

    def test_decoupled_decay_only(self):
        p = np.array([[4.0]])
        opt = AdamW([p], weight_decay=0.1)
        opt.step([np.zeros_like(p)], lr=0.01)
        assert p[0, 0] == pytest.approx(4.0 * (1.0 - 0.001))

    def test_grad_shape_mismatch(self):
        opt = AdamW([np.zeros((2, 2))])
        with pytest.raises(ContractError):
            opt.step([np.zeros((2, 3))], lr=0.1)


def small_config(**kwargs) -> TrainConfig:
    base = dict(loss="mse", lr=1e-3, epochs=2, batch_size=32, seed=0)
    base.update(kwargs)
    return TrainConfig(**base)


def small_model(p=2, seed=0):
    return init(ModelSpec(tuple(MlpSpec((8,)) for _ in range(p))), seed=seed)


class TestConfigValidation:
    def test_epochs_zero_forbidden(self):
        with pytest.raises(ConfigError):
            small_config(epochs=0).validate()

    def test_batch_below_two_forbidden(self):
        with pytest.raises(ConfigError):
            small_config(batch_size=1).validate()

    def test_negative_lr_forbidden(self):
        with pytest.raises(ConfigError):
            small_config(lr=-0.1).validate()

    def test_bad_loss_forbidden(self):
        with pytest.raises(ConfigError):
            small_config(loss="mae").validate()


class TestFit:
    def test_zero_lr_leaves_parameters_unchanged(self):
        ds = gen_toy1(200, rho=0.0, seed=1)
        model = small_model()
        before = [p.copy() for p in model.parameters()]
        fit(model, ds, small_config(lr=0.0, epochs=1))
        for prev, now in zip(before, model.parameters()):
            np.testing.assert_array_equal(prev, now)

    def test_determinism(self):
        ds = gen_toy2(300, seed=2)
        cfg = small_config(epochs=3, seed=5,
                           reg=RegConfig(kind="concurvity", lam=0.05))
        m1, r1 = fit(small_model(seed=7), ds, cfg)
        m2, r2 = fit(small_model(seed=7), ds, cfg)
        assert r1.train_loss == r2.train_loss
        assert r1.val_loss == r2.val_loss
        assert r1.val_rperp == r2.val_rperp
        assert r1.step_penalties == r2.step_penalties
        assert r1.final_val_fit == r2.final_val_fit
        for pa, pb in zip(m1.parameters(), m2.parameters()):
            assert np.array_equal(pa, pb)

    def test_warmup_penalties_exactly_zero(self):
        ds = gen_toy2(640, seed=3)
        cfg = small_config(epochs=5, batch_size=64,
                           reg=RegConfig(kind="concurvity", lam=0.5,
                                         warmup_fraction=0.05))
        _, report = fit(small_model(), ds, cfg)
        total = len(report.step_penalties)
        cutoff = 0.05 * total
        for step, pen in enumerate(report.step_penalties):
            if step < cutoff:
                assert pen == 0.0
            else:
                assert pen > 0.0

    def test_report_lengths_match_epochs(self):
        ds = gen_toy1(150, rho=0.0, seed=4)
        _, report = fit(small_model(), ds, small_config(epochs=3))
        assert len(report.train_loss) == 3
        assert len(report.val_loss) == 3
        assert len(report.val_rperp) == 3
        assert len(report.epoch_seconds) == 3

    def test_short_final_batch_kept_singleton_dropped(self):
        # 105 train rows, batch 50 -> 50+50+5 steps; 101 rows -> 50+50, singleton dropped
        def steps_for(n_train):
            features = np.random.default_rng(0).uniform(size=(n_train + 20, 2))
            split = np.array(["train"] * n_train + ["val"] * 20, dtype=object)
            from concurve.data import Dataset
            ds = Dataset(features, features[:, 0], ["x1", "x2"], "regression", split)
            _, report = fit(small_model(), ds, small_config(epochs=1, batch_size=50))
            return len(report.step_penalties)

        assert steps_for(105) == 3
        assert steps_for(101) == 2

    def test_divergence_aborts_with_step(self):
        ds = gen_toy1(100, rho=0.0, seed=6)
        model = small_model()
        model.components[0].weights[0][:] = 1e200
        with np.errstate(over="ignore"), pytest.raises(DivergenceError, match="step 0"):
            fit(model, ds, small_config())

    def test_binary_task_requires_bce(self):
        from concurve.data import Dataset
        rng = np.random.default_rng(0)
        features = rng.uniform(size=(100, 2))
        target = (features[:, 0] > 0.5).astype(float)
        split = np.array(["train"] * 80 + ["val"] * 20, dtype=object)
        ds = Dataset(features, target, ["x1", "x2"], "binary", split)
        with pytest.raises(ConfigError):
            fit(small_model(), ds, small_config(loss="mse"))
        _, report = fit(small_model(), ds, small_config(loss="bce_logits"))
        assert report.fit_metric_name == "bce"

    def test_report_csv_schema(self, tmp_path):
        ds = gen_toy1(150, rho=0.0, seed=4)
        _, report = fit(small_model(), ds, small_config(epochs=2))
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_rperp"
        assert len(lines) == 3


class TestPresets:
    def test_toy_preset_matches_published_recipe(self):
        preset = get_preset("toy")
        cfg = preset.base_config()
        assert (cfg.lr, cfg.epochs, cfg.batch_size, cfg.weight_decay) == (1e-3, 50, 128, 0.0)
        assert preset.hidden == (128, 128, 128)
        assert preset.activation == "gelu"
        spec = preset.model_spec(7)
        assert len(spec.components) == 7

    def test_seasonal_preset_builds_two_period_model(self):
        preset = get_preset("seasonal")
        spec = preset.model_spec(1)
        assert spec.resolved_inputs() == (0, 0)
        periods = sorted(c.period for c in spec.components)
        assert periods == [24.0, 168.0]
        with pytest.raises(ConfigError):
            preset.model_spec(3)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            get_preset("imagenet")


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(loss="bce_logits", lr=0.00793, weight_decay=1.79e-2,
                          epochs=91, batch_size=128, seed=42,
                          reg=RegConfig(kind="concurvity", lam=0.1))
        path = tmp_path / "train.cfg"
        save_config(cfg, path)
        loaded = load_config(path)
        assert loaded == cfg

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("lr 0.1\n")
        with pytest.raises(ConfigError, match="bad.cfg:1"):
            load_config(path)
