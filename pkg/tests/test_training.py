import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rnpe import diffcore as dc
from rnpe import training
from rnpe.flows import BnafSpec, SplineFlowSpec
from rnpe.standardize import DegenerateStatisticError, Standardizer, fit_standardizer
from rnpe.training import Adam, TrainConfig, TrainingDivergedError, fit_density_estimator, write_training_curve

LOG_2PI = np.log(2 * np.pi)


# ---------------------------------------------------------------- standardizer


def test_two_point_standardizer():
    s = fit_standardizer(np.array([[0.0], [2.0]]))
    assert s.mean[0] == 1.0
    assert s.scale[0] == 1.0


def test_standardizer_scales_linearly():
    x = np.random.default_rng(0).normal(size=(500, 3))
    a, b = fit_standardizer(x), fit_standardizer(10 * x)
    np.testing.assert_allclose(b.scale, 10 * a.scale, rtol=1e-14)


def test_standard_data_has_unit_scale():
    x = np.random.default_rng(1).normal(size=(100_000, 2))
    s = fit_standardizer(x)
    assert np.all(np.abs(s.mean) < 0.02)
    assert np.all(np.abs(s.scale - 1) < 0.02)


def test_constant_dimension_is_named():
    x = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    with pytest.raises(DegenerateStatisticError) as exc:
        fit_standardizer(x)
    assert exc.value.dim == 1
    assert "dimension 1" in str(exc.value)


def test_standardizer_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        Standardizer(np.zeros(2), np.array([1.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)))
def test_standardized_data_is_centred_and_unit_variance(x):
    if np.any(np.ptp(x, axis=0) < 1e-3):
        return
    s = fit_standardizer(x)
    z = s.apply(x)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.var(axis=0), 1.0, atol=1e-10)
    np.testing.assert_allclose(s.invert(z), x, atol=1e-12 * max(1.0, np.abs(x).max()))


def test_standardizer_serialises():
    s = fit_standardizer(np.random.default_rng(2).normal(size=(10, 2)))
    back = Standardizer.from_dict(s.to_dict())
    assert back.mean.tobytes() == s.mean.tobytes()
    assert back.scale.tobytes() == s.scale.tobytes()


# ------------------------------------------------------------------- config


def test_train_config_defaults():
    c = TrainConfig()
    assert (c.batch_size, c.max_epochs, c.patience, c.validation_fraction) == (256, 50, 5, 0.1)
    assert c.lr_for(BnafSpec(2)) == 1e-2
    assert c.lr_for(SplineFlowSpec(1, 2)) == 5e-4
    assert TrainConfig(learning_rate=3e-3).lr_for(BnafSpec(2)) == 3e-3


@pytest.mark.parametrize("kwargs", [{"validation_fraction": 0.0}, {"validation_fraction": 1.0},
                                    {"patience": 60}, {"batch_size": 0}])
def test_train_config_invariants(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_adam_first_step_moves_by_learning_rate():
    p = Adam(0.1).step(np.array([1.0, -1.0]), np.array([3.0, -0.5]))
    np.testing.assert_allclose(p, [0.9, -0.9], atol=1e-8)


# ----------------------------------------------------------------- fitting


@pytest.fixture(scope="module")
def bnaf_2d():
    data = np.random.default_rng(0).normal(size=(10_000, 2))
    return fit_density_estimator(data, spec=BnafSpec(2), config=TrainConfig(rng_seed=1))


def test_bnaf_fit_reaches_gaussian_entropy(bnaf_2d):
    model, curve = bnaf_2d
    # entropy of N(0, I2) per point is log(2 pi) + 1
    assert min(r["val_nll"] for r in curve) == pytest.approx(LOG_2PI + 1.0, abs=0.1)
    assert curve[0]["epoch"] == 0


def test_best_epoch_is_returned(bnaf_2d):
    model, curve = bnaf_2d
    best = min(curve, key=lambda r: r["val_nll"])
    assert best["val_nll"] <= curve[0]["val_nll"]
    assert len(curve) - 1 - best["epoch"] <= 5
    assert len(curve) - 1 <= 50


def test_bnaf_fit_on_standard_normal_at_zero():
    data = np.random.default_rng(3).normal(size=(10_000, 1))
    model, _ = fit_density_estimator(data, spec=BnafSpec(1), config=TrainConfig(rng_seed=2))
    assert model.log_prob(np.array([[0.0]]))[0] == pytest.approx(-0.5 * LOG_2PI, abs=0.1)


def test_conditional_spline_recovers_conjugate_posterior_mean():
    rng = np.random.default_rng(4)
    theta = rng.normal(size=(10_000, 1))
    x = theta + 0.1 * rng.normal(size=(10_000, 1))
    model, _ = fit_density_estimator(theta, x, SplineFlowSpec(1, 1), TrainConfig(rng_seed=5))
    draws = model.sample(10_000, np.array([0.5]), np.random.default_rng(6))
    # prior N(0, 1), noise sd 0.1: mean = 0.5 / (1 + 0.01)
    assert draws.mean() == pytest.approx(0.5 / 1.01, abs=0.05)


def test_spline_fit_on_shifted_data_samples_its_mean():
    rng = np.random.default_rng(7)
    data = 3.0 + rng.normal(size=(10_000, 1))
    noise_ctx = rng.normal(size=(10_000, 1))
    model, _ = fit_density_estimator(data, noise_ctx, SplineFlowSpec(1, 1), TrainConfig(rng_seed=8, max_epochs=20))
    draws = model.sample(10_000, np.array([0.0]), np.random.default_rng(9))
    assert draws.mean() == pytest.approx(3.0, abs=0.1)


def test_flat_validation_stops_after_patience():
    data = np.random.default_rng(10).normal(size=(500, 2))
    _, curve = fit_density_estimator(data, spec=BnafSpec(2, block=2),
                                     config=TrainConfig(learning_rate=0.0, max_epochs=50, patience=5))
    assert [r["epoch"] for r in curve] == list(range(6))


def test_fit_is_deterministic_given_seed():
    rng = np.random.default_rng(11)
    theta = rng.normal(size=(600, 2))
    x = theta + rng.normal(size=(600, 2))
    cfg = TrainConfig(max_epochs=2, patience=1, rng_seed=3)
    spec = SplineFlowSpec(2, 2, num_layers=2, bins=4)
    a, ca = fit_density_estimator(theta, x, spec, cfg)
    b, cb = fit_density_estimator(theta, x, spec, cfg)
    assert a.params.flat.tobytes() == b.params.flat.tobytes()
    assert ca == cb
    c, _ = fit_density_estimator(theta, x, spec, TrainConfig(max_epochs=2, patience=1, rng_seed=4))
    assert c.params.flat.tobytes() != a.params.flat.tobytes()


def test_raw_density_matches_change_of_variables():
    rng = np.random.default_rng(12)
    data = rng.normal(size=(400, 2)) * [3.0, 0.2] + [10.0, -1.0]
    model, _ = fit_density_estimator(data, spec=BnafSpec(2, block=3), config=TrainConfig(max_epochs=2, patience=1))
    pts = data[:50]
    std = model.input_standardizer
    via_std = training._std_log_prob(model.spec, model.params.unpack(), std.apply(pts), None)
    direct = model.log_prob(pts)
    np.testing.assert_allclose(direct, np.asarray(via_std) - np.sum(np.log(std.scale)), atol=1e-10)


def test_curve_nll_is_in_raw_units():
    rng = np.random.default_rng(13)
    data = rng.normal(size=(1000, 1))
    _, c1 = fit_density_estimator(data, spec=BnafSpec(1, block=2), config=TrainConfig(max_epochs=1, patience=1))
    _, c2 = fit_density_estimator(100 * data, spec=BnafSpec(1, block=2), config=TrainConfig(max_epochs=1, patience=1))
    assert c2[0]["val_nll"] - c1[0]["val_nll"] == pytest.approx(np.log(100.0), abs=1e-9)


def test_nan_loss_reports_epoch_and_batch(monkeypatch):
    calls = {"n": 0}
    real = training._std_log_prob

    def poisoned(spec, p, z, ctx):
        out = real(spec, p, z, ctx)
        if isinstance(out, dc.Tensor):  # gradient passes only
            calls["n"] += 1
            if calls["n"] == 6:
                return out * np.nan
        return out

    monkeypatch.setattr(training, "_std_log_prob", poisoned)
    data = np.random.default_rng(14).normal(size=(1000, 1))
    with pytest.raises(TrainingDivergedError) as exc:
        fit_density_estimator(data, spec=BnafSpec(1, block=2), config=TrainConfig(batch_size=256))
    # 900 training rows in batches of 256: the sixth batch is epoch 2, batch 1
    assert (exc.value.epoch, exc.value.batch) == (2, 1)


def test_input_errors():
    with pytest.raises(ValueError):
        fit_density_estimator(np.zeros((0, 2)), spec=BnafSpec(2))
    with pytest.raises(ValueError):
        fit_density_estimator(np.ones((10, 2)), np.ones((9, 1)), SplineFlowSpec(2, 1))
    with pytest.raises(ValueError):
        fit_density_estimator(np.random.default_rng(0).normal(size=(10, 2)), spec=SplineFlowSpec(2, 1))
    with pytest.raises(ValueError):
        fit_density_estimator(np.random.default_rng(0).normal(size=(10, 3)), spec=BnafSpec(2))


def test_training_curve_csv(tmp_path):
    curve = [{"epoch": 0, "train_nll": 1.5, "val_nll": 1.25}, {"epoch": 1, "train_nll": 1.0, "val_nll": 0.1}]
    write_training_curve(curve, tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows == [["epoch", "train_nll", "val_nll"], ["0", "1.5", "1.25"], ["1", "1.0", "0.1"]]
