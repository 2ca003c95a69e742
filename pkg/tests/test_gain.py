from __future__ import annotations

import math

import numpy as np
import pytest

from pcgain.config import TrainConfig
from pcgain.data import ColumnSpec, Dataset, apply_mcar, encode, fit_scaling
from pcgain.datasets import mask_toy_target, toy_dataset
from pcgain.errors import ConfigError, DataError
from pcgain.evaluation import mean_impute, rmse_missing
from pcgain.gain import (
    GainModel,
    generator_input,
    generator_output,
    impute,
    init_gain,
    loss_D,
    loss_G_adv,
    loss_R,
    reconstruct,
    sample_hint,
    sample_noise,
    train_gain,
)

ln2 = math.log(2.0)


def small_encoded(n=40, d=3, rate=0.3, seed=0):
    vals = np.random.default_rng(seed).random((n, d)).astype(object)
    ds = apply_mcar(Dataset.from_values(vals, [ColumnSpec(f"c{j}") for j in range(d)]), rate, seed)
    return encode(ds)


def test_noise_support_and_mean():
    rng = np.random.default_rng(0)
    z = sample_noise(1000, 1000, 0.01, rng)
    assert z.min() >= 0.0 and z.max() <= 0.01
    assert abs(z.mean() - 0.005) < 1e-4


def test_noise_deterministic():
    a = sample_noise(3, 4, 0.01, np.random.default_rng(9))
    b = sample_noise(3, 4, 0.01, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_hint_extremes():
    m = (np.random.default_rng(0).random((50, 4)) < 0.5).astype(float)
    np.testing.assert_array_equal(sample_hint(m, 1.0, np.random.default_rng(1)), m)
    np.testing.assert_array_equal(sample_hint(m, 0.0, np.random.default_rng(1)), 0.5)


def test_hint_hidden_fraction():
    m = np.ones((1000, 100))
    h = sample_hint(m, 0.9, np.random.default_rng(2))
    assert 0.095 <= np.mean(h == 0.5) <= 0.105
    assert set(np.unique(h)) <= {0.5, 1.0}


def test_generator_input_masks_noise():
    x = np.array([[0.3, 0.6]])
    z = np.array([[0.001, 0.002]])
    np.testing.assert_array_equal(generator_input(x, np.ones((1, 2)), z)[:, :2], x)
    np.testing.assert_array_equal(generator_input(np.zeros((1, 2)), np.zeros((1, 2)), z)[:, :2], z)


def test_noise_at_observed_coordinate_is_ignored():
    model = init_gain(2, TrainConfig(), np.random.default_rng(0))
    x, m = np.array([[0.3, 0.0]]), np.array([[1.0, 0.0]])
    a = generator_output(model, x, m, np.array([[0.001, 0.004]]))
    b = generator_output(model, x, m, np.array([[0.009, 0.004]]))
    np.testing.assert_array_equal(a, b)


def test_reconstruct():
    x = np.array([[0.2, 0.0]])
    xg = np.array([[0.7, 0.4]])
    np.testing.assert_array_equal(reconstruct(x, np.array([[1, 0]]), xg), [[0.2, 0.4]])
    np.testing.assert_array_equal(reconstruct(x, np.ones((1, 2)), xg), x)
    np.testing.assert_array_equal(reconstruct(x, np.zeros((1, 2)), xg), xg)


def test_loss_D_values():
    m = np.array([[1.0, 0.0, 1.0]])
    assert loss_D(m, m) < 1e-6
    assert loss_D(m, np.full((1, 3), 0.5)) == pytest.approx(3 * ln2)
    assert loss_D(np.array([[1.0, 0.0]]), np.array([[0.9, 0.1]])) == pytest.approx(-2 * math.log(0.9), abs=1e-4)


def test_loss_G_adv_values():
    assert loss_G_adv(np.ones((1, 2)), np.full((1, 2), 0.3)) == 0.0
    assert loss_G_adv(np.zeros((1, 2)), np.full((1, 2), 0.5)) == pytest.approx(2 * ln2)
    assert loss_G_adv(np.zeros((1, 2)), np.full((1, 2), 1.0 - 1e-12)) < 1e-7


def test_loss_R_values():
    cat = np.array([False])
    assert loss_R(np.array([[0.3]]), np.array([[0.3]]), np.ones((1, 1)), cat) == 0.0
    assert loss_R(np.array([[0.3]]), np.array([[0.5]]), np.ones((1, 1)), cat) == pytest.approx(0.04)
    onehot = np.array([[0.0, 1.0, 0.0]])
    got = loss_R(onehot, np.array([[0.1, 0.8, 0.1]]), np.ones((1, 3)), np.ones(3, dtype=bool))
    assert got == pytest.approx(-math.log(0.8))


def test_loss_R_ignores_missing_coordinates():
    cat = np.array([False, False])
    m = np.array([[1.0, 0.0]])
    a = loss_R(np.array([[0.3, 0.0]]), np.array([[0.5, 0.9]]), m, cat)
    b = loss_R(np.array([[0.3, 0.0]]), np.array([[0.5, 0.1]]), m, cat)
    assert a == b


def test_impute_preserves_observed_and_is_deterministic():
    enc = small_encoded()
    model = init_gain(enc.width, TrainConfig(), np.random.default_rng(0))
    a, b = impute(model, enc, seed=3), impute(model, enc, seed=3)
    np.testing.assert_array_equal(a, b)
    obs = enc.mask == 1
    np.testing.assert_array_equal(a[obs], enc.data[obs])


def test_impute_fully_observed_is_identity():
    vals = np.random.default_rng(0).random((5, 2)).astype(object)
    enc = encode(Dataset.from_values(vals, [ColumnSpec("a"), ColumnSpec("b")]))
    model = init_gain(2, TrainConfig(), np.random.default_rng(0))
    np.testing.assert_array_equal(impute(model, enc, seed=0), enc.data)


def test_impute_fully_missing_row_equals_generator_output():
    vals = np.random.default_rng(1).random((4, 3)).astype(object)
    vals[2, :] = None
    enc = encode(Dataset.from_values(vals, [ColumnSpec(c) for c in "abc"]))
    model = init_gain(3, TrainConfig(), np.random.default_rng(0))
    out = impute(model, enc, seed=5)
    z = sample_noise(4, 3, 0.01, np.random.default_rng(5))
    np.testing.assert_array_equal(out[2], generator_output(model, enc.data, enc.mask, z)[2])


def test_impute_width_mismatch():
    enc = small_encoded()
    model = init_gain(enc.width + 1, TrainConfig(), np.random.default_rng(0))
    with pytest.raises(DataError):
        impute(model, enc, seed=0)


def test_train_same_seed_bitwise_identical():
    enc = small_encoded()
    cfg = TrainConfig(iterations=50, batch_size=16, seed=4)
    a, b = train_gain(enc, cfg), train_gain(enc, cfg)
    assert a.model.to_bytes(cfg) == b.model.to_bytes(cfg)
    assert a.trace.loss_D == b.trace.loss_D


def test_train_batch_larger_than_data_rejected():
    with pytest.raises(ConfigError):
        train_gain(small_encoded(n=10), TrainConfig(batch_size=128, iterations=1))


def test_alpha_zero_trace_stays_finite():
    vals = np.empty((64, 3), dtype=object)
    vals[:, 0] = 0.5
    schema = [ColumnSpec("c", scale_min=0.0, scale_max=1.0), ColumnSpec("u"), ColumnSpec("v")]
    rng = np.random.default_rng(0)
    vals[:, 1:] = rng.random((64, 2))
    vals[:, 1:][rng.random((64, 2)) < 0.7] = None
    vals[0, 1:] = (0.1, 0.9)  # keep every column observed somewhere
    enc = encode(Dataset.from_values(vals, schema))
    res = train_gain(enc, TrainConfig(alpha=0.0, iterations=400, batch_size=32))
    assert np.isfinite(res.trace.loss_D).all()
    assert abs(np.mean(res.trace.loss_D[-50:]) - enc.width * ln2) < enc.width * ln2


def test_checkpoint_round_trip(tmp_path):
    enc = small_encoded()
    cfg = TrainConfig(iterations=5, batch_size=8)
    model = train_gain(enc, cfg).model
    model.save(tmp_path / "m.ckpt", cfg)
    back = GainModel.load(tmp_path / "m.ckpt")
    assert back.fingerprint() == model.fingerprint()
    assert back.to_bytes(cfg) == (tmp_path / "m.ckpt").read_bytes()


def test_toy_identity_beats_mean_imputation():
    # y = x on a grid, y masked at 30%: with x observed GAIN should track the line
    toy = toy_dataset(500)
    x = toy.values[:, 0]
    grid = Dataset.from_values(np.column_stack([x, x]).astype(object), toy.schema)
    masked = mask_toy_target(grid, 0.3, seed=0)
    schema = fit_scaling(masked)
    enc, truth = encode(masked, schema), encode(masked, schema, use_truth=True).data
    res = train_gain(enc, TrainConfig(iterations=3000, hidden_widths=(32, 32), seed=0))
    out = impute(res.model, enc, seed=1)
    assert rmse_missing(out, truth, enc.mask) < rmse_missing(mean_impute(enc), truth, enc.mask)
