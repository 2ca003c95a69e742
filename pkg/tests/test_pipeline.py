from __future__ import annotations

import math

import numpy as np
import pytest

from pcgain.config import TrainConfig
from pcgain.data import ColumnSpec, Dataset, apply_mcar, encode
from pcgain.errors import DataError, NothingToImputeError, StageError
from pcgain.gain import train_gain
from pcgain.nn import Layer, NetParams, SOFTMAX, forward
from pcgain.pipeline import (
    ClassifierModel,
    PseudoLabeledSet,
    entropy,
    fit_pcgain,
    loss_C,
    loss_C_grad,
    pretrain,
    run_pipeline,
    save_stage_artifacts,
    train_classifier,
    train_pcgain,
)

FAST = dict(iterations=60, batch_size=16, classifier_iterations=50, clusters_k=3)


def blobs(n=60, seed=0, rate=0.3):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.1, 0.1, 0.9], [0.9, 0.2, 0.1], [0.5, 0.9, 0.5]])
    pts = centres[rng.integers(3, size=n)] + rng.normal(0, 0.03, size=(n, 3))
    ds = Dataset.from_values(pts.astype(object), [ColumnSpec(c) for c in "abc"])
    return apply_mcar(ds, rate, seed) if rate > 0 else ds


def constant_classifier(probs):
    """Softmax network whose output is ``probs`` for every input."""
    k = len(probs)
    return ClassifierModel(NetParams([Layer(np.zeros((k, 2)), np.log(np.asarray(probs, float)), SOFTMAX)]))


@pytest.mark.parametrize(
    "probs, expected",
    [((1.0, 0, 0, 0, 0), 0.0), ((0.2,) * 5, math.log(5)), ((0.5, 0.5, 0, 0, 0), math.log(2))],
)
def test_entropy_values(probs, expected):
    assert entropy(np.array([probs]))[0] == pytest.approx(expected, abs=1e-7)


def test_loss_C_bounds():
    rng = np.random.default_rng(0)
    from pcgain.nn import RELU, mlp

    clf = ClassifierModel(mlp(4, (4, 4), 5, RELU, SOFTMAX, rng))
    x = rng.random((30, 4))
    v = loss_C(clf, x)
    assert 0.0 <= v <= math.log(5) + 1e-12


def test_loss_C_uniform_classifier_has_zero_gradient():
    clf = constant_classifier([0.25] * 4)
    value, grad = loss_C_grad(clf, np.random.default_rng(0).random((5, 2)))
    assert value == pytest.approx(math.log(4))
    assert np.abs(grad).max() < 1e-12


def test_pretrain_subset_size_and_preservation():
    enc = encode(blobs(n=10, rate=0.3))
    pre = pretrain(enc, TrainConfig(lam=0.4, iterations=20, batch_size=128, clusters_k=2))
    assert pre.imputed.shape == (4, enc.width)
    sub = enc.take(pre.subset)
    obs = sub.mask == 1
    np.testing.assert_array_equal(pre.imputed[obs], sub.data[obs])
    assert pre.batch_size == 4  # shrunk to the subset


def test_pretrain_fully_observed_lambda_one_returns_data():
    enc = encode(blobs(n=12, rate=0.0))
    pre = pretrain(enc, TrainConfig(lam=1.0, iterations=5, batch_size=8, clusters_k=2))
    np.testing.assert_array_equal(pre.imputed, enc.data[pre.subset])


def test_pretrain_rejects_subset_smaller_than_k():
    enc = encode(blobs(n=10))
    with pytest.raises(DataError):
        pretrain(enc, TrainConfig(lam=0.1, clusters_k=5, iterations=1))


def test_classifier_separable_blobs():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(0.2, 0.03, (40, 3)), rng.normal(0.8, 0.03, (40, 3))])
    labels = np.repeat([0, 1], 40)
    clf = train_classifier(PseudoLabeledSet(x, labels, np.arange(80)), TrainConfig(clusters_k=2))
    assert clf.train_accuracy >= 0.95
    np.testing.assert_allclose(clf.predict_proba(x).sum(axis=1), 1.0, atol=1e-12)


def test_classifier_permuted_labels_near_chance_early():
    rng = np.random.default_rng(1)
    x = rng.random((400, 3))
    labels = rng.permutation(np.arange(400) % 4)
    clf = train_classifier(PseudoLabeledSet(x, labels, np.arange(400)), TrainConfig(clusters_k=4, classifier_iterations=20))
    # binomial sd for n=400 at p=1/4 is about 0.022
    assert abs(clf.train_accuracy - 0.25) < 0.1


def test_classifier_conflicting_duplicates():
    x = np.array([[0.5, 0.5]] * 10 + [[0.1, 0.9]] * 10)
    labels = np.array([0, 1] * 5 + [1] * 10)
    clf = train_classifier(PseudoLabeledSet(x, labels, np.arange(20)), TrainConfig(clusters_k=2, classifier_iterations=200))
    pred = np.argmax(clf.predict_proba(x[:10]), axis=1)
    assert np.mean(pred == labels[:10]) <= 0.5 + 1e-12


def test_classifier_degenerate_labels_flagged():
    x = np.random.default_rng(2).random((20, 2))
    clf = train_classifier(PseudoLabeledSet(x, np.zeros(20, dtype=int), np.arange(20)), TrainConfig(clusters_k=3, classifier_iterations=10))
    assert clf.degenerate


def test_beta_zero_matches_gain_bitwise():
    enc = encode(blobs())
    cfg = TrainConfig(beta=0.0, **FAST)
    clf = train_classifier(PseudoLabeledSet(enc.data[:20], np.arange(20) % 3, np.arange(20)), cfg)
    a = train_pcgain(enc, clf, cfg).model.to_bytes(cfg)
    b = train_gain(enc, cfg).model.to_bytes(cfg)
    assert a == b


def test_classifier_frozen_during_stage_three():
    enc = encode(blobs())
    cfg = TrainConfig(**FAST)
    clf = train_classifier(PseudoLabeledSet(enc.data[:20], np.arange(20) % 3, np.arange(20)), cfg)
    res = train_pcgain(enc, clf, cfg)
    assert res.classifier_hash_before == res.classifier_hash_after == clf.net.fingerprint()
    assert len(res.trace.loss_C) == cfg.iterations


def test_width_mismatch_rejected():
    enc = encode(blobs())
    clf = constant_classifier([0.5, 0.5])
    with pytest.raises(DataError):
        train_pcgain(enc, clf, TrainConfig(**FAST))


def test_fit_records_stage_hashes_and_is_deterministic():
    enc = encode(blobs())
    cfg = TrainConfig(**FAST)
    a, b = fit_pcgain(enc, cfg), fit_pcgain(enc, cfg)
    assert set(a.stage_hashes) == {"pretrain_input", "pseudo_labels", "classifier", "pcgain_input", "final_model"}
    assert a.stage_hashes == b.stage_hashes


def test_stage_failure_names_stage():
    enc = encode(blobs(n=10))
    with pytest.raises(StageError) as info:
        fit_pcgain(enc, TrainConfig(lam=0.1, clusters_k=5, iterations=1))
    assert info.value.stage == "pretrain"


def test_run_pipeline_rejects_fully_observed():
    with pytest.raises(NothingToImputeError):
        run_pipeline(blobs(rate=0.0), TrainConfig(**FAST))


def test_run_pipeline_decodes_and_preserves_observed():
    ds = blobs()
    res = run_pipeline(ds, TrainConfig(**FAST))
    assert res.imputed.mask.all()
    obs = ds.mask == 1
    assert all(a == b for a, b in zip(res.imputed.values[obs], ds.values[obs]))
    assert res.report["entropy_final"] is not None


def test_entropy_does_not_increase_with_penalty():
    ds = blobs(n=200, seed=3)
    enc = encode(ds)
    fit = fit_pcgain(enc, TrainConfig(iterations=400, batch_size=64, classifier_iterations=300, clusters_k=3))
    t = fit.stage3.trace
    assert t.entropy_final <= t.entropy_initial


def test_save_stage_artifacts(tmp_path):
    enc = encode(blobs())
    cfg = TrainConfig(**FAST)
    fit = fit_pcgain(enc, cfg)
    paths = save_stage_artifacts(fit, cfg, tmp_path)
    assert sorted(paths) == ["classifier.ckpt", "final.ckpt", "pretrain.ckpt", "pseudo_labels.csv"]
    lines = (tmp_path / "pseudo_labels.csv").read_text().splitlines()
    assert lines[0] == "row_index,cluster_id"
    assert len(lines) - 1 == len(fit.labeled.labels)
