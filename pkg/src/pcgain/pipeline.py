"""PC-GAIN: pre-train on the least-missing rows, pseudo-label them, then retrain under an entropy penalty.

Stages:

1. ``pretrain``      -- GAIN on the ceil(lambda N) rows with the lowest missing fraction.
2. ``kmeans`` and ``train_classifier`` -- cluster the imputed subset, fit a softmax classifier.
3. ``train_pcgain``  -- GAIN on every row with ``beta * entropy(C(x_R))`` added to the generator loss.

Seeds: stage 3 uses ``config.seed`` unchanged, exactly like :func:`gain.train_gain`,
so PC-GAIN with beta = 0 reproduces GAIN bit for bit. Stages 1-2 draw from
streams derived from the same root seed.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .config import TrainConfig
from .data import Dataset, EncodedMatrix, decode, encode, fit_scaling, select_pretrain_subset
from .errors import DataError, NothingToImputeError, PCGainError, StageError
from .gain import GainModel, LossTrace, adversarial_training, impute
from .kmeans import KMeansModel, kmeans
from .nn import LOG_EPS, RELU, SOFTMAX, AdamState, NetParams, adam_step, backward, forward, mlp
from .seeding import derive_seed

log = logging.getLogger(__name__)


def array_hash(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str((a.dtype.str, a.shape)).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class PseudoLabeledSet:
    rows: np.ndarray
    labels: np.ndarray
    source_index: np.ndarray

    def __post_init__(self):
        if len(self.rows) != len(self.labels):
            raise DataError("pseudo-labels must align with rows")


@dataclass
class ClassifierModel:
    net: NetParams
    train_accuracy: float = float("nan")
    degenerate: bool = False

    @property
    def n_classes(self) -> int:
        return self.net.out_width

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return forward(self.net, x)[0]


@dataclass
class PretrainResult:
    imputed: np.ndarray
    subset: np.ndarray
    model: GainModel
    trace: LossTrace
    batch_size: int


def pretrain(encoded: EncodedMatrix, config: TrainConfig) -> PretrainResult:
    """Train GAIN on the low-missing-rate subset and impute that subset.

    Rows come back in missing-rate order. If the subset is smaller than the
    batch size the batch shrinks to the subset size.
    """
    subset = select_pretrain_subset(encoded.raw_mask, config.lam)
    if len(subset) < config.clusters_k:
        raise DataError(f"pre-training subset has {len(subset)} rows, fewer than K={config.clusters_k}")
    sub = encoded.take(subset)
    cfg = config.replace(
        seed=derive_seed(config.seed, "pretrain"),
        batch_size=min(config.batch_size, len(subset)),
    )
    result = adversarial_training(sub, cfg, stage="pretrain")
    imputed = impute(result.model, sub, seed=derive_seed(config.seed, "pretrain-impute"), noise_scale=config.noise_scale)
    return PretrainResult(imputed, subset, result.model, result.trace, cfg.batch_size)


def pseudo_label(pre: PretrainResult, config: TrainConfig) -> tuple[PseudoLabeledSet, KMeansModel]:
    km = kmeans(
        pre.imputed,
        config.clusters_k,
        seed=derive_seed(config.seed, "kmeans"),
        max_iters=config.kmeans_max_iters,
        restarts=config.kmeans_restarts,
    )
    return PseudoLabeledSet(pre.imputed, km.assignments.astype(np.intp), pre.subset), km


def classifier_hidden(config: TrainConfig, width: int) -> tuple[int, ...]:
    return config.classifier_hidden if config.classifier_hidden is not None else (width, width)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and its gradient with respect to ``probs``."""
    b = len(labels)
    rows = np.arange(b)
    p = np.clip(probs[rows, labels], LOG_EPS, None)
    grad = np.zeros_like(probs)
    grad[rows, labels] = np.where(probs[rows, labels] > LOG_EPS, -1.0 / p, 0.0) / b
    return float(-np.log(p).mean()), grad


def train_softmax_classifier(
    x: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    hidden: tuple[int, ...],
    hidden_act: str,
    iterations: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
) -> NetParams:
    rng = np.random.default_rng(seed)
    net = mlp(x.shape[1], hidden, n_classes, hidden_act, SOFTMAX, rng)
    state = AdamState.for_params(net)
    n = len(x)
    batch = min(batch_size, n)
    for _ in range(iterations):
        idx = rng.choice(n, size=batch, replace=False)
        probs, cache = forward(net, x[idx])
        _, g = cross_entropy(probs, labels[idx])
        grads, _ = backward(net, cache, g)
        adam_step(state, net, grads, learning_rate)
    return net


def train_classifier(labeled: PseudoLabeledSet, config: TrainConfig) -> ClassifierModel:
    """Fit the auxiliary classifier (three weight layers, ReLU, softmax over K) by cross-entropy."""
    width = labeled.rows.shape[1]
    labels = np.asarray(labeled.labels, dtype=np.intp)
    degenerate = len(np.unique(labels)) < 2
    if degenerate:
        log.warning("all pseudo-labels are identical; the entropy term will be nearly constant")
    net = train_softmax_classifier(
        labeled.rows,
        labels,
        config.clusters_k,
        classifier_hidden(config, width),
        RELU,
        config.classifier_iterations,
        config.batch_size,
        config.learning_rate,
        derive_seed(config.seed, "classifier"),
    )
    acc = float(np.mean(np.argmax(forward(net, labeled.rows)[0], axis=1) == labels))
    return ClassifierModel(net, acc, degenerate)


def entropy(probs: np.ndarray) -> np.ndarray:
    return -(probs * np.log(np.clip(probs, LOG_EPS, 1.0))).sum(axis=1)


def loss_C(classifier: ClassifierModel, x_r: np.ndarray) -> float:
    """Batch-mean Shannon entropy of the classifier's prediction."""
    return float(entropy(classifier.predict_proba(x_r)).mean())


def loss_C_grad(classifier: ClassifierModel, x_r: np.ndarray) -> tuple[float, np.ndarray]:
    """Entropy loss and its gradient with respect to ``x_r``; classifier weights get none."""
    probs, cache = forward(classifier.net, x_r)
    pc = np.clip(probs, LOG_EPS, 1.0)
    value = float(-(probs * np.log(pc)).sum(axis=1).mean())
    g = (-np.log(pc) - np.where(probs > LOG_EPS, 1.0, 0.0)) / len(x_r)
    _, g_in = backward(classifier.net, cache, g)
    return value, g_in


@dataclass
class EntropyPenalty:
    classifier: ClassifierModel
    weight: float

    def value_and_grad(self, x_r):
        return loss_C_grad(self.classifier, x_r)

    def mean_value(self, x_r):
        return loss_C(self.classifier, x_r)


@dataclass
class StageThreeResult:
    model: GainModel
    trace: LossTrace
    classifier_hash_before: str
    classifier_hash_after: str


def train_pcgain(
    encoded: EncodedMatrix,
    classifier: ClassifierModel,
    config: TrainConfig,
    warm_start: GainModel | None = None,
) -> StageThreeResult:
    """Adversarial training on all rows with the frozen classifier's entropy added to the generator loss."""
    if classifier.net.in_width != encoded.width:
        raise DataError(f"classifier input width {classifier.net.in_width} != data width {encoded.width}")
    before = classifier.net.fingerprint()
    penalty = EntropyPenalty(classifier, config.beta)
    result = adversarial_training(encoded, config, penalty=penalty, init=warm_start, stage="pcgain")
    after = classifier.net.fingerprint()
    return StageThreeResult(result.model, result.trace, before, after)


@dataclass
class PCGainFit:
    model: GainModel
    classifier: ClassifierModel
    kmeans: KMeansModel
    pretrain: PretrainResult
    labeled: PseudoLabeledSet
    stage3: StageThreeResult
    stage_hashes: dict[str, str] = field(default_factory=dict)


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except PCGainError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, FloatingPointError) as exc:
        raise StageError(name, exc) from exc


def fit_pcgain(encoded: EncodedMatrix, config: TrainConfig) -> PCGainFit:
    """Run all three stages on an encoded training matrix."""
    pre = _stage("pretrain", pretrain, encoded, config)
    labeled, km = _stage("kmeans", pseudo_label, pre, config)
    clf = _stage("classifier", train_classifier, labeled, config)
    warm = pre.model if config.warm_start else None
    stage3 = _stage("pcgain", train_pcgain, encoded, clf, config, warm)
    sub = encoded.take(pre.subset)
    hashes = {
        "pretrain_input": array_hash(sub.data, sub.mask),
        "pseudo_labels": array_hash(labeled.rows, labeled.labels),
        "classifier": clf.net.fingerprint(),
        "pcgain_input": array_hash(encoded.data, encoded.mask),
        "final_model": stage3.model.fingerprint(),
    }
    for k, v in hashes.items():
        log.debug("stage hash %s = %s", k, v)
    return PCGainFit(stage3.model, clf, km, pre, labeled, stage3, hashes)


@dataclass
class PipelineResult:
    imputed: Dataset
    imputed_matrix: np.ndarray
    encoded: EncodedMatrix
    fit: PCGainFit
    report: dict
    ground_truth: np.ndarray | None = None


def run_pipeline(dataset: Dataset, config: TrainConfig) -> PipelineResult:
    """Encode, fit PC-GAIN on every row, impute, and decode back to the raw schema."""
    if dataset.mask.all():
        raise NothingToImputeError("dataset has no missing cells; nothing to impute")
    schema = fit_scaling(dataset)
    encoded = encode(dataset, schema)
    fit = fit_pcgain(encoded, config)
    matrix = impute(fit.model, encoded, seed=derive_seed(config.seed, "impute"), noise_scale=config.noise_scale)
    decoded = decode(encoded.completed(matrix), schema)
    # observed cells keep their raw values; decoding them back through the scaling could round
    values = np.where(dataset.mask == 1, dataset.values, decoded.values)
    imputed = Dataset(values, decoded.mask, dataset.schema)
    report = {
        "config": config.to_dict(),
        "stage_hashes": fit.stage_hashes,
        "classifier_train_accuracy": fit.classifier.train_accuracy,
        "classifier_degenerate": fit.classifier.degenerate,
        "kmeans_inertia": fit.kmeans.inertia,
        "pretrain_rows": int(len(fit.pretrain.subset)),
        "entropy_initial": fit.stage3.trace.entropy_initial,
        "entropy_final": fit.stage3.trace.entropy_final,
    }
    return PipelineResult(imputed, matrix, encoded, fit, report, dataset.ground_truth)


def save_stage_artifacts(fit: PCGainFit, config: TrainConfig, outdir) -> dict[str, str]:
    """Write every stage checkpoint plus the pseudo-label CSV into ``outdir``."""
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config.to_dict()
    checkpoint.save(out / "pretrain.ckpt", fit.pretrain.model.networks(), cfg, {"stage": "pretrain"})
    checkpoint.save(out / "classifier.ckpt", {"classifier": fit.classifier.net}, cfg, {"stage": "classifier"})
    checkpoint.save(out / "final.ckpt", fit.model.networks(), cfg, {"stage": "pcgain"})
    with (out / "pseudo_labels.csv").open("w") as fh:
        fh.write("row_index,cluster_id\n")
        for idx, lab in zip(fit.labeled.source_index, fit.labeled.labels):
            fh.write(f"{int(idx)},{int(lab)}\n")
    return {p: str(out / p) for p in ("pretrain.ckpt", "classifier.ckpt", "final.ckpt", "pseudo_labels.csv")}


__all__ = [
    "ClassifierModel",
    "EntropyPenalty",
    "PCGainFit",
    "PipelineResult",
    "PretrainResult",
    "PseudoLabeledSet",
    "entropy",
    "fit_pcgain",
    "loss_C",
    "loss_C_grad",
    "pretrain",
    "pseudo_label",
    "run_pipeline",
    "save_stage_artifacts",
    "train_classifier",
    "train_pcgain",
]
