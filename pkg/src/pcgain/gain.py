"""GAIN: generator / discriminator, hint mechanism, losses and the adversarial training loop.

All losses are batch means of per-sample sums over encoded coordinates, and
each ``*_grad`` companion returns the gradient of that batch mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import checkpoint
from .config import TrainConfig
from .data import EncodedMatrix
from .errors import ConfigError, DataError, DivergenceError
from .nn import LOG_EPS, RELU, SIGMOID, AdamState, NetParams, adam_step, backward, forward, mlp
from .seeding import rng_for


@dataclass
class GainModel:
    generator: NetParams
    discriminator: NetParams

    @property
    def width(self) -> int:
        return self.generator.out_width

    def copy(self) -> "GainModel":
        return GainModel(self.generator.copy(), self.discriminator.copy())

    def networks(self) -> dict[str, NetParams]:
        return {"generator": self.generator, "discriminator": self.discriminator}

    def fingerprint(self) -> str:
        return self.generator.fingerprint() + self.discriminator.fingerprint()

    def to_bytes(self, config: TrainConfig | None = None) -> bytes:
        return checkpoint.dumps(self.networks(), config.to_dict() if config else None)

    def save(self, path, config: TrainConfig | None = None) -> None:
        checkpoint.save(path, self.networks(), config.to_dict() if config else None)

    @classmethod
    def load(cls, path) -> "GainModel":
        nets, _, _ = checkpoint.load(path)
        return cls(nets["generator"], nets["discriminator"])


def hidden_widths(config: TrainConfig, width: int) -> tuple[int, ...]:
    return config.hidden_widths if config.hidden_widths is not None else (width, width)


def init_gain(width: int, config: TrainConfig, rng: np.random.Generator) -> GainModel:
    hidden = hidden_widths(config, width)
    g = mlp(2 * width, hidden, width, RELU, SIGMOID, rng)
    d = mlp(2 * width, hidden, width, RELU, SIGMOID, rng)
    return GainModel(g, d)


def sample_noise(batch: int, width: int, noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    if noise_scale <= 0:
        raise ValueError("noise_scale must be positive")
    return rng.uniform(0.0, noise_scale, size=(batch, width))


def sample_hint(mask: np.ndarray, hint_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Reveal each mask entry with probability ``hint_rate``; hidden entries read 0.5."""
    if not 0.0 <= hint_rate <= 1.0:
        raise ValueError("hint_rate must lie in [0, 1]")
    reveal = rng.random(mask.shape) < hint_rate
    return np.where(reveal, mask, 0.5)


def generator_input(x: np.ndarray, m: np.ndarray, z: np.ndarray) -> np.ndarray:
    if not (x.shape == m.shape == z.shape):
        raise ValueError(f"shape mismatch: x {x.shape}, m {m.shape}, z {z.shape}")
    return np.hstack([np.where(m == 1, x, z), m])


def generator_output(model: GainModel, x: np.ndarray, m: np.ndarray, z: np.ndarray) -> np.ndarray:
    return forward(model.generator, generator_input(x, m, z))[0]


def reconstruct(x: np.ndarray, m: np.ndarray, x_g: np.ndarray) -> np.ndarray:
    """Observed coordinates from ``x`` (copied exactly), missing ones from ``x_g``."""
    return np.where(m == 1, x, x_g)


def _clip(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
    return pc, (p > LOG_EPS) & (p < 1.0 - LOG_EPS)


def loss_D(m: np.ndarray, m_d: np.ndarray) -> float:
    pc, _ = _clip(m_d)
    per = -(m * np.log(pc) + (1.0 - m) * np.log(1.0 - pc))
    return float(per.sum() / m.shape[0])


def loss_D_grad(m: np.ndarray, m_d: np.ndarray) -> np.ndarray:
    pc, inside = _clip(m_d)
    return inside * (-m / pc + (1.0 - m) / (1.0 - pc)) / m.shape[0]


def loss_G_adv(m: np.ndarray, m_d: np.ndarray) -> float:
    pc, _ = _clip(m_d)
    return float(-((1.0 - m) * np.log(pc)).sum() / m.shape[0])


def loss_G_adv_grad(m: np.ndarray, m_d: np.ndarray) -> np.ndarray:
    pc, inside = _clip(m_d)
    return inside * (-(1.0 - m) / pc) / m.shape[0]


def loss_R(x: np.ndarray, x_hat: np.ndarray, m: np.ndarray, categorical: np.ndarray) -> float:
    """Masked reconstruction loss; squared error on numerical columns, -x log x_hat on one-hot ones."""
    categorical = np.asarray(categorical, dtype=bool)
    pc, _ = _clip(x_hat)
    per = np.where(categorical, -x * np.log(pc), (x - x_hat) ** 2)
    return float((m * per).sum() / m.shape[0])


def loss_R_grad(x: np.ndarray, x_hat: np.ndarray, m: np.ndarray, categorical: np.ndarray) -> np.ndarray:
    categorical = np.asarray(categorical, dtype=bool)
    pc, inside = _clip(x_hat)
    per = np.where(categorical, inside * (-x / pc), -2.0 * (x - x_hat))
    return m * per / m.shape[0]


class GeneratorPenalty(Protocol):
    """Extra generator objective term evaluated on the reconstruction x_R."""

    weight: float

    def value_and_grad(self, x_r: np.ndarray) -> tuple[float, np.ndarray]: ...

    def mean_value(self, x_r: np.ndarray) -> float: ...


@dataclass
class LossTrace:
    loss_D: list[float] = field(default_factory=list)
    loss_G_adv: list[float] = field(default_factory=list)
    loss_R: list[float] = field(default_factory=list)
    loss_C: list[float] = field(default_factory=list)
    entropy_initial: float | None = None
    entropy_final: float | None = None

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.loss_D)):
            row = {"iteration": i, "loss_D": self.loss_D[i], "loss_G_adv": self.loss_G_adv[i], "loss_R": self.loss_R[i]}
            if self.loss_C:
                row["loss_C"] = self.loss_C[i]
            out.append(row)
        return out

    def to_csv(self, path) -> None:
        import csv

        rows = self.rows()
        cols = ["iteration", "loss_D", "loss_G_adv", "loss_R"] + (["loss_C"] if self.loss_C else [])
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (v if k == "iteration" else repr(float(v))) for k, v in r.items()})


@dataclass
class TrainResult:
    model: GainModel
    trace: LossTrace
    batch_size: int


def _check_trainable(encoded: EncodedMatrix, config: TrainConfig) -> int:
    n = encoded.n_rows
    if n < 1:
        raise DataError("cannot train on an empty matrix")
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {n} available rows")
    return config.batch_size


def adversarial_training(
    encoded: EncodedMatrix,
    config: TrainConfig,
    penalty: GeneratorPenalty | None = None,
    init: GainModel | None = None,
    stage: str = "gain",
) -> TrainResult:
    """Alternate one discriminator and one generator Adam step per iteration.

    The generator minimises ``loss_G_adv + alpha * loss_R`` (+ ``penalty``).
    A penalty with weight 0 only feeds the before/after monitor in the trace.
    All randomness (initialisation, minibatches, noise, hints) comes from one
    stream seeded by ``config.seed``; the penalty consumes none of it, which
    keeps runs with and without a zero-weight penalty bitwise identical.
    """
    batch = _check_trainable(encoded, config)
    rng = rng_for(config.seed, "adversarial")
    width = encoded.width
    model = init_gain(width, config, rng)
    if init is not None:
        if init.width != width:
            raise ConfigError("warm-start model width does not match data")
        model = init.copy()
    adam_g = AdamState.for_params(model.generator)
    adam_d = AdamState.for_params(model.discriminator)
    data, mask, categorical = encoded.data, encoded.mask, encoded.categorical
    trace = LossTrace()

    if penalty is not None:
        trace.entropy_initial = _penalty_monitor(model, encoded, config, penalty)
    active = penalty if penalty is not None and penalty.weight != 0 else None

    for it in range(config.iterations):
        try:
            ld, lg, lr_ = _iteration(model, adam_d, adam_g, data, mask, categorical, config, active, rng, trace)
        except DivergenceError as exc:
            exc.diagnostics.update({"stage": stage, "iteration": it, "trace": trace.rows()[-5:]})
            raise
        trace.loss_D.append(ld)
        trace.loss_G_adv.append(lg)
        trace.loss_R.append(lr_)
        if not np.isfinite([ld, lg, lr_] + trace.loss_C[-1:]).all():
            raise DivergenceError(
                f"{stage}: non-finite loss at iteration {it}",
                {"stage": stage, "iteration": it, "trace": trace.rows()[-5:]},
            )

    if penalty is not None:
        trace.entropy_final = _penalty_monitor(model, encoded, config, penalty)
    return TrainResult(model, trace, batch)


def _iteration(model, adam_d, adam_g, data, mask, categorical, config, penalty, rng, trace):
    n, width = data.shape
    batch = config.batch_size
    idx = rng.choice(n, size=batch, replace=False)
    x, m = data[idx], mask[idx]
    z = sample_noise(batch, width, config.noise_scale, rng)
    h = sample_hint(m, config.hint_rate, rng)

    x_g, g_cache = forward(model.generator, generator_input(x, m, z))
    x_r = reconstruct(x, m, x_g)

    m_d, d_cache = forward(model.discriminator, np.hstack([x_r, h]))
    ld = loss_D(m, m_d)
    d_grads, _ = backward(model.discriminator, d_cache, loss_D_grad(m, m_d))
    adam_step(adam_d, model.discriminator, d_grads, config.learning_rate)

    # generator step against the freshly updated discriminator
    m_d, d_cache = forward(model.discriminator, np.hstack([x_r, h]))
    lg = loss_G_adv(m, m_d)
    _, d_in = backward(model.discriminator, d_cache, loss_G_adv_grad(m, m_d))
    grad_xr = d_in[:, :width]
    # reconstruction is scored on the raw generator output: x_r equals x on observed entries
    lr_ = loss_R(x, x_g, m, categorical)
    grad_xg = config.alpha * loss_R_grad(x, x_g, m, categorical)
    if penalty is not None:
        lc, grad_c = penalty.value_and_grad(x_r)
        grad_xr = grad_xr + penalty.weight * grad_c
        trace.loss_C.append(lc)
    grad_xg = grad_xg + (1.0 - m) * grad_xr
    g_grads, _ = backward(model.generator, g_cache, grad_xg)
    adam_step(adam_g, model.generator, g_grads, config.learning_rate)
    return ld, lg, lr_


def _penalty_monitor(model: GainModel, encoded: EncodedMatrix, config: TrainConfig, penalty) -> float:
    """Mean penalty over all rows' reconstructions, with noise from a dedicated stream."""
    x_r = impute(model, encoded, seed=int(rng_for(config.seed, "monitor").integers(2**62)), noise_scale=config.noise_scale)
    return penalty.mean_value(x_r)


def train_gain(encoded: EncodedMatrix, config: TrainConfig) -> TrainResult:
    return adversarial_training(encoded, config, stage="gain")


def impute(model: GainModel, encoded: EncodedMatrix, seed: int, noise_scale: float = 0.01) -> np.ndarray:
    """One generator pass with fresh seeded noise followed by reconstruction."""
    if encoded.width != model.width:
        raise DataError(f"model width {model.width} does not match data width {encoded.width}")
    rng = np.random.default_rng(seed)
    z = sample_noise(encoded.n_rows, encoded.width, noise_scale, rng)
    x_g = generator_output(model, encoded.data, encoded.mask, z)
    return reconstruct(encoded.data, encoded.mask, x_g)
