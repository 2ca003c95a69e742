"""Finite-difference self-check of every production network against its training objective.

Pairs checked (network, objective):

* generator     -- GAIN objective: adversarial term through D plus alpha * reconstruction
* generator     -- PC-GAIN objective: the above plus beta * classifier entropy
* discriminator -- mask cross-entropy
* classifier    -- pseudo-label cross-entropy (ReLU, softmax over K)
* downstream    -- label cross-entropy (Sigmoid hidden layer, softmax)

The fixture mixes numerical and one-hot columns so both reconstruction
branches are exercised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .data import CATEGORICAL, ColumnSpec, Dataset, apply_mcar, encode
from .gain import (
    generator_input,
    init_gain,
    loss_D,
    loss_D_grad,
    loss_G_adv,
    loss_G_adv_grad,
    loss_R,
    loss_R_grad,
    reconstruct,
    sample_hint,
    sample_noise,
)
from .nn import RELU, SIGMOID, SOFTMAX, backward, forward, grad_check, mlp, relu_pattern
from .pipeline import ClassifierModel, cross_entropy, loss_C_grad
from .seeding import rng_for

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    network: str
    objective: str
    error: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def _fixture(rng: np.random.Generator, n: int = 16):
    values = np.empty((n, 4), dtype=object)
    values[:, :3] = rng.random((n, 3))
    values[:, 3] = rng.choice(["a", "b", "c"], size=n)
    schema = [ColumnSpec("u"), ColumnSpec("v"), ColumnSpec("w"), ColumnSpec("c", CATEGORICAL, ("a", "b", "c"))]
    ds = apply_mcar(Dataset.from_values(values, schema), 0.3, int(rng.integers(2**31)))
    return encode(ds)


def generator_objective(model, x, m, h, alpha, categorical, classifier=None, beta=0.0):
    """Loss of the generator output and its gradient, as used by the training loop."""
    width = x.shape[1]

    def loss(x_g):
        x_r = reconstruct(x, m, x_g)
        m_d, cache = forward(model.discriminator, np.hstack([x_r, h]))
        value = loss_G_adv(m, m_d) + alpha * loss_R(x, x_g, m, categorical)
        _, d_in = backward(model.discriminator, cache, loss_G_adv_grad(m, m_d))
        grad_xr = d_in[:, :width]
        if classifier is not None:
            lc, gc = loss_C_grad(classifier, x_r)
            value += beta * lc
            grad_xr = grad_xr + beta * gc
        return value, alpha * loss_R_grad(x, x_g, m, categorical) + (1.0 - m) * grad_xr

    return loss


def generator_kinks(model, x, m, h, classifier=None):
    """ReLU patterns of the networks the generator objective passes through."""

    def kinks(x_g):
        x_r = reconstruct(x, m, x_g)
        pats = relu_pattern(model.discriminator, np.hstack([x_r, h]))
        if classifier is not None:
            pats += relu_pattern(classifier.net, x_r)
        return pats

    return kinks


def run_gradchecks(seed: int = 0, *, corrupt: bool = False, alpha: float = 10.0, beta: float = 2.0) -> list[CheckResult]:
    """Run every (network, objective) check; ``corrupt`` plants a fault in each analytic gradient."""
    rng = rng_for(seed, "gradcheck")
    enc = _fixture(rng)
    x, m, cat = enc.data, enc.mask, enc.categorical
    n, width = x.shape
    model = init_gain(width, TrainConfig(), rng)
    z = sample_noise(n, width, 0.01, rng)
    h = sample_hint(m, 0.9, rng)
    classes = 3
    clf = ClassifierModel(mlp(width, (width, width), classes, RELU, SOFTMAX, rng))
    labels = rng.integers(classes, size=n)
    downstream = mlp(width, (width,), classes, SIGMOID, SOFTMAX, rng)

    g_in = generator_input(x, m, z)
    x_r = reconstruct(x, m, forward(model.generator, g_in)[0])
    d_in = np.hstack([x_r, h])
    checks = [
        ("generator", "gain", model.generator, generator_objective(model, x, m, h, alpha, cat), g_in,
         generator_kinks(model, x, m, h)),
        ("generator", "pcgain", model.generator, generator_objective(model, x, m, h, alpha, cat, clf, beta), g_in,
         generator_kinks(model, x, m, h, clf)),
        ("discriminator", "mask-cross-entropy", model.discriminator, lambda md: (loss_D(m, md), loss_D_grad(m, md)),
         d_in, None),
        ("classifier", "pseudo-label-cross-entropy", clf.net, lambda p: cross_entropy(p, labels), x_r, None),
        ("downstream", "label-cross-entropy", downstream, lambda p: cross_entropy(p, labels), x_r, None),
    ]
    results = []
    for i, (net_name, objective, net, loss, probe, kinks) in enumerate(checks):
        probe_seed = int(rng_for(seed, "gradcheck-probe", i).integers(2**31))
        err = grad_check(net, loss, probe, seed=probe_seed, corrupt=corrupt, kinks=kinks)
        results.append(CheckResult(net_name, objective, float(err)))
    return results
