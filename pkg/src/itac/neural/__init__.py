"""From-scratch feed-forward and recurrent network index models.

All gradients are hand-derived; ``gradient_check`` compares them against
central finite differences over the flat parameter vector and is part of
the shipped test surface, not just an internal aid.
"""

from __future__ import annotations

import numpy as np

from ..rng import derive
from .core import Adam, activate, sigmoid, uniform_init
from .mlp import AnnConfig, AnnModel, ann_predict, ann_train, build_ann
from .recurrent import (
    RnnConfig,
    RnnModel,
    build_rnn,
    make_sequences,
    rnn_predict,
    rnn_train,
)

__all__ = [
    "Adam", "AnnConfig", "AnnModel", "RnnConfig", "RnnModel",
    "activate", "ann_predict", "ann_train", "build_ann", "build_rnn",
    "gradient_check", "make_sequences", "rnn_predict", "rnn_train",
    "sigmoid", "uniform_init",
]

_CHECK_CAP = 10_000


def gradient_check(model, batch: tuple[np.ndarray, np.ndarray],
                   epsilon: float = 1e-5, floor: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    Works on any model exposing ``flat_params`` / ``set_flat_params`` /
    ``loss`` / ``loss_and_grad`` (both network kinds do). Above 10^4
    parameters a seeded random subset of coordinates is probed. The
    relative error divides by ``max(|analytic|, |numeric|, floor)`` so
    near-zero gradients do not manufacture large ratios.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon:g} outside [1e-7, 1e-3]")
    inputs, targets = batch
    theta = model.flat_params().copy()
    _, analytic = model.loss_and_grad(inputs, targets)

    if theta.size > _CHECK_CAP:
        rng = derive(0x6C, "gradient-check", theta.size)
        indices = rng.choice(theta.size, size=_CHECK_CAP, replace=False)
    else:
        indices = np.arange(theta.size)

    worst = 0.0
    probe = theta.copy()
    for i in indices:
        probe[i] = theta[i] + epsilon
        model.set_flat_params(probe)
        up = model.loss(inputs, targets)
        probe[i] = theta[i] - epsilon
        model.set_flat_params(probe)
        down = model.loss(inputs, targets)
        probe[i] = theta[i]
        numeric = (up - down) / (2.0 * epsilon)
        denom = max(abs(analytic[i]), abs(numeric), floor)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    model.set_flat_params(theta)
    return worst
