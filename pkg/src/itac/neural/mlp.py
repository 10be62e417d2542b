"""Feed-forward network: y = f(x; theta) with MSE loss and Adam.

The model maps a month's feature vector to the target value for the
same month; its fitted values over the sample form the network index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError, ShapeError
from ..rng import derive
from .core import (
    Adam,
    activate,
    activate_grad,
    flatten_arrays,
    shuffled_batches,
    unflatten_arrays,
    uniform_init,
)

HIDDEN_LAYER_RANGE = (2, 64)
NEURON_RANGE = (6, 256)


@dataclass
class AnnConfig:
    """Feed-forward hyperparameters (search ranges in class constants)."""

    hidden_layers: int = 2
    neurons: int = 32
    activation: str = "tanh"
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        lo, hi = HIDDEN_LAYER_RANGE
        if not lo <= self.hidden_layers <= hi:
            raise ConfigError(f"hidden_layers must lie in [{lo}, {hi}]")
        lo, hi = NEURON_RANGE
        if not lo <= self.neurons <= hi:
            raise ConfigError(f"neurons must lie in [{lo}, {hi}]")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"activation must be tanh or relu, got {self.activation!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")


@dataclass
class AnnModel:
    """Fitted feed-forward network (a model artifact, kind ``ann``).

    ``sizes`` is the full layer width list, input through output; the
    final layer is linear. ``loss_curve`` holds full-sample MSE after
    each epoch; ``final_loss`` is the MSE of the returned weights on the
    training inputs.
    """

    sizes: list[int]
    activation: str
    weights: list[np.ndarray]  # per layer, fan_in x fan_out
    biases: list[np.ndarray]
    config: AnnConfig | None = None
    final_loss: float = float("nan")
    loss_curve: np.ndarray = field(default_factory=lambda: np.empty(0))
    init_scheme: str = "uniform-fan-in"
    kind: str = "ann"

    # -- parameter vector ----------------------------------------------------

    def flat_params(self) -> np.ndarray:
        return flatten_arrays(self.weights + self.biases)

    def set_flat_params(self, flat: np.ndarray) -> None:
        arrays = unflatten_arrays(flat, self.weights + self.biases)
        n = len(self.weights)
        self.weights = arrays[:n]
        self.biases = arrays[n:]

    # -- forward / loss --------------------------------------------------------

    def predict(self, features: np.ndarray) -> np.ndarray:
        return ann_predict(self, features)

    def loss(self, features: np.ndarray, target: np.ndarray) -> float:
        resid = ann_predict(self, np.atleast_2d(features)) - target
        return float(np.mean(resid * resid))

    def loss_and_grad(self, features: np.ndarray,
                      target: np.ndarray) -> tuple[float, np.ndarray]:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        y = np.asarray(target, dtype=float).ravel()
        pre, post = _forward_cached(self, x)
        pred = post[-1].ravel()
        resid = pred - y
        loss = float(np.mean(resid * resid))

        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        delta = (2.0 / len(y)) * resid[:, None]
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = post[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * activate_grad(
                    self.activation, pre[layer - 1], post[layer])
        return loss, flatten_arrays(grads_w + grads_b)


def build_ann(sizes: list[int], activation: str,
              rng: np.random.Generator) -> AnnModel:
    """Freshly initialized network with the documented scheme."""
    if len(sizes) < 2:
        raise ConfigError("need at least input and output widths")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(uniform_init(rng, fan_in, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AnnModel(sizes=list(sizes), activation=activation,
                    weights=weights, biases=biases)


def _forward_cached(model: AnnModel, x: np.ndarray):
    """Forward pass keeping pre-activations and layer outputs.

    ``post[0]`` is the input; ``post[-1]`` the (linear) output column.
    """
    if x.shape[1] != model.sizes[0]:
        raise ShapeError(
            f"feature width {x.shape[1]} does not match input width "
            f"{model.sizes[0]}")
    pre, post = [], [x]
    a = x
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if layer == last else activate(model.activation, z)
        pre.append(z)
        post.append(a)
    return pre, post


def ann_predict(model: AnnModel, features: np.ndarray) -> np.ndarray | float:
    """Deterministic forward pass; a single feature vector gives a float."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    _, post = _forward_cached(model, np.atleast_2d(x))
    out = post[-1].ravel()
    return float(out[0]) if single else out


def ann_train(dataset, config: AnnConfig,
              window: tuple[int | str, int | str] | None = None,
              val_window: tuple[int | str, int | str] | None = None,
              val_data: tuple[np.ndarray, np.ndarray] | None = None,
              patience: int = 50) -> AnnModel:
    """Mini-batch Adam on MSE; bit-reproducible for a fixed seed.

    ``dataset`` is an aligned dataset (fits on its training window by
    default) or a plain ``(features, target)`` pair. With a validation
    window (month range into the aligned dataset) or raw ``val_data``
    arrays, training keeps the weights that scored best and stops after
    ``patience`` epochs without improvement.
    """
    config.validate()
    x, y = _training_arrays(dataset, window)
    x_val = y_val = None
    if val_data is not None:
        x_val, y_val = _training_arrays(val_data, None, purpose="score")
    elif val_window is not None:
        x_val, y_val = _training_arrays(dataset, val_window, purpose="score")

    rng = derive(config.seed, "ann-train")
    sizes = [x.shape[1]] + [config.neurons] * config.hidden_layers + [1]
    model = build_ann(sizes, config.activation, rng)
    model.config = config

    theta = model.flat_params()
    opt = Adam(theta.size, config.learning_rate)
    curve = []
    best = (np.inf, theta.copy(), 0)
    for epoch in range(config.epochs):
        for batch in shuffled_batches(rng, len(y), config.batch_size):
            _, grad = model.loss_and_grad(x[batch], y[batch])
            theta = opt.step(theta, grad)
            model.set_flat_params(theta)
        epoch_loss = model.loss(x, y)
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch)
        curve.append(epoch_loss)
        if x_val is not None:
            val_loss = model.loss(x_val, y_val)
            if val_loss < best[0]:
                best = (val_loss, theta.copy(), epoch)
            elif epoch - best[2] >= patience:
                break

    if x_val is not None and np.isfinite(best[0]):
        theta = best[1]
        model.set_flat_params(theta)
    model.loss_curve = np.array(curve)
    model.final_loss = model.loss(x, y)
    return model


def _training_arrays(dataset, window, purpose: str = "fit"):
    if isinstance(dataset, tuple):
        x, y = dataset
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:  # T samples of a single feature
            x = x[:, None]
        return x, np.asarray(y, dtype=float).ravel()
    if window is None:
        window = dataset.train_window
    return dataset.window(window[0], window[1], purpose=purpose)
