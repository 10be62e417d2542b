"""Recurrent index models: stacked Elman and LSTM cells trained by BPTT.

Training samples are rolling windows: the inputs are ``window``
consecutive months of features and the target is the value of the month
immediately after the window, so fitted values are one-step-ahead. The
readout is a linear map of the final hidden state of the top layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError, LengthError, ShapeError
from ..rng import derive
from .core import (
    Adam,
    flatten_arrays,
    shuffled_batches,
    sigmoid,
    unflatten_arrays,
    uniform_init,
)

HIDDEN_LAYER_RANGE = (2, 48)
NEURON_RANGE = (6, 256)


@dataclass
class RnnConfig:
    """Recurrent hyperparameters (search ranges in class constants)."""

    cell: str = "elman"
    hidden_layers: int = 2
    neurons: int = 16
    sequence_window: int = 12
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.cell not in ("elman", "lstm"):
            raise ConfigError(f"cell must be elman or lstm, got {self.cell!r}")
        lo, hi = HIDDEN_LAYER_RANGE
        if not lo <= self.hidden_layers <= hi:
            raise ConfigError(f"hidden_layers must lie in [{lo}, {hi}]")
        lo, hi = NEURON_RANGE
        if not lo <= self.neurons <= hi:
            raise ConfigError(f"neurons must lie in [{lo}, {hi}]")
        if self.sequence_window < 1:
            raise ConfigError("sequence_window must be at least 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")


@dataclass
class RnnModel:
    """Fitted recurrent network (a model artifact, kind ``rnn``).

    Per layer: ``w_x`` maps the layer input, ``w_h`` the previous hidden
    state. For LSTM cells the output width of both is 4x the hidden
    width, blocks ordered input gate, forget gate, output gate,
    candidate. Hidden and cell states start at zero.
    """

    cell: str
    n_features: int
    hidden: int
    layers: int
    window: int
    w_x: list[np.ndarray]
    w_h: list[np.ndarray]
    b: list[np.ndarray]
    w_out: np.ndarray
    b_out: np.ndarray
    config: RnnConfig | None = None
    final_loss: float = float("nan")
    loss_curve: np.ndarray = field(default_factory=lambda: np.empty(0))
    init_scheme: str = "uniform-fan-in"
    kind: str = "rnn"

    # -- parameter vector -----------------------------------------------------

    def _arrays(self) -> list[np.ndarray]:
        return self.w_x + self.w_h + self.b + [self.w_out, self.b_out]

    def flat_params(self) -> np.ndarray:
        return flatten_arrays(self._arrays())

    def set_flat_params(self, flat: np.ndarray) -> None:
        arrays = unflatten_arrays(flat, self._arrays())
        n = self.layers
        self.w_x, self.w_h, self.b = arrays[:n], arrays[n:2 * n], arrays[2 * n:3 * n]
        self.w_out, self.b_out = arrays[3 * n], arrays[3 * n + 1]

    def predict(self, sequence: np.ndarray) -> np.ndarray | float:
        return rnn_predict(self, sequence)

    def loss(self, sequences: np.ndarray, targets: np.ndarray) -> float:
        pred = _forward(self, sequences)[0]
        resid = pred - np.asarray(targets, dtype=float).ravel()
        return float(np.mean(resid * resid))

    def loss_and_grad(self, sequences: np.ndarray,
                      targets: np.ndarray) -> tuple[float, np.ndarray]:
        return _loss_and_grad(self, sequences, targets)


def build_rnn(cell: str, n_features: int, hidden: int, layers: int,
              window: int, rng: np.random.Generator) -> RnnModel:
    gates = 4 if cell == "lstm" else 1
    w_x, w_h, b = [], [], []
    for layer in range(layers):
        fan_in = n_features if layer == 0 else hidden
        w_x.append(uniform_init(rng, fan_in, (fan_in, gates * hidden)))
        w_h.append(uniform_init(rng, hidden, (hidden, gates * hidden)))
        b.append(np.zeros(gates * hidden))
    w_out = uniform_init(rng, hidden, (hidden, 1))
    return RnnModel(cell=cell, n_features=n_features, hidden=hidden,
                    layers=layers, window=window, w_x=w_x, w_h=w_h, b=b,
                    w_out=w_out, b_out=np.zeros(1))


# --- forward / backward -------------------------------------------------------

def _check_sequences(model: RnnModel, sequences: np.ndarray) -> np.ndarray:
    x = np.asarray(sequences, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != model.window or x.shape[2] != model.n_features:
        raise ShapeError(
            f"expected sequences shaped (batch, {model.window}, "
            f"{model.n_features}), got {np.asarray(sequences).shape}")
    return x


def _forward(model: RnnModel, sequences: np.ndarray):
    """Returns predictions plus the per-step caches BPTT needs."""
    x = _check_sequences(model, sequences)
    batch, window, _ = x.shape
    h_size = model.hidden
    h = [np.zeros((batch, h_size)) for _ in range(model.layers)]
    c = [np.zeros((batch, h_size)) for _ in range(model.layers)]
    caches = []
    for t in range(window):
        step = []
        inp = x[:, t, :]
        for layer in range(model.layers):
            h_prev, c_prev = h[layer], c[layer]
            z = inp @ model.w_x[layer] + h_prev @ model.w_h[layer] + model.b[layer]
            if model.cell == "elman":
                h_new = np.tanh(z)
                step.append((inp, h_prev, h_new))
                h[layer] = h_new
                inp = h_new
            else:
                zi, zf, zo, zg = np.split(z, 4, axis=1)
                gi, gf, go = sigmoid(zi), sigmoid(zf), sigmoid(zo)
                gg = np.tanh(zg)
                c_new = gf * c_prev + gi * gg
                tc = np.tanh(c_new)
                h_new = go * tc
                step.append((inp, h_prev, c_prev, gi, gf, go, gg, c_new, tc))
                h[layer], c[layer] = h_new, c_new
                inp = h_new
        caches.append(step)
    pred = (h[-1] @ model.w_out + model.b_out).ravel()
    return pred, h, caches


def _loss_and_grad(model: RnnModel, sequences: np.ndarray, targets: np.ndarray):
    x = _check_sequences(model, sequences)
    y = np.asarray(targets, dtype=float).ravel()
    pred, h_last, caches = _forward(model, x)
    resid = pred - y
    loss = float(np.mean(resid * resid))
    batch, window, _ = x.shape

    d_wx = [np.zeros_like(w) for w in model.w_x]
    d_wh = [np.zeros_like(w) for w in model.w_h]
    d_b = [np.zeros_like(b) for b in model.b]
    d_out = (2.0 / len(y)) * resid[:, None]
    d_wout = h_last[-1].T @ d_out
    d_bout = d_out.sum(axis=0)

    dh = [np.zeros((batch, model.hidden)) for _ in range(model.layers)]
    dc = [np.zeros((batch, model.hidden)) for _ in range(model.layers)]
    dh[-1] = d_out @ model.w_out.T

    for t in range(window - 1, -1, -1):
        d_inp = None
        for layer in range(model.layers - 1, -1, -1):
            grad_h = dh[layer]
            if d_inp is not None:
                grad_h = grad_h + d_inp
            if model.cell == "elman":
                inp, h_prev, h_new = caches[t][layer]
                dz = grad_h * (1.0 - h_new * h_new)
            else:
                inp, h_prev, c_prev, gi, gf, go, gg, c_new, tc = caches[t][layer]
                d_go = grad_h * tc
                d_c = dc[layer] + grad_h * go * (1.0 - tc * tc)
                d_gi = d_c * gg
                d_gf = d_c * c_prev
                d_gg = d_c * gi
                dc[layer] = d_c * gf
                dz = np.concatenate([
                    d_gi * gi * (1.0 - gi),
                    d_gf * gf * (1.0 - gf),
                    d_go * go * (1.0 - go),
                    d_gg * (1.0 - gg * gg),
                ], axis=1)
            d_wx[layer] += inp.T @ dz
            d_wh[layer] += h_prev.T @ dz
            d_b[layer] += dz.sum(axis=0)
            dh[layer] = dz @ model.w_h[layer].T
            d_inp = dz @ model.w_x[layer].T if layer > 0 else None

    grad = flatten_arrays(d_wx + d_wh + d_b + [d_wout, d_bout])
    return loss, grad


def rnn_predict(model: RnnModel, sequence: np.ndarray) -> np.ndarray | float:
    """Forward pass from zero initial state; bit-identical on repeat calls.

    A single ``window x features`` sequence gives a float; a batch
    (3-D input) gives a vector.
    """
    x = np.asarray(sequence, dtype=float)
    single = x.ndim == 2
    pred, _, _ = _forward(model, x)
    return float(pred[0]) if single else pred


# --- training -----------------------------------------------------------------

def make_sequences(features: np.ndarray, targets: np.ndarray,
                   window: int) -> tuple[np.ndarray, np.ndarray]:
    """Rolling windows: months t-window..t-1 predict the target at t."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    if len(x) != len(y):
        raise ShapeError("features and targets differ in length")
    if len(y) <= window:
        raise LengthError(
            f"need more than window={window} months, got {len(y)}")
    seqs = np.stack([x[t - window:t] for t in range(window, len(y))])
    return seqs, y[window:]


def rnn_train(dataset, config: RnnConfig,
              window: tuple[int | str, int | str] | None = None,
              val_window: tuple[int | str, int | str] | None = None,
              val_data: tuple[np.ndarray, np.ndarray] | None = None,
              patience: int = 50) -> RnnModel:
    """BPTT with mini-batch Adam; bit-reproducible for a fixed seed.

    ``dataset`` is an aligned dataset (rolling windows are cut from its
    training window by default), a ``(features, target)`` pair, or a
    pre-built ``(sequences, targets)`` pair with 3-D sequences. With a
    validation window (month range into the aligned dataset) or raw
    ``val_data`` arrays, training keeps the best-scoring weights and
    stops after ``patience`` epochs without improvement.
    """
    config.validate()
    seqs, y = _sequence_arrays(dataset, config, window)
    val = None
    if val_data is not None:
        val = _sequence_arrays(val_data, config, None, purpose="score")
    elif val_window is not None:
        val = _sequence_arrays(dataset, config, val_window, purpose="score")

    rng = derive(config.seed, "rnn-train")
    model = build_rnn(config.cell, seqs.shape[2], config.neurons,
                      config.hidden_layers, config.sequence_window, rng)
    model.config = config

    theta = model.flat_params()
    opt = Adam(theta.size, config.learning_rate)
    curve = []
    best = (np.inf, theta.copy(), 0)
    for epoch in range(config.epochs):
        for batch in shuffled_batches(rng, len(y), config.batch_size):
            _, grad = model.loss_and_grad(seqs[batch], y[batch])
            theta = opt.step(theta, grad)
            model.set_flat_params(theta)
        epoch_loss = model.loss(seqs, y)
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch)
        curve.append(epoch_loss)
        if val is not None:
            val_loss = model.loss(*val)
            if val_loss < best[0]:
                best = (val_loss, theta.copy(), epoch)
            elif epoch - best[2] >= patience:
                break

    if val is not None and np.isfinite(best[0]):
        theta = best[1]
        model.set_flat_params(theta)
    model.loss_curve = np.array(curve)
    model.final_loss = model.loss(seqs, y)
    return model


def _sequence_arrays(dataset, config: RnnConfig, window, purpose: str = "fit"):
    if isinstance(dataset, tuple):
        x, y = dataset
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            if x.shape[1] != config.sequence_window:
                raise ShapeError("prebuilt sequences do not match sequence_window")
            return x, np.asarray(y, dtype=float).ravel()
        return make_sequences(x, y, config.sequence_window)
    if window is None:
        window = dataset.train_window
    x, y = dataset.window(window[0], window[1], purpose=purpose)
    return make_sequences(x, y, config.sequence_window)
