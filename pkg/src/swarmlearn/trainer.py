"""GRU sequence regressor with hand-written backpropagation through time.

Recurrence per direction, with ``h_0 = 0``::

    z_t = sigmoid(x_t W_z + h_{t-1} U_z + b_z)
    r_t = sigmoid(x_t W_r + h_{t-1} U_r + b_r)
    c_t = tanh(x_t W_h + (r_t * h_{t-1}) U_h + b_h)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

The backward direction reads the sequence reversed.  The final state of
each direction is concatenated and mapped through a dense layer and the
output activation.  The loss is the mean squared error over all batch and
output elements.

Flat parameter order: for each direction (``fwd`` then ``bwd``) the blocks
``W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h``, then ``out.W`` and
``out.b``; arrays are flattened row-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GATE_BLOCKS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")
ACTIVATIONS = ("identity", "swish")


class BadShape(ValueError):
    pass


class EmptyShard(ValueError):
    pass


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def swish(x):
    """x * sigmoid(x)."""
    x = np.asarray(x, dtype=np.float64)
    out = x * sigmoid(x)
    return out if out.ndim else float(out)


def swish_grad(x):
    s = sigmoid(x)
    return s + x * s * (1.0 - s)


def mse(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise BadShape(f"{y.shape} vs {y_hat.shape}")
    return float(np.mean((y - y_hat) ** 2))


@dataclass
class TrainBatch:
    inputs: np.ndarray  # [n, T, k]
    targets: np.ndarray  # [n, out]

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.ndim != 3 or self.targets.ndim != 2 or len(self.inputs) != len(self.targets):
            raise BadShape(f"inputs {self.inputs.shape}, targets {self.targets.shape}")
        if self.inputs.shape[1] < 1:
            raise BadShape("sequence length must be >= 1")

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, idx) -> "TrainBatch":
        return TrainBatch(self.inputs[idx], self.targets[idx])

    @staticmethod
    def concat(batches) -> "TrainBatch":
        batches = list(batches)
        return TrainBatch(
            np.concatenate([b.inputs for b in batches]), np.concatenate([b.targets for b in batches])
        )


@dataclass(frozen=True)
class LocalUpdateConfig:
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.05

    def __post_init__(self):
        if self.local_epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("local_epochs and batch_size must be positive, learning_rate >= 0")


def param_shapes(input_dim: int, hidden_dim: int, output_dim: int, bidirectional: bool) -> list[tuple[str, tuple]]:
    k, h = input_dim, hidden_dim
    gate = {"W": (k, h), "U": (h, h), "b": (h,)}
    shapes = []
    for d in ("fwd", "bwd") if bidirectional else ("fwd",):
        for blk in GATE_BLOCKS:
            shapes.append((f"{d}.{blk}", gate[blk[0]]))
    n_dir = 2 if bidirectional else 1
    shapes.append(("out.W", (n_dir * h, output_dim)))
    shapes.append(("out.b", (output_dim,)))
    return shapes


def n_params(input_dim: int, hidden_dim: int, output_dim: int, bidirectional: bool) -> int:
    return sum(int(np.prod(s)) for _, s in param_shapes(input_dim, hidden_dim, output_dim, bidirectional))


@dataclass
class GruModel:
    input_dim: int
    hidden_dim: int
    output_dim: int
    bidirectional: bool = False
    output_activation: str = "identity"
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.output_activation!r}")
        if not self.params:
            self.params = {name: np.zeros(shape) for name, shape in self.shapes()}

    @classmethod
    def init(cls, input_dim, hidden_dim, output_dim, bidirectional=False, output_activation="identity", seed=0):
        """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) for every block."""
        model = cls(input_dim, hidden_dim, output_dim, bidirectional, output_activation)
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(hidden_dim)
        for name, shape in model.shapes():
            model.params[name] = rng.uniform(-bound, bound, size=shape)
        return model

    def shapes(self):
        return param_shapes(self.input_dim, self.hidden_dim, self.output_dim, self.bidirectional)

    @property
    def size(self) -> int:
        return n_params(self.input_dim, self.hidden_dim, self.output_dim, self.bidirectional)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name, _ in self.shapes()])

    def with_weights(self, flat) -> "GruModel":
        return unflatten(flat, self.dims())

    def dims(self) -> dict:
        return dict(
            input_dim=self.input_dim,
            hidden_dim=self.hidden_dim,
            output_dim=self.output_dim,
            bidirectional=self.bidirectional,
            output_activation=self.output_activation,
        )


def flatten(model: GruModel) -> np.ndarray:
    return model.flatten()


def unflatten(flat, dims: dict) -> GruModel:
    flat = np.asarray(flat, dtype=np.float64).ravel()
    model = GruModel(**dims)
    if flat.size != model.size:
        raise BadShape(f"expected {model.size} weights, got {flat.size}")
    pos = 0
    for name, shape in model.shapes():
        n = int(np.prod(shape))
        model.params[name] = flat[pos : pos + n].reshape(shape).copy()
        pos += n
    return model


def _direction_forward(p, d, xs):
    """Run one direction over ``xs`` ([T, n, k], already in processing order)."""
    n = xs.shape[1]
    h = np.zeros((n, p[f"{d}.U_z"].shape[0]))
    steps = []
    for x in xs:
        z = sigmoid(x @ p[f"{d}.W_z"] + h @ p[f"{d}.U_z"] + p[f"{d}.b_z"])
        r = sigmoid(x @ p[f"{d}.W_r"] + h @ p[f"{d}.U_r"] + p[f"{d}.b_r"])
        c = np.tanh(x @ p[f"{d}.W_h"] + (r * h) @ p[f"{d}.U_h"] + p[f"{d}.b_h"])
        steps.append((x, h, z, r, c))
        h = (1.0 - z) * h + z * c
    return h, steps


def _check(model: GruModel, batch: TrainBatch):
    if batch.inputs.shape[2] != model.input_dim:
        raise BadShape(f"model expects {model.input_dim} features, batch has {batch.inputs.shape[2]}")
    if batch.targets.shape[1] != model.output_dim:
        raise BadShape(f"model emits {model.output_dim} outputs, batch has {batch.targets.shape[1]}")


def gru_forward(model: GruModel, batch: TrainBatch):
    """Predictions ``[n, out]`` and the activations needed by :func:`gru_backward`."""
    if batch.inputs.ndim != 3 or batch.inputs.shape[2] != model.input_dim:
        raise BadShape(f"inputs {batch.inputs.shape} do not match input_dim {model.input_dim}")
    p = model.params
    xs = np.swapaxes(batch.inputs, 0, 1)
    h_f, steps_f = _direction_forward(p, "fwd", xs)
    finals, cache = [h_f], {"fwd": steps_f}
    if model.bidirectional:
        h_b, steps_b = _direction_forward(p, "bwd", xs[::-1])
        finals.append(h_b)
        cache["bwd"] = steps_b
    hidden = np.concatenate(finals, axis=1)
    pre = hidden @ p["out.W"] + p["out.b"]
    pred = swish(pre) if model.output_activation == "swish" else pre
    cache["hidden"] = hidden
    cache["pre"] = pre
    return pred, cache


def _direction_backward(p, d, steps, dh, grads):
    for x, h_prev, z, r, c in reversed(steps):
        dc = dh * z
        dz = dh * (c - h_prev)
        dh_prev = dh * (1.0 - z)

        da_h = dc * (1.0 - c * c)
        grads[f"{d}.W_h"] += x.T @ da_h
        grads[f"{d}.U_h"] += (r * h_prev).T @ da_h
        grads[f"{d}.b_h"] += da_h.sum(axis=0)
        drh = da_h @ p[f"{d}.U_h"].T
        dh_prev += drh * r

        da_r = drh * h_prev * r * (1.0 - r)
        grads[f"{d}.W_r"] += x.T @ da_r
        grads[f"{d}.U_r"] += h_prev.T @ da_r
        grads[f"{d}.b_r"] += da_r.sum(axis=0)
        dh_prev += da_r @ p[f"{d}.U_r"].T

        da_z = dz * z * (1.0 - z)
        grads[f"{d}.W_z"] += x.T @ da_z
        grads[f"{d}.U_z"] += h_prev.T @ da_z
        grads[f"{d}.b_z"] += da_z.sum(axis=0)
        dh_prev += da_z @ p[f"{d}.U_z"].T

        dh = dh_prev


def gru_backward(model: GruModel, batch: TrainBatch, cache=None):
    """Flat gradient of the batch MSE and the loss itself."""
    _check(model, batch)
    if cache is None:
        pred, cache = gru_forward(model, batch)
    else:
        pre = cache["pre"]
        pred = swish(pre) if model.output_activation == "swish" else pre
    diff = pred - batch.targets
    loss = float(np.mean(diff**2))
    d_pred = 2.0 * diff / diff.size
    d_pre = d_pred * swish_grad(cache["pre"]) if model.output_activation == "swish" else d_pred

    p = model.params
    grads = {name: np.zeros(shape) for name, shape in model.shapes()}
    grads["out.W"] = cache["hidden"].T @ d_pre
    grads["out.b"] = d_pre.sum(axis=0)
    d_hidden = d_pre @ p["out.W"].T
    H = model.hidden_dim
    _direction_backward(p, "fwd", cache["fwd"], d_hidden[:, :H], grads)
    if model.bidirectional:
        _direction_backward(p, "bwd", cache["bwd"], d_hidden[:, H:], grads)
    flat = np.concatenate([grads[name].ravel() for name, _ in model.shapes()])
    return flat, loss


def predict(model: GruModel, batch: TrainBatch) -> np.ndarray:
    return gru_forward(model, batch)[0]


def evaluate(model: GruModel, batch: TrainBatch) -> float:
    _check(model, batch)
    return mse(batch.targets, predict(model, batch))


def sgd_step(model: GruModel, batch: TrainBatch, learning_rate: float) -> GruModel:
    grad, _ = gru_backward(model, batch)
    return model.with_weights(model.flatten() - learning_rate * grad)


def local_update(
    model: GruModel,
    shard: TrainBatch,
    cfg: LocalUpdateConfig,
    seed: int = 0,
    val: Optional[TrainBatch] = None,
):
    """Minibatch SGD for ``cfg.local_epochs`` passes in seeded shuffled order.

    Returns the new flat weights and ``(train_loss, val_loss)`` evaluated at
    those weights; without a validation batch the train loss is repeated.
    """
    if shard is None or len(shard) == 0:
        raise EmptyShard("local shard has no samples")
    _check(model, shard)
    rng = np.random.default_rng(seed)
    w = model.flatten()
    current = model
    n = len(shard)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start : start + cfg.batch_size])
            grad, _ = gru_backward(current, shard.subset(idx))
            w = w - cfg.learning_rate * grad
            current = model.with_weights(w)
    train_loss = evaluate(current, shard)
    val_loss = evaluate(current, val) if val is not None and len(val) else train_loss
    return w, (train_loss, val_loss)
