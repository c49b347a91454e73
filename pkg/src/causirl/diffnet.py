"""Small feed-forward networks with hand-written reverse-mode gradients.

Three layer kinds are supported (dense, ReLU, batch normalization). Every
layer caches what its backward pass needs during ``forward`` in train mode.
Everything is float64.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, DegenerateBatchError, InputError, NumericError, ShapeError
from .rng import substream

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LOGIT_OFFSET = 1e-16


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" | "relu" | "batchnorm"
    dims: tuple = ()

    def __post_init__(self):
        if self.kind not in ("dense", "relu", "batchnorm"):
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        want = {"dense": 2, "relu": 0, "batchnorm": 1}[self.kind]
        if len(self.dims) != want:
            raise ConfigurationError(f"{self.kind} layer takes {want} dims, got {self.dims}")
        if any(int(d) <= 0 for d in self.dims):
            raise ConfigurationError(f"layer dims must be positive, got {self.dims}")


def dense(fan_in, fan_out):
    return LayerSpec("dense", (int(fan_in), int(fan_out)))


def relu():
    return LayerSpec("relu")


def batchnorm(n):
    return LayerSpec("batchnorm", (int(n),))


def mlp_specs(sizes, batchnorm_hidden=False):
    """Dense stack ``sizes[0] -> ... -> sizes[-1]`` with ReLU between layers.

    With ``batchnorm_hidden`` every hidden dense layer is followed by
    batchnorm before the ReLU. The last layer is linear.
    """
    specs = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        specs.append(dense(a, b))
        if i < len(sizes) - 2:
            if batchnorm_hidden:
                specs.append(batchnorm(b))
            specs.append(relu())
    return specs


class Dense:
    kind = "dense"

    def __init__(self, fan_in, fan_out, rng):
        bound = 1.0 / np.sqrt(fan_in)
        self.params = {
            "W": rng.uniform(-bound, bound, size=(fan_in, fan_out)),
            "b": np.zeros(fan_out),
        }
        self.in_dim, self.out_dim = fan_in, fan_out
        self._x = None

    def forward(self, x, training):
        if training:
            self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        grads = {"W": self._x.T @ g, "b": g.sum(axis=0)}
        return g @ self.params["W"].T, grads


class ReLU:
    kind = "relu"
    params = {}

    def __init__(self):
        self._mask = None

    def forward(self, x, training):
        mask = x > 0
        if training:
            self._mask = mask
        return np.where(mask, x, 0.0)

    def backward(self, g):
        return np.where(self._mask, g, 0.0), {}


class BatchNorm:
    kind = "batchnorm"

    def __init__(self, n):
        self.params = {"gamma": np.ones(n), "beta": np.zeros(n)}
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.in_dim = self.out_dim = n
        self._cache = None

    def forward(self, x, training, segments=None):
        if not training:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + BN_EPS)
            return self.params["gamma"] * xhat + self.params["beta"]
        bounds = _segment_bounds(x.shape[0], segments)
        xhat = np.empty_like(x)
        inv_stds = []
        for lo, hi in bounds:
            n = hi - lo
            if n < 2:
                raise DegenerateBatchError("batchnorm in train mode needs at least 2 rows")
            part = x[lo:hi]
            mu = part.mean(axis=0)
            var = part.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat[lo:hi] = (part - mu) * inv_std
            inv_stds.append(inv_std)
            self.running_mean = (1 - BN_MOMENTUM) * self.running_mean + BN_MOMENTUM * mu
            self.running_var = (1 - BN_MOMENTUM) * self.running_var + BN_MOMENTUM * var * n / (n - 1)
        self._cache = (xhat, inv_stds, bounds)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, g):
        xhat, inv_stds, bounds = self._cache
        grads = {"gamma": (g * xhat).sum(axis=0), "beta": g.sum(axis=0)}
        dxhat = g * self.params["gamma"]
        dx = np.empty_like(g)
        for (lo, hi), inv_std in zip(bounds, inv_stds):
            d, xh = dxhat[lo:hi], xhat[lo:hi]
            dx[lo:hi] = inv_std * (d - d.mean(axis=0) - xh * (d * xh).mean(axis=0))
        return dx, grads


def _segment_bounds(n, segments):
    if segments is None:
        return [(0, n)]
    sizes = [int(k) for k in segments]
    if sum(sizes) != n or any(k < 1 for k in sizes):
        raise ShapeError(f"segments {sizes} do not partition {n} rows")
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


class MlpModel:
    """An ordered stack of layers plus their parameters and batchnorm state.

    Parameters are exposed through :meth:`parameters` as a flat dict keyed
    ``"<layer index>.<name>"``; gradients from :meth:`backward` use the same
    keys.
    """

    def __init__(self, specs, seed=0):
        specs = list(specs)
        if not specs:
            raise ConfigurationError("empty layer list")
        rng = substream(seed, "init_mlp")
        self.specs = specs
        self.layers = []
        width = None
        for i, spec in enumerate(specs):
            if spec.kind == "dense":
                fan_in, fan_out = spec.dims
                if width is not None and fan_in != width:
                    raise ConfigurationError(f"layer {i}: fan_in {fan_in} does not match previous width {width}")
                self.layers.append(Dense(fan_in, fan_out, rng))
                width = fan_out
            elif spec.kind == "batchnorm":
                (n,) = spec.dims
                if width is not None and n != width:
                    raise ConfigurationError(f"layer {i}: batchnorm over {n} features after width {width}")
                self.layers.append(BatchNorm(n))
                width = n
            else:
                self.layers.append(ReLU())
        sized = [l for l in self.layers if l.kind != "relu"]
        if not sized:
            raise ConfigurationError("model needs at least one dense or batchnorm layer")
        self.in_dim = sized[0].in_dim
        self.out_dim = width
        self.training = True
        self._batch_rows = None

    @property
    def mode(self):
        return "train" if self.training else "eval"

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        self._batch_rows = None
        return self

    def parameters(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def set_parameters(self, params):
        for key, value in params.items():
            i, name = key.split(".")
            layer = self.layers[int(i)]
            if layer.params[name].shape != value.shape:
                raise ShapeError(f"{key}: shape {value.shape} != {layer.params[name].shape}")
            layer.params[name] = np.array(value, dtype=float)

    def state(self):
        """Deep copy of parameters and batchnorm running statistics."""
        out = {k: v.copy() for k, v in self.parameters().items()}
        for i, layer in enumerate(self.layers):
            if layer.kind == "batchnorm":
                out[f"{i}.running_mean"] = layer.running_mean.copy()
                out[f"{i}.running_var"] = layer.running_var.copy()
        return out

    def forward(self, X, segments=None):
        """Run ``X`` through the stack.

        ``segments`` lists consecutive row counts that are treated as separate
        batches by batchnorm in train mode (statistics and running-stat
        updates per segment, in order). This equals forwarding each segment on
        its own, since the other layers act row by row.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ShapeError(f"expected input of shape (n, {self.in_dim}), got {X.shape}")
        if X.shape[0] < 1:
            raise ShapeError("empty input batch")
        h = X
        for layer in self.layers:
            if layer.kind == "batchnorm":
                h = layer.forward(h, self.training, segments)
            else:
                h = layer.forward(h, self.training)
        self._batch_rows = X.shape[0] if self.training else None
        return h

    __call__ = forward

    def backward(self, grad_output):
        """Backpropagate ``grad_output`` (d loss / d output) from the last forward.

        Returns ``(grad_input, grads)`` where ``grads`` maps parameter keys to
        arrays shaped like :meth:`parameters`.
        """
        if not self.training:
            raise ContractError("backward requires train mode")
        if self._batch_rows is None:
            raise ContractError("backward called before a train-mode forward")
        g = np.asarray(grad_output, dtype=float)
        if g.shape != (self._batch_rows, self.out_dim):
            raise ShapeError(f"upstream gradient shape {g.shape} != {(self._batch_rows, self.out_dim)}")
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            g, layer_grads = self.layers[i].backward(g)
            for name, value in layer_grads.items():
                grads[f"{i}.{name}"] = value
        return g, grads


def init_mlp(specs, rng_seed=0):
    return MlpModel(specs, rng_seed)


def forward(model, X):
    return model.forward(X)


def _check_labels(logits, labels):
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not match")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise InputError("labels must be integer class indices")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(f"label out of range [0, {logits.shape[1]})")
    if np.isnan(logits).any():
        raise NumericError("NaN in logits")
    return logits, labels


def cross_entropy_with_grad(logits, labels):
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    logits, labels = _check_labels(logits, labels)
    z = logits + LOGIT_OFFSET
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def cross_entropy(logits, labels):
    return cross_entropy_with_grad(logits, labels)[0]


def backward(model, X, labels=None, grad_output=None):
    """Forward ``X`` and backpropagate.

    With ``labels`` the loss is the mean cross-entropy of the outputs. With
    ``grad_output`` the loss is the linear functional ``sum(grad_output * out)``
    so that an externally computed gradient (e.g. from a penalty) composes.
    Returns ``(loss, grads)``.
    """
    if not model.training:
        raise ContractError("backward requires train mode")
    if (labels is None) == (grad_output is None):
        raise ContractError("pass exactly one of labels or grad_output")
    out = model.forward(X)
    if labels is not None:
        loss, g = cross_entropy_with_grad(out, labels)
    else:
        g = np.asarray(grad_output, dtype=float)
        if g.shape != out.shape:
            raise ShapeError(f"upstream gradient shape {g.shape} != output shape {out.shape}")
        loss = float(np.vdot(g, out))
    _, grads = model.backward(g)
    return loss, grads


def accuracy(logits, labels):
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))
