"""Dense feed-forward networks with exact backpropagation.

Networks are plain containers of float64 arrays; :func:`forward` and
:func:`backward` are pure functions of their inputs.  Inputs may be a single
vector ``(d0,)`` or a batch ``(B, d0)``; gradients returned by
:func:`backward` are summed over the batch, so callers average by scaling
the upstream gradient.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError, StaleTapeError

ACTIVATIONS = ("linear", "relu", "sigmoid", "softplus")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activate(name, z):
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "softplus":
        return np.logaddexp(0.0, z)
    raise ConfigError(f"unknown activation {name!r}")


def activate_grad(name, z):
    """Derivative of the activation at the pre-activation ``z``.

    The relu subgradient at 0 is 0.
    """
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s)
    if name == "softplus":
        return _sigmoid(z)
    raise ConfigError(f"unknown activation {name!r}")


class Mlp:
    """Feed-forward network ``x -> act_L(W_L ... act_1(W_1 x + b_1) ... + b_L)``.

    ``weights[l]`` has shape ``(layer_dims[l+1], layer_dims[l])``.  With
    ``bias=False`` the biases are fixed at zero and never updated.
    """

    def __init__(self, layer_dims, activations, weights, biases, seed=None, bias=True):
        self.layer_dims = [int(d) for d in layer_dims]
        self.activations = list(activations)
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        self.seed = seed
        self.bias = bool(bias)
        self._version = 0
        self._check()

    def _check(self):
        dims = self.layer_dims
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ConfigError(f"layer_dims must hold at least two positive sizes, got {dims}")
        if len(self.activations) != len(dims) - 1:
            raise ConfigError("need one activation per non-input layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}; choose from {ACTIVATIONS}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ConfigError("weights/biases do not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise ConfigError(
                    f"layer {l}: expected W {(dims[l + 1], dims[l])}, b {(dims[l + 1],)}; "
                    f"got {w.shape}, {b.shape}")

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def mark_mutated(self):
        self._version += 1

    def get_flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in
                               zip(self.weights, self.biases)])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params():
            raise ShapeError(f"expected {self.n_params()} parameters, got {flat.size}")
        i = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[i:i + w.size].reshape(w.shape)
            i += w.size
            b[...] = flat[i:i + b.size]
            i += b.size
        self.mark_mutated()

    def copy(self):
        return Mlp(self.layer_dims, self.activations,
                   [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   seed=self.seed, bias=self.bias)

    def __call__(self, x):
        return forward(self, x)[0]

    # -- checkpoint -------------------------------------------------------

    def to_dict(self):
        return {
            "layer_dims": self.layer_dims,
            "activations": self.activations,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "bias": self.bias,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["layer_dims"], d["activations"], d["weights"], d["biases"],
                   seed=d.get("seed"), bias=d.get("bias", True))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Tape:
    """Activation cache produced by :func:`forward`."""

    net_id: int
    version: int
    single: bool
    inputs: list      # input to each layer, (B, d_l)
    pre: list         # pre-activations, (B, d_{l+1})


def forward(net, x):
    """Evaluate ``net`` at ``x``.  Returns ``(y, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise ShapeError(f"expected input of length {net.in_dim}, got shape {x.shape}")
    inputs, pre = [], []
    h = X
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = activate(act, z)
    tape = Tape(id(net), net._version, single, inputs, pre)
    return (h[0] if single else h), tape


def backward(net, tape, dy):
    """Backpropagate ``dy = dLoss/dy`` through ``net``.

    Returns ``(grads, dx)`` with ``grads`` a list of ``(dW, db)`` pairs.
    """
    if tape.net_id != id(net) or tape.version != net._version:
        raise StaleTapeError("tape was recorded on a different or since-mutated network")
    dy = np.asarray(dy, dtype=np.float64)
    D = dy[None, :] if tape.single else dy
    if D.shape != tape.pre[-1].shape:
        raise ShapeError(f"upstream gradient shape {dy.shape} does not match output")
    grads = [None] * net.n_layers
    for l in range(net.n_layers - 1, -1, -1):
        dz = D * activate_grad(net.activations[l], tape.pre[l])
        dW = dz.T @ tape.inputs[l]
        db = dz.sum(axis=0) if net.bias else np.zeros(dz.shape[1])
        grads[l] = (dW, db)
        D = dz @ net.weights[l]
    return grads, (D[0] if tape.single else D)


def flatten_grads(grads):
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])


def grad_norm(grads):
    return float(np.sqrt(sum(np.sum(dW * dW) + np.sum(db * db) for dW, db in grads)))


def init_weights(layer_dims, activations, seed, bias=True):
    """Random network: He-normal for relu layers, Glorot-uniform otherwise."""
    if not layer_dims:
        raise ConfigError("layer_dims is empty")
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"invalid layer_dims {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l, act in enumerate(activations):
        fan_in, fan_out = dims[l], dims[l + 1]
        if act == "relu":
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        else:
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return Mlp(dims, activations, weights, biases, seed=seed, bias=bias)


@dataclass
class OptimState:
    """Optimizer state.

    ``sgd_sqrt`` applies ``base_step / sqrt(k)`` at update k; ``adam`` uses
    the usual bias-corrected moments with a constant base step, or with
    ``base_step / sqrt(k)`` when ``schedule="sqrt"``.
    """

    kind: str = "sgd_sqrt"
    base_step: float = 0.01
    schedule: str = "constant"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    step_count: int = 0
    last_step: float = 0.0
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd_sqrt", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.schedule not in ("constant", "sqrt"):
            raise ConfigError(f"unknown step schedule {self.schedule!r}")
        if not self.base_step > 0:
            raise ConfigError(f"base_step must be positive, got {self.base_step}")

    def step_size(self, k):
        """Nominal step size eta_k of update ``k`` (1-based)."""
        if self.kind == "sgd_sqrt" or self.schedule == "sqrt":
            return self.base_step / np.sqrt(k)
        return self.base_step


def step(net, opt, grads):
    """Apply one optimizer update in place; returns ``(net, opt)``."""
    if len(grads) != net.n_layers:
        raise ShapeError("gradient does not match network depth")
    for (dW, db), w, b in zip(grads, net.weights, net.biases):
        if dW.shape != w.shape or db.shape != b.shape:
            raise ShapeError("gradient shapes do not match network")
    opt.step_count += 1
    k = opt.step_count
    eta = opt.step_size(k)
    opt.last_step = eta
    if opt.kind == "sgd_sqrt":
        for (dW, db), w, b in zip(grads, net.weights, net.biases):
            w -= eta * dW
            if net.bias:
                b -= eta * db
    else:
        if not opt.m:
            opt.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
            opt.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        c1 = 1.0 - opt.beta1 ** k
        c2 = 1.0 - opt.beta2 ** k
        for l, ((dW, db), w, b) in enumerate(zip(grads, net.weights, net.biases)):
            for i, (g, p) in enumerate(((dW, w), (db, b))):
                if i == 1 and not net.bias:
                    continue
                m = opt.m[l][i]
                v = opt.v[l][i]
                m *= opt.beta1
                m += (1.0 - opt.beta1) * g
                v *= opt.beta2
                v += (1.0 - opt.beta2) * g * g
                p -= eta * (m / c1) / (np.sqrt(v / c2) + opt.eps_adam)
    net.mark_mutated()
    return net, opt
