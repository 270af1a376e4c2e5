"""Softmax-linear and one-hidden-layer ReLU classifiers with manual gradients.

Inputs may be a single feature vector ``(dims,)`` or a batch ``(n, dims)``;
outputs follow the same leading shape.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptCheckpoint, ShapeMismatch

LINEAR, MLP1 = "linear", "mlp1"
_ARCH_TAGS = {LINEAR: 0, MLP1: 1}
_MAGIC = b"XERM"
_VERSION = 1
_HEADER = struct.Struct("<4sIBQQQ")


@dataclass
class ModelParams:
    arch: str
    W2: np.ndarray
    b2: np.ndarray
    W1: np.ndarray | None = None
    b1: np.ndarray | None = None

    @property
    def dims(self):
        return self.W1.shape[0] if self.arch == MLP1 else self.W2.shape[0]

    @property
    def hidden(self):
        return self.W1.shape[1] if self.arch == MLP1 else 0

    @property
    def n_classes(self):
        return self.W2.shape[1]

    @property
    def dtype(self):
        return self.W2.dtype

    def names(self):
        """Parameter names in checkpoint order."""
        return ("W1", "b1", "W2", "b2") if self.arch == MLP1 else ("W2", "b2")

    def arrays(self):
        return {k: getattr(self, k) for k in self.names()}

    def copy(self):
        return ModelParams(self.arch, **{k: v.copy() for k, v in self.arrays().items()})

    def astype(self, dtype):
        return ModelParams(self.arch, **{k: v.astype(dtype) for k, v in self.arrays().items()})

    def flat(self):
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    def equals(self, other):
        if self.arch != other.arch:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays().values(),
                                                        other.arrays().values()))


def _glorot(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(arch, dims, n_classes, hidden=32, seed=0, dtype=np.float32):
    """Glorot-uniform weights and zero biases, seeded."""
    rng = np.random.default_rng(seed)
    if arch == LINEAR:
        return ModelParams(LINEAR, _glorot(rng, dims, n_classes, dtype),
                           np.zeros(n_classes, dtype))
    if arch == MLP1:
        W1 = _glorot(rng, dims, hidden, dtype)
        W2 = _glorot(rng, hidden, n_classes, dtype)
        return ModelParams(MLP1, W2, np.zeros(n_classes, dtype), W1, np.zeros(hidden, dtype))
    raise ValueError(f"unknown architecture {arch!r}")


def _check_input(params, x):
    x = np.asarray(x)
    if x.ndim not in (1, 2) or x.shape[-1] != params.dims:
        raise ShapeMismatch(f"expected input with {params.dims} features, got shape {x.shape}")
    return x


def hidden_features(params, x):
    """Post-ReLU hidden activations (the backbone output of an mlp1)."""
    x = _check_input(params, x)
    return np.maximum(x @ params.W1 + params.b1, 0)


def forward_logits(params, x):
    x = _check_input(params, x)
    h = hidden_features(params, x) if params.arch == MLP1 else x
    return h @ params.W2 + params.b2


def softmax(logits):
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def backward(params, x, grad_logits):
    """Gradient of ``sum(logits * grad_logits)`` with respect to every parameter.

    Returned as a ``ModelParams`` with the same layout. For a batch, the
    contributions of all rows are summed.
    """
    x = _check_input(params, x)
    g = np.asarray(grad_logits)
    if g.shape != x.shape[:-1] + (params.n_classes,):
        raise ShapeMismatch(
            f"grad_logits shape {g.shape} does not match logits {x.shape[:-1] + (params.n_classes,)}")
    X = np.atleast_2d(x)
    G = np.atleast_2d(g).astype(params.dtype, copy=False)
    if params.arch == LINEAR:
        return ModelParams(LINEAR, X.T @ G, G.sum(axis=0))
    pre = X @ params.W1 + params.b1
    h = np.maximum(pre, 0)
    dpre = (G @ params.W2.T) * (pre > 0)
    return ModelParams(MLP1, h.T @ G, G.sum(axis=0), X.T @ dpre, dpre.sum(axis=0))


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    schedule: list = field(default_factory=lambda: [(0, 1.0)])
    velocity: dict = field(default_factory=dict)

    def lr_at(self, epoch):
        mult = 1.0
        for start, m in sorted(self.schedule):
            if start <= epoch:
                mult = m
        return self.learning_rate * mult


def sgd_step(params, grads, state, epoch):
    """Heavy-ball update ``v = momentum * v - lr * g; p = p + v`` (in place)."""
    lr = state.lr_at(epoch)
    for name, p in params.arrays().items():
        g = getattr(grads, name)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p)
        v *= state.momentum
        v -= lr * g
        p += v
    return params, state


def save_checkpoint(params):
    """Serialize to bytes; parameter blocks are stored as little-endian f32."""
    header = _HEADER.pack(_MAGIC, _VERSION, _ARCH_TAGS[params.arch],
                          params.dims, params.hidden, params.n_classes)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                    for a in params.arrays().values())
    return header + body


def load_checkpoint(blob):
    blob = bytes(blob)
    if len(blob) < _HEADER.size:
        raise CorruptCheckpoint(f"truncated header: {len(blob)} bytes")
    magic, version, tag, dims, hidden, C = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != _VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    arch = {v: k for k, v in _ARCH_TAGS.items()}.get(tag)
    if arch is None:
        raise CorruptCheckpoint(f"unknown architecture tag {tag}")
    if arch == MLP1:
        shapes = {"W1": (dims, hidden), "b1": (hidden,), "W2": (hidden, C), "b2": (C,)}
    else:
        if hidden != 0:
            raise CorruptCheckpoint("linear checkpoint with non-zero hidden size")
        shapes = {"W2": (dims, C), "b2": (C,)}
    expected = _HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes.values())
    if len(blob) != expected:
        raise CorruptCheckpoint(f"expected {expected} bytes, got {len(blob)}")
    arrays, offset = {}, _HEADER.size
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, "<f4", n, offset).reshape(shape).astype(np.float32)
        offset += 4 * n
    return ModelParams(arch, **arrays)
