"""Minibatch SGD on a fixed per-sample target distribution.

Plain cross-entropy, the cross-domain risk and constant-weight distillation
all reduce to cross-entropy against a target matrix (one-hot rows, the mixed
target, or the distillation blend), so a single trainer serves all three.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import Divergence
from ..model import OptimizerState, backward, forward_logits, init_params, sgd_step
from ..xerm import soft_cross_entropy_from_logits

_INIT_STREAM, _ORDER_STREAM = 11, 12


@dataclass
class TrainSettings:
    epochs: int = 60
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    milestones: list = field(default_factory=lambda: [40, 50])
    decay: float = 0.1
    weight_decay: float = 0.0

    def optimizer(self):
        schedule = [(0, 1.0)] + [(m, self.decay ** (k + 1))
                                 for k, m in enumerate(sorted(self.milestones))]
        return OptimizerState(self.lr, self.momentum, schedule)


def one_hot(labels, C):
    return np.eye(C)[np.asarray(labels, dtype=np.int64)]


def predict(params, x):
    """Argmax class; ties resolve to the lowest index."""
    return np.argmax(forward_logits(params, x), axis=-1)


def fresh_params(arch, dims, C, hidden, seed, dtype):
    return init_params(arch, dims, C, hidden, seed=[seed, _INIT_STREAM], dtype=dtype)


def fit(params, x, targets, settings, seed, trainable=None):
    """Train ``params`` in place on soft ``targets``; return the per-epoch mean loss.

    ``trainable`` restricts updates to a subset of parameter names (the
    others keep their values).
    """
    n = len(x)
    x = np.asarray(x, dtype=params.dtype)
    targets = np.asarray(targets, dtype=np.float64)
    state = settings.optimizer()
    rng = np.random.default_rng([seed, _ORDER_STREAM])
    curve = []
    for epoch in range(settings.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, settings.batch_size):
            idx = order[start:start + settings.batch_size]
            logits = forward_logits(params, x[idx])
            loss, grad = soft_cross_entropy_from_logits(logits, targets[idx])
            total += float(loss.sum())
            grads = backward(params, x[idx], (grad / len(idx)).astype(params.dtype))
            if settings.weight_decay:
                for name, p in params.arrays().items():
                    getattr(grads, name)[...] += settings.weight_decay * p
            if trainable is not None:
                for name in params.names():
                    if name not in trainable:
                        getattr(grads, name)[...] = 0
            sgd_step(params, grads, state, epoch)
        mean = total / n
        if not np.isfinite(mean) or not np.isfinite(params.flat()).all():
            raise Divergence(f"non-finite loss or parameters at epoch {epoch} (loss={mean})")
        curve.append(mean)
    return curve
