"""Cross-domain adjustment weights and the weighted two-term training risk.

Each training sample gets a ground-truth term (weight ``w_f``) and a
soft-target term against the balanced model's prediction (weight ``w_cf``).
The weights come from the two frozen base models' cross-entropies raised
to the power ``gamma`` and normalized to sum to one.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .balanced import adjust_logits
from .errors import InvalidDistribution
from .model import forward_logits, log_softmax, softmax

EPS = 1e-12
_SUM_TOL = 1e-5


def _as_probs(p):
    p = np.asarray(p, dtype=np.float64)
    if (p < 0).any() or not np.isfinite(p).all():
        raise InvalidDistribution("probabilities must be finite and non-negative")
    if np.abs(p.sum(axis=-1) - 1.0).max() > _SUM_TOL:
        raise InvalidDistribution("probability vectors must sum to 1")
    return p


def _one_hot(y, n_classes):
    """Accept integer ids or one-hot rows; return float64 one-hot rows."""
    y = np.asarray(y)
    if y.ndim >= 1 and y.shape[-1] == n_classes and y.dtype.kind == "f":
        return y.astype(np.float64)
    return np.eye(n_classes)[y.astype(np.int64)]


def cross_entropy(p, y):
    """``-log p[y]`` with probabilities clamped below at 1e-12."""
    p = _as_probs(p)
    t = _one_hot(y, p.shape[-1])
    return -(t * np.log(np.maximum(p, EPS))).sum(axis=-1)


def compute_weights(ce_f, ce_cf, gamma):
    """``w_f = (ce_f+eps)^g / ((ce_f+eps)^g + (ce_cf+eps)^g)``, ``w_cf = 1 - w_f``.

    Evaluated as a logistic of the log-ratio, which is the same quantity
    without overflow for large ``|gamma|``.
    """
    ce_f = np.asarray(ce_f, dtype=np.float64)
    ce_cf = np.asarray(ce_cf, dtype=np.float64)
    if (ce_f < 0).any() or (ce_cf < 0).any():
        raise ValueError("cross-entropies must be non-negative")
    w_f = expit(gamma * (np.log(ce_f + EPS) - np.log(ce_cf + EPS)))
    return w_f, 1.0 - w_f


@dataclass
class SampleWeights:
    sample_id: np.ndarray
    ce_f: np.ndarray
    ce_cf: np.ndarray
    w_f: np.ndarray
    w_cf: np.ndarray
    gamma: float

    def __len__(self):
        return len(self.sample_id)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["sample_id", "ce_f", "ce_cf", "w_f", "w_cf"])
            for row in zip(self.sample_id, self.ce_f, self.ce_cf, self.w_f, self.w_cf):
                out.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])

    @classmethod
    def from_csv(cls, path, gamma):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].astype(np.int64), *data[:, 1:].T, gamma=gamma)


def precompute_sample_weights(train, imbalanced, prior, tau=1.0, gamma=2.0):
    """Per-sample weights and soft targets against the frozen base models.

    Returns ``(SampleWeights, soft_targets)`` where ``soft_targets`` holds the
    balanced model's predicted distribution for every training row.
    """
    logits = forward_logits(imbalanced, train.features).astype(np.float64)
    p_f = softmax(logits)
    p_cf = softmax(adjust_logits(logits, prior, tau))
    ce_f = cross_entropy(p_f, train.labels)
    ce_cf = cross_entropy(p_cf, train.labels)
    w_f, w_cf = compute_weights(ce_f, ce_cf, gamma)
    weights = SampleWeights(np.arange(train.n_samples), ce_f, ce_cf, w_f, w_cf, gamma)
    return weights, p_cf


def mixed_target(y, y_hat, w_f, w_cf):
    """The distribution the weighted risk pulls predictions toward."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    t = _one_hot(y, y_hat.shape[-1])
    w_f = np.asarray(w_f, dtype=np.float64)[..., None]
    w_cf = np.asarray(w_cf, dtype=np.float64)[..., None]
    return w_f * t + w_cf * y_hat


def xerm_loss(f_probs, y, y_hat, w_f, w_cf):
    """Weighted sum of ground-truth and soft-target cross-entropies.

    Returns ``(loss, grad)`` where ``grad`` is the derivative with respect to
    the logits that produced ``f_probs``: ``f_probs - (w_f*y + w_cf*y_hat)``.
    """
    f = _as_probs(f_probs)
    _as_probs(y_hat)
    target = mixed_target(y, y_hat, w_f, w_cf)
    loss = -(target * np.log(np.maximum(f, EPS))).sum(axis=-1)
    return loss, f - target


def kd_constant_loss(f_probs, y, y_hat, w):
    """Distillation baseline: every sample uses ``(w_f, w_cf) = (1 - w, w)``."""
    return xerm_loss(f_probs, y, y_hat, 1.0 - w, w)


def soft_cross_entropy_from_logits(logits, target):
    """Per-row ``-sum(target * log_softmax(logits))`` and its logit gradient.

    The numerically stable path used by the trainers.
    """
    logits = np.asarray(logits, dtype=np.float64)
    logp = log_softmax(logits)
    return -(target * logp).sum(axis=-1), np.exp(logp) - target
