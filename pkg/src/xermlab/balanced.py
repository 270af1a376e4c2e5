"""Post-hoc logit adjustment: the balanced model derived from the imbalanced one."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass
from .model import forward_logits, softmax


@dataclass
class ClassPrior:
    pi: np.ndarray
    source_counts: np.ndarray

    @property
    def log_pi(self):
        return np.log(self.pi)


def prior_from_counts(counts):
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0 or (counts < 1).any():
        empty = np.flatnonzero(counts < 1).tolist()
        raise EmptyClass(f"classes without training samples: {empty}")
    return ClassPrior(counts / counts.sum(), counts)


def estimate_prior(train):
    """Empirical class frequencies of a training set."""
    return prior_from_counts(train.class_counts)


def adjust_logits(logits, prior, tau=1.0):
    """Subtract ``tau * log(prior)`` from the logits."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    logits = np.asarray(logits)
    if tau == 0:
        return logits
    return logits - (tau * prior.log_pi).astype(logits.dtype, copy=False)


def balanced_predict(params, x, prior, tau=1.0):
    return softmax(adjust_logits(forward_logits(params, x), prior, tau))
