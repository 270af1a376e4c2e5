"""Long-tailed dataset construction, loading and class-subset partitioning."""

import csv
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (InsufficientSamples, InvalidProfile, InvalidThresholds,
                     NonContiguousLabels, ParseError)

MANY, MEDIUM, FEW = "many", "medium", "few"
SUBSETS = (MANY, MEDIUM, FEW)


@dataclass(frozen=True)
class DecayProfile:
    """Exponential class-size decay: ``N_head * mu ** ((i - 1) / (C - 1))``."""
    N_head: int
    C: int
    mu: float

    @classmethod
    def from_ratio(cls, N_head, C, imbalance_ratio):
        return cls(N_head, C, 1.0 / imbalance_ratio)

    def validate(self):
        if self.C < 2:
            raise InvalidProfile(f"need at least 2 classes, got C={self.C}")
        if self.N_head < 1:
            raise InvalidProfile(f"N_head must be >= 1, got {self.N_head}")
        if not (0.0 < self.mu <= 1.0):
            raise InvalidProfile(f"mu must lie in (0, 1], got {self.mu}")


@dataclass
class LongTailDataset:
    features: np.ndarray
    labels: np.ndarray
    class_counts: np.ndarray
    name: str = ""
    profile: DecayProfile | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_counts = np.asarray(self.class_counts, dtype=np.int64)

    @classmethod
    def from_arrays(cls, features, labels, n_classes=None, name="", profile=None):
        labels = np.asarray(labels, dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 0
        counts = np.bincount(labels, minlength=n_classes)
        return cls(np.asarray(features), labels, counts, name, profile)

    @property
    def n_samples(self):
        return len(self.labels)

    @property
    def n_dims(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.class_counts)

    @property
    def imbalance_ratio(self):
        return int(self.class_counts.max()) / int(self.class_counts.min())

    def subset(self, idx, name=None):
        idx = np.asarray(idx, dtype=np.int64)
        return LongTailDataset.from_arrays(
            self.features[idx], self.labels[idx], self.n_classes,
            self.name if name is None else name, self.profile)


@dataclass
class SubsetPartition:
    many_threshold: int
    few_threshold: int
    assignment: list = field(default_factory=list)

    def classes(self, subset):
        return [c for c, tag in enumerate(self.assignment) if tag == subset]


def decay_counts(profile):
    """Per-class sizes of an exponentially decaying split.

    ``n_i = floor(N_head * mu ** ((i - 1) / (C - 1)))``, clamped to at least 1.

    >>> decay_counts(DecayProfile(50, 3, 0.25))
    [50, 25, 12]
    """
    profile.validate()
    N, C, mu = profile.N_head, profile.C, profile.mu
    return [max(1, math.floor(N * mu ** ((i - 1) / (C - 1)))) for i in range(1, C + 1)]


def class_order(train_counts):
    """Class ids sorted by descending train count, ties by ascending id."""
    counts = np.asarray(train_counts)
    return sorted(range(len(counts)), key=lambda c: (-int(counts[c]), c))


def subsample_indices(balanced, profile, seed, train_counts=None):
    """Row indices kept when downsampling ``balanced`` to the decay profile.

    The i-th largest training class (``train_counts``, or class id order when
    omitted) keeps ``decay_counts(profile)[i]`` rows drawn without replacement.
    """
    targets = decay_counts(profile)
    if profile.C != balanced.n_classes:
        raise InvalidProfile(
            f"profile has C={profile.C}, dataset has {balanced.n_classes} classes")
    if train_counts is None:
        order = list(range(balanced.n_classes))
    else:
        if len(train_counts) != balanced.n_classes:
            raise InvalidProfile("train_counts length differs from class count")
        order = class_order(train_counts)
    rng = np.random.default_rng(seed)
    keep = []
    for rank, c in enumerate(order):
        pool = np.flatnonzero(balanced.labels == c)
        need = targets[rank]
        if len(pool) < need:
            raise InsufficientSamples(c, len(pool), need)
        keep.append(rng.choice(pool, size=need, replace=False))
    return np.sort(np.concatenate(keep))


def subsample_longtail(balanced, profile, seed, train_counts=None, name=None):
    idx = subsample_indices(balanced, profile, seed, train_counts)
    out = balanced.subset(idx, name=name or f"{balanced.name}-mu{profile.mu:g}")
    out.profile = profile
    return out


def _class_means(C, dims, class_sep, seed):
    rng = np.random.default_rng([seed, 0])
    directions = rng.standard_normal((C, dims))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return class_sep * directions


def _draw(means, counts, noise_sd, rng):
    labels = np.repeat(np.arange(len(means)), counts)
    x = means[labels] + noise_sd * rng.standard_normal((len(labels), means.shape[1]))
    return x, labels


def synth_gaussian_longtail(C, dims, profile, class_sep, noise_sd, seed,
                            n_test_per_class=100):
    """Isotropic Gaussian class clusters with a long-tailed training split.

    Class means are unit directions scaled by ``class_sep``, fixed by ``seed``.
    Returns ``(train, balanced_test)``.
    """
    if C < 2 or dims < 2:
        raise InvalidProfile(f"need C >= 2 and dims >= 2, got C={C}, dims={dims}")
    if class_sep <= 0 or noise_sd <= 0:
        raise InvalidProfile("class_sep and noise_sd must be positive")
    if profile.C != C:
        raise InvalidProfile(f"profile has C={profile.C}, expected {C}")
    means = _class_means(C, dims, class_sep, seed)
    x, y = _draw(means, decay_counts(profile), noise_sd, np.random.default_rng([seed, 1]))
    train = LongTailDataset.from_arrays(x, y, C, "synthetic-train", profile)
    x, y = _draw(means, [n_test_per_class] * C, noise_sd, np.random.default_rng([seed, 2]))
    test = LongTailDataset.from_arrays(x, y, C, "synthetic-balanced-test",
                                       DecayProfile(n_test_per_class, C, 1.0))
    return train, test


def synth_balanced_pool(C, dims, n_per_class, class_sep, noise_sd, seed):
    """Balanced training pool sharing the class means of ``synth_gaussian_longtail``."""
    means = _class_means(C, dims, class_sep, seed)
    x, y = _draw(means, [n_per_class] * C, noise_sd, np.random.default_rng([seed, 3]))
    return LongTailDataset.from_arrays(x, y, C, "synthetic-balanced-train",
                                       DecayProfile(n_per_class, C, 1.0))


def standardize(train, *others):
    """Zero-mean, unit-variance features using statistics of ``train`` only."""
    mean = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd[sd == 0] = 1.0
    return tuple(replace(d, features=((d.features - mean) / sd).astype(d.features.dtype))
                 for d in (train, *others))


def partition_subsets(train_counts, many_threshold=100, few_threshold=20):
    """Tag classes many (> many_threshold), few (< few_threshold) or medium."""
    if not (many_threshold >= few_threshold >= 1):
        raise InvalidThresholds(
            f"need many_threshold >= few_threshold >= 1, got "
            f"({many_threshold}, {few_threshold})")
    tags = []
    for n in train_counts:
        if n > many_threshold:
            tags.append(MANY)
        elif n < few_threshold:
            tags.append(FEW)
        else:
            tags.append(MEDIUM)
    return SubsetPartition(many_threshold, few_threshold, tags)


# --- tabular IO -----------------------------------------------------------

_RAW_HEADER = struct.Struct("<QQQ")


def _check_contiguous(labels, n_classes=None):
    present = np.unique(labels)
    C = int(present.max()) + 1 if n_classes is None else n_classes
    if present.min() < 0 or len(present) != C or present[-1] != C - 1:
        raise NonContiguousLabels(
            f"labels must cover 0..{C - 1} without gaps, found {present.tolist()}")
    return C


def _load_csv(path, header):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if rows and len(values) != len(rows[0]):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(values)}")
            if len(values) < 2:
                raise ParseError(f"{path}: line {lineno}: need features and a label")
            label = values[-1]
            if label != int(label):
                raise ParseError(f"{path}: line {lineno}: non-integer label {label}")
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, :-1], arr[:, -1].astype(np.int64), None


def _load_raw(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _RAW_HEADER.size:
        raise ParseError(f"{path}: offset 0: truncated header ({len(blob)} bytes)")
    n, d, C = _RAW_HEADER.unpack_from(blob, 0)
    if n == 0 or d == 0:
        raise ParseError(f"{path}: offset 0: empty dataset (n={n}, dims={d})")
    feat_end = _RAW_HEADER.size + 4 * n * d
    expected = feat_end + 4 * n
    if len(blob) != expected:
        raise ParseError(
            f"{path}: offset {min(len(blob), expected)}: expected {expected} bytes, got {len(blob)}")
    x = np.frombuffer(blob, dtype="<f4", count=n * d, offset=_RAW_HEADER.size).reshape(n, d)
    y = np.frombuffer(blob, dtype="<u4", count=n, offset=feat_end).astype(np.int64)
    return x.astype(np.float32), y, int(C)


def load_tabular(path, format="csv", header=False, name=None):
    """Read features plus an integer label column from CSV or raw-f32 files.

    CSV: label in the last column, optional header row. raw-f32: three
    little-endian u64 (n_samples, n_dims, C), an f32 feature block, then u32 labels.
    """
    if format == "csv":
        x, y, C = _load_csv(path, header)
    elif format == "raw-f32":
        x, y, C = _load_raw(path)
    else:
        raise ParseError(f"unknown tabular format {format!r}")
    C = _check_contiguous(y, C)
    return LongTailDataset.from_arrays(x, y, C, name or str(path))


def save_tabular(dataset, path, format="csv", header=False):
    if format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if header:
                w.writerow([f"x{j}" for j in range(dataset.n_dims)] + ["label"])
            for row, label in zip(dataset.features, dataset.labels):
                w.writerow([repr(float(v)) for v in row] + [int(label)])
    elif format == "raw-f32":
        with open(path, "wb") as fh:
            fh.write(_RAW_HEADER.pack(dataset.n_samples, dataset.n_dims, dataset.n_classes))
            fh.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes())
    else:
        raise ParseError(f"unknown tabular format {format!r}")
