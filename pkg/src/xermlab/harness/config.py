"""Experiment configuration and its flat ``key = value`` file format.

Grammar, one entry per line::

    # comment
    key = value
    seeds = 0, 1, 2        # lists are comma separated
    standardize = true     # booleans: true/false

Unknown keys are errors.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

from ..datasets import DecayProfile
from ..errors import ConfigError
from ..model import LINEAR, MLP1
from .training import TrainSettings

# keys that do not change results and are left out of the config hash
_UNHASHED = ("seeds", "out")


@dataclass
class ExperimentConfig:
    name: str = "default"
    # data
    dataset: str = "synthetic"
    train_path: str = ""
    test_path: str = ""
    probe_path: str = ""
    data_format: str = "csv"
    csv_header: bool = False
    n_classes: int = 10
    dims: int = 8
    n_head: int = 500
    mu: float = 0.01
    class_sep: float = 2.0
    noise_sd: float = 1.0
    n_test_per_class: int = 500
    n_probe_per_class: int = 500
    standardize: bool = True
    test_mus: list = field(default_factory=lambda: [0.01, 0.1])
    many_threshold: int = 100
    few_threshold: int = 20
    # model and optimizer
    arch: str = MLP1
    hidden: int = 32
    dtype: str = "float32"
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 60
    lr_milestones: list = field(default_factory=lambda: [40, 50])
    lr_decay: float = 0.1
    weight_decay: float = 0.0
    probe_epochs: int = 60
    # method
    tau: float = 1.0
    gamma: float = 2.0
    warm_start: bool = False
    gammas: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 8.0, -2.0])
    ws: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    # run
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: str = "runs/default"

    @property
    def profile(self):
        return DecayProfile(self.n_head, self.n_classes, self.mu)

    def train_settings(self, epochs=None):
        return TrainSettings(self.epochs if epochs is None else epochs, self.lr, self.momentum,
                             self.batch_size, list(self.lr_milestones), self.lr_decay,
                             self.weight_decay)

    def validate(self):
        if self.dataset not in ("synthetic", "tabular"):
            raise ConfigError(f"dataset must be 'synthetic' or 'tabular', got {self.dataset!r}")
        if self.dataset == "tabular" and not (self.train_path and self.test_path):
            raise ConfigError("tabular data needs train_path and test_path")
        if self.data_format not in ("csv", "raw-f32"):
            raise ConfigError(f"unknown data_format {self.data_format!r}")
        if self.arch not in (LINEAR, MLP1):
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if not (0 <= self.momentum < 1):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.hidden < 1:
            raise ConfigError("lr, batch_size, epochs and hidden must be positive")
        if not (self.many_threshold >= self.few_threshold >= 1):
            raise ConfigError("need many_threshold >= few_threshold >= 1")
        if any(not (0 < m <= 1) for m in self.test_mus):
            raise ConfigError("test_mus entries must lie in (0, 1]")
        if any(not (0 <= w <= 1) for w in self.ws):
            raise ConfigError("ws entries must lie in [0, 1]")
        if self.dataset == "synthetic":
            try:
                self.profile.validate()
            except ConfigError as exc:
                raise ConfigError(f"invalid decay profile: {exc}") from None
            if self.n_test_per_class < 1 or self.class_sep <= 0 or self.noise_sd <= 0:
                raise ConfigError("n_test_per_class, class_sep and noise_sd must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def hashed_dict(self):
        return {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}

    def config_hash(self):
        blob = json.dumps(self.hashed_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: coerce(k, v) for k, v in values.items()}).validate()


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_LIST_ITEM = {"test_mus": float, "lr_milestones": int, "gammas": float, "ws": float,
              "seeds": int}


def _parse_bool(key, text):
    low = str(text).strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def coerce(key, value):
    """Convert a raw (usually string) value to the field's declared type."""
    kind = _TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        if kind == "list" or kind is list:
            if isinstance(value, str):
                value = [v for v in (p.strip() for p in value.split(",")) if v]
            return [_LIST_ITEM[key](v) for v in value]
        if kind == "bool" or kind is bool:
            return value if isinstance(value, bool) else _parse_bool(key, value)
        if kind == "int" or kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float" or kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r}") from None


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path=None, overrides=None):
    values = {}
    if path:
        try:
            with open(path) as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    values.update(overrides or {})
    return ExperimentConfig.from_dict(values)


def dump_config(config):
    lines = []
    for k, v in config.to_dict().items():
        if isinstance(v, list):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
