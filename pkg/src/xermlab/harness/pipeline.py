"""Train the imbalanced model, derive weights, train the cross-domain model, evaluate."""

import hashlib
import json
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..balanced import adjust_logits, estimate_prior
from ..datasets import (DecayProfile, load_tabular, partition_subsets, standardize,
                        subsample_longtail, synth_balanced_pool, synth_gaussian_longtail)
from ..errors import NoFeatureLayer, StageError, XermError
from ..metrics import MetricsReport, evaluate
from ..model import MLP1, forward_logits, init_params, save_checkpoint
from ..xerm import mixed_target, precompute_sample_weights
from .training import fit, fresh_params, one_hot

BALANCED = "balanced"
_PROBE_STREAM = 13
# manifest keys that legitimately differ between identical runs
VOLATILE_KEYS = ("created", "wall_clock_s")


def suite_name(mu):
    return f"lt_mu{mu:g}"


@dataclass
class DataBundle:
    train: object
    suites: dict                       # suite name -> LongTailDataset
    partition: object
    prior: object
    probe_pool: object = None


def load_data(config, seed):
    """Training split plus the balanced and long-tailed test suites for one seed."""
    if config.dataset == "synthetic":
        train, test = synth_gaussian_longtail(
            config.n_classes, config.dims, config.profile, config.class_sep,
            config.noise_sd, seed, config.n_test_per_class)
        pool = synth_balanced_pool(config.n_classes, config.dims, config.n_probe_per_class,
                                   config.class_sep, config.noise_sd, seed)
    else:
        train = load_tabular(config.train_path, config.data_format, config.csv_header)
        test = load_tabular(config.test_path, config.data_format, config.csv_header)
        pool = (load_tabular(config.probe_path, config.data_format, config.csv_header)
                if config.probe_path else None)
    if config.standardize:
        if pool is None:
            train, test = standardize(train, test)
        else:
            train, test, pool = standardize(train, test, pool)
    dtype = np.dtype(config.dtype)
    for d in (train, test, pool):
        if d is not None:
            d.features = d.features.astype(dtype)
    per_class = int(test.class_counts.min())
    suites = {BALANCED: test}
    for k, mu in enumerate(config.test_mus):
        profile = DecayProfile(per_class, test.n_classes, mu)
        # each suite draws from the same balanced pool with its own stream
        suites[suite_name(mu)] = subsample_longtail(
            test, profile, [seed, 100 + k], train.class_counts, name=suite_name(mu))
    partition = partition_subsets(train.class_counts, config.many_threshold,
                                  config.few_threshold)
    return DataBundle(train, suites, partition, estimate_prior(train), pool)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (XermError, OSError) as exc:
        raise StageError(name, exc) from exc


def _init(config, seed, train):
    return fresh_params(config.arch, train.n_dims, train.n_classes, config.hidden, seed,
                        np.dtype(config.dtype))


def train_on_targets(config, seed, train, targets, init=None):
    """Fit a model on per-sample target distributions; returns ``(params, curve)``."""
    params = _init(config, seed, train) if init is None else init.copy()
    curve = fit(params, train.features, targets, config.train_settings(), seed)
    return params, curve


def train_xe(config, seed, data=None, return_curve=False):
    """Imbalanced model: plain cross-entropy on the long-tailed split."""
    data = data or load_data(config, seed)
    targets = one_hot(data.train.labels, data.train.n_classes)
    params, curve = train_on_targets(config, seed, data.train, targets)
    return (params, curve) if return_curve else params


def xerm_targets(config, data, xe_params, gamma=None):
    gamma = config.gamma if gamma is None else gamma
    weights, y_hat = precompute_sample_weights(data.train, xe_params, data.prior,
                                               config.tau, gamma)
    return weights, mixed_target(data.train.labels, y_hat, weights.w_f, weights.w_cf)


def train_xerm(config, seed, data, xe_params, gamma=None):
    """Returns ``(params, curve, SampleWeights)``."""
    weights, targets = xerm_targets(config, data, xe_params, gamma)
    init = xe_params if config.warm_start else None
    params, curve = train_on_targets(config, seed, data.train, targets, init)
    return params, curve, weights


def kd_targets(config, data, xe_params, w):
    _, y_hat = precompute_sample_weights(data.train, xe_params, data.prior, config.tau, 0.0)
    n = data.train.n_samples
    return mixed_target(data.train.labels, y_hat, np.full(n, 1.0 - w), np.full(n, w))


def train_kd(config, seed, data, xe_params, w):
    init = xe_params if config.warm_start else None
    return train_on_targets(config, seed, data.train, kd_targets(config, data, xe_params, w), init)


def predictions(params, x, prior=None, tau=0.0):
    z = forward_logits(params, x)
    if prior is not None and tau:
        z = adjust_logits(z, prior, tau)
    return np.argmax(z, axis=-1)


def evaluate_model(params, data, prior=None, tau=0.0):
    """One MetricsReport per test suite; ``prior``/``tau`` apply logit adjustment."""
    return {name: evaluate(predictions(params, suite.features, prior, tau), suite.labels,
                           suite.n_classes, data.partition)
            for name, suite in data.suites.items()}


def feature_probe(backbone, balanced_train, config, balanced_test, partition, seed=0):
    """Freeze the hidden layer, retrain a fresh head on balanced data, evaluate."""
    if backbone.arch != MLP1:
        raise NoFeatureLayer("feature probe needs an mlp1 backbone")
    head = init_params(MLP1, backbone.dims, backbone.n_classes, backbone.hidden,
                       seed=[seed, _PROBE_STREAM], dtype=backbone.dtype)
    params = backbone.copy()
    params.W2[...] = head.W2
    params.b2[...] = head.b2
    x = balanced_train.features.astype(params.dtype)
    fit(params, x, one_hot(balanced_train.labels, params.n_classes),
        config.train_settings(config.probe_epochs), seed, trainable={"W2", "b2"})
    preds = predictions(params, balanced_test.features)
    return evaluate(preds, balanced_test.labels, balanced_test.n_classes, partition)


# --- persistence ---------------------------------------------------------

def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_file(path, writer):
    """Run ``writer(tmp_path)`` and move the result into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    writer(tmp)
    os.replace(tmp, path)


def write_curve(path, curve):
    atomic_write(path, "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(curve)))


def sha256(blob):
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    seed: int
    checkpoints: dict
    artifacts: dict
    evaluations: dict            # model -> suite -> report dict
    suites: dict                 # suite -> realized class counts
    wall_clock_s: float = 0.0
    created: str = ""
    versions: dict = field(default_factory=dict)

    def to_json(self):
        body = {k: getattr(self, k) for k in (
            "config_hash", "seed", "config", "checkpoints", "artifacts", "suites",
            "evaluations", "versions", "wall_clock_s", "created")}
        return json.dumps(body, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def report(self, model, suite):
        return MetricsReport.from_dict(self.evaluations[model][suite])


def _versions():
    return {"xermlab": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def run_xerm_pipeline(config, seed, out_dir=None):
    """Full run for one seed; writes artifacts and ``manifest.json`` under ``out_dir``."""
    start = time.perf_counter()
    out = Path(out_dir or Path(config.out) / f"seed_{seed}")
    data = _stage("load-data", load_data, config, seed)
    xe, xe_curve = _stage("train-xe", train_xe, config, seed, data, return_curve=True)
    xerm, xerm_curve, weights = _stage("train-xerm", train_xerm, config, seed, data, xe)
    evaluations = _stage("evaluate", lambda: {
        "XE": evaluate_model(xe, data),
        "PC": evaluate_model(xe, data, data.prior, config.tau),
        "xERM": evaluate_model(xerm, data),
    })

    xe_blob, xerm_blob = save_checkpoint(xe), save_checkpoint(xerm)
    atomic_write(out / "xe.ckpt", xe_blob)
    atomic_write(out / "xerm.ckpt", xerm_blob)
    write_curve(out / "loss_xe.csv", xe_curve)
    write_curve(out / "loss_xerm.csv", xerm_curve)
    atomic_file(out / "weights.csv", weights.to_csv)
    artifacts = {"loss_xe": "loss_xe.csv", "loss_xerm": "loss_xerm.csv",
                 "weights": "weights.csv"}
    for model, by_suite in evaluations.items():
        for suite, rep in by_suite.items():
            name = f"per_class_{model}_{suite}.csv"
            atomic_file(out / name, rep.per_class_csv)
            artifacts[f"per_class_{model}_{suite}"] = name

    manifest = RunManifest(
        config_hash=config.config_hash(),
        config=config.hashed_dict(),
        seed=seed,
        checkpoints={"xe": {"path": "xe.ckpt", "sha256": sha256(xe_blob)},
                     "xerm": {"path": "xerm.ckpt", "sha256": sha256(xerm_blob)}},
        artifacts=artifacts,
        evaluations={m: {s: r.to_dict() for s, r in by.items()} for m, by in evaluations.items()},
        suites={s: [int(c) for c in d.class_counts] for s, d in data.suites.items()},
        wall_clock_s=round(time.perf_counter() - start, 3),
        created=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        versions=_versions(),
    )
    atomic_write(out / "manifest.json", manifest.to_json())
    return manifest


def _sweep(config, values, make_targets, key, seeds=None):
    rows = []
    for seed in seeds or config.seeds:
        data = load_data(config, seed)
        xe = train_xe(config, seed, data)
        xe_sha = sha256(save_checkpoint(xe))
        for v in values:
            params, _ = train_on_targets(config, seed, data.train,
                                         make_targets(config, data, xe, v),
                                         xe if config.warm_start else None)
            reports = evaluate_model(params, data)
            row = {"seed": seed, key: v, "xe_sha256": xe_sha}
            for suite, rep in reports.items():
                row[f"acc_{suite}"] = rep.accuracy
                row[f"l1_{suite}"] = rep.l1_to_truth
            rows.append(row)
    return rows


def sweep_gamma(config, gammas=None, seeds=None):
    """One cross-domain run per gamma, sharing the imbalanced model within each seed."""
    gammas = config.gammas if gammas is None else gammas
    return _sweep(config, gammas, lambda c, d, xe, g: xerm_targets(c, d, xe, g)[1],
                  "gamma", seeds)


def ablate_constant_w(config, ws=None, seeds=None):
    """Constant-weight distillation runs, sharing the imbalanced model within each seed."""
    ws = config.ws if ws is None else ws
    return _sweep(config, ws, kd_targets, "w", seeds)


def write_table(path, rows):
    if not rows:
        atomic_write(path, "")
        return
    keys = list(rows[0])
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                              for k in keys))
    atomic_write(path, "\n".join(lines) + "\n")
