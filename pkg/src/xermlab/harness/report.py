"""Aggregate per-seed manifests into mean/std tables and plot-ready CSV series."""

from pathlib import Path

import numpy as np

from ..datasets import SUBSETS
from ..errors import ConfigMismatch, MissingManifest
from .pipeline import RunManifest, atomic_write, write_table


def load_manifests(paths):
    manifests = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "manifest.json"
        if not p.is_file():
            raise MissingManifest(f"no manifest at {p}")
        manifests.append(RunManifest.from_json(p.read_text()))
    if not manifests:
        raise MissingManifest("no manifests given")
    hashes = {m.config_hash for m in manifests}
    if len(hashes) > 1:
        raise ConfigMismatch(f"manifests come from {len(hashes)} different configs")
    return manifests


def _cells(report):
    yield "accuracy", report["accuracy"]
    yield "l1_to_truth", report["l1_to_truth"]
    for subset in SUBSETS:
        for metric, value in report["subsets"].get(subset, {}).items():
            yield f"{metric}_{subset}", value


def report(paths, out_dir=None):
    """Mean and standard deviation across seeds for every (model, suite, metric).

    Returns the summary rows; with ``out_dir`` also writes ``summary.csv`` and
    ``prediction_hist.csv`` (mean predicted-class frequency per model and suite).
    """
    manifests = load_manifests(paths)
    values, hists = {}, {}
    for m in manifests:
        for model, by_suite in m.evaluations.items():
            for suite, rep in by_suite.items():
                for metric, v in _cells(rep):
                    values.setdefault((model, suite, metric), []).append(v)
                h = np.asarray(rep["prediction_histogram"], dtype=float)
                hists.setdefault((model, suite), []).append(h / h.sum())
    rows = [{"model": model, "suite": suite, "metric": metric,
             "mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
            for (model, suite, metric), v in values.items()]
    if out_dir is not None:
        out = Path(out_dir)
        write_table(out / "summary.csv", rows)
        hist_rows = []
        for (model, suite), hs in hists.items():
            mean = np.mean(hs, axis=0)
            truth = np.asarray(manifests[0].suites[suite], dtype=float)
            truth /= truth.sum()
            for c, (p, t) in enumerate(zip(mean, truth)):
                hist_rows.append({"model": model, "suite": suite, "class": c,
                                  "pred_freq": float(p), "true_freq": float(t)})
        write_table(out / "prediction_hist.csv", hist_rows)
        atomic_write(out / "summary.txt", format_summary(rows))
    return rows


def format_summary(rows):
    lines = [f"{'model':6s} {'suite':12s} {'metric':18s} mean ± std (n)"]
    for r in rows:
        lines.append(f"{r['model']:6s} {r['suite']:12s} {r['metric']:18s} "
                     f"{r['mean']:.4f} ± {r['std']:.4f} ({r['n']})")
    return "\n".join(lines) + "\n"
