"""
Gamma sweep, constant-weight ablation and feature probe
=======================================================

How sensitive is the cross-domain model to the weight exponent, how does a
fixed mixing weight compare, and do the learned features differ once the
classifier head is retrained on balanced data?
"""

import numpy as np

from xermlab.harness.config import ExperimentConfig
from xermlab.harness.pipeline import (BALANCED, ablate_constant_w, feature_probe, load_data,
                                      sweep_gamma, train_xe, train_xerm)

config = ExperimentConfig(seeds=[0, 1])

for key, rows in (("gamma", sweep_gamma(config)), ("w", ablate_constant_w(config))):
    print(f"{key:>5s}  balanced acc (mean over seeds)")
    for v in dict.fromkeys(r[key] for r in rows):
        acc = np.mean([r["acc_balanced"] for r in rows if r[key] == v])
        print(f"{v:5g}  {acc:.4f}")

for seed in config.seeds:
    data = load_data(config, seed)
    xe = train_xe(config, seed, data)
    xerm, _, _ = train_xerm(config, seed, data, xe)
    args = (data.probe_pool, config, data.suites[BALANCED], data.partition, seed)
    print(f"seed {seed}: probe XE {feature_probe(xe, *args).accuracy:.4f}  "
          f"xERM {feature_probe(xerm, *args).accuracy:.4f}")
