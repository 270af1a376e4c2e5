"""
Long-tailed splits and test suites
==================================

Class sizes decay exponentially from the head class.  The same rule
downsamples a balanced test set into long-tailed test suites.
"""

from xermlab.datasets import (DecayProfile, decay_counts, partition_subsets,
                              subsample_longtail, synth_gaussian_longtail)

print(decay_counts(DecayProfile(50, 3, 0.25)))
profile = DecayProfile.from_ratio(500, 10, 100)
print("train counts", decay_counts(profile))

train, test = synth_gaussian_longtail(10, 8, profile, class_sep=2.0, noise_sd=1.0, seed=0)
print("imbalance ratio", train.imbalance_ratio)

part = partition_subsets(train.class_counts, 100, 20)
for subset in ("many", "medium", "few"):
    print(f"{subset:6s} classes {part.classes(subset)}")

# test suites follow the training order: largest train class keeps the most rows
for mu in (1.0, 0.1, 0.01):
    suite = subsample_longtail(test, DecayProfile(100, 10, mu), seed=0,
                               train_counts=train.class_counts)
    print(f"mu={mu:<5g} counts {suite.class_counts.tolist()}")
