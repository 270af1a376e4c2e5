"""
Post-hoc logit adjustment
=========================

Subtracting the log class prior from a long-tailed model's logits moves
probability mass toward rare classes.
"""

import numpy as np

from xermlab.balanced import adjust_logits, prior_from_counts
from xermlab.model import softmax

prior = prior_from_counts([900, 100])
z = np.array([2.0, 1.0])
print("logits          ", z)
print("adjusted logits ", adjust_logits(z, prior).round(3))
print("argmax          ", z.argmax(), "->", adjust_logits(z, prior).argmax())

# tau interpolates between the raw and fully adjusted predictions
prior = prior_from_counts([500, 200, 80, 30, 5])
z = np.random.default_rng(1).normal(size=5)
for tau in (0.0, 0.5, 1.0, 1.5):
    p = softmax(adjust_logits(z, prior, tau))
    print(f"tau={tau:3.1f}  tail mass {p[-1]:.3f}  head mass {p[0]:.3f}")
