"""Cross-domain empirical risk minimization for long-tailed classification."""

__version__ = "0.1.0"
