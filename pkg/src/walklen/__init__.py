"""Sentence-length modeling via random-walk return times.

Submodules:
    histogram   ingestion and summary statistics of length data
    walk        exact return-time distributions, gradients, sampling
    divergence  generalized KL divergence and inherent corpus noise
    fit         simplex-constrained gradient-descent fitting
    evidence    tolerance-aware Bayesian model comparison
    mdl         minimum-description-length comparison via quantization
    cli         batch command-line frontend
"""

__version__ = "0.1.0"
