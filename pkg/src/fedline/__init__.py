"""Federated failure prediction on production-line data.

Horizontal federated SVM and vertical federated random forest with their
centralized baselines, plus the MSA-style evaluation pipeline (metrics,
prediction-error Markov models, heterogeneity clustering).
"""

from . import cart, cli, dataio, experiment, fedrf, fedsvm, markov, metrics, report, svm  # noqa: F401

__version__ = "0.1.0"
