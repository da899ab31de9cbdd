"""Learning-difficulty laboratory.

Bias-variance sweeps over polynomial ridge ensembles, cross-validated
generalization-error difficulty scores (GELD), empirical checks of
difficulty-weighting propositions, and a small synthetic benchmark harness.
"""

__version__ = "0.1.0"
