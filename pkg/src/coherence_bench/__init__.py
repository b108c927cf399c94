"""coherence-bench: diagnostics for rank-calibrated predictive inference.

A numpy/scipy laboratory for the constructive objects of rank-calibrated
prediction (conformal sets and p-values, equal-gap predictive kernels with
explicit within-cell completions, conjugate Bayesian predictives) together
with experiments that measure where calibration-style validity and countably
additive predictive semantics come apart: design-shift sensitivity of
calibrated sets, rank-uniformity, testing-risk gaps under rank reduction, and
the precision/transport gaps of proxy-corrected estimators.
"""

__version__ = "0.1.0"

from . import conformal, deficiency, diagnostics, dist, extensionality, ppi, rankgap

__all__ = [
    "__version__",
    "conformal",
    "deficiency",
    "diagnostics",
    "dist",
    "extensionality",
    "ppi",
    "rankgap",
]
