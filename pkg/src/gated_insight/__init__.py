"""Insight-like strategy switches in regularised gated networks.

Modules: ``model`` (shallow and hidden-layer networks), ``task`` (the
strategy switch curriculum), ``calibration`` (motion input means),
``analysis`` (binning, fits, classification, statistics), ``experiments``
(cohorts, sweeps, transplant, variant comparison), ``io`` and ``cli``.
"""

__version__ = "0.1.0"
