"""permkron: structured-sparse mixing layers as permuted block-diagonal maps.

The core objects are PK layers, wide sparse linear maps computed through a
small matrix product and two index permutations, the mixer models built from
them, the weight-budget calculus that sizes those models, and a desk-scale
experiment harness (training, sweeps, random-matrix spectra).
"""

from . import autodiff, datasets, dense, equiv, models, monarch, perms, pk, sizing, spectrum, training

__all__ = [
    "autodiff",
    "datasets",
    "dense",
    "equiv",
    "models",
    "monarch",
    "perms",
    "pk",
    "sizing",
    "spectrum",
    "training",
]

__version__ = "0.1.0"
