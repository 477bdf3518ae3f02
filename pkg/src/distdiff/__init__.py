"""Distance-difference data on discretised Riemannian surfaces.

Simulation (:mod:`distdiff.eikonal`, :mod:`distdiff.ddf`, :mod:`distdiff.wave`),
reconstruction (:mod:`distdiff.reconstruct`), checks
(:mod:`distdiff.invariants`, :mod:`distdiff.acceptance`) and the graph
non-uniqueness example (:mod:`distdiff.counterexample`).
"""

from .config import Tolerances
from .ddf import DDFDataset, FSampleSet, generate_dataset, load_dataset, save_dataset
from .errors import DistDiffError
from .manifold import ManifoldModel, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "DDFDataset",
    "DistDiffError",
    "FSampleSet",
    "ManifoldModel",
    "Tolerances",
    "generate_dataset",
    "load_dataset",
    "load_model",
    "save_dataset",
    "save_model",
]
