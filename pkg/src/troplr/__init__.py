"""Tropical logistic regression over the space of phylogenetic trees."""

__version__ = "0.1.0"

from .core import TorusPoint, normalize, trop_distance
from .fermat_weber import FWConfig, fw_solve
from .regression import fit_one_species, fit_two_species, predict_proba
from .sampling import TropicalLaplace, sample_points
from .treeio import Dataset, PhyloTree, parse_newick

__all__ = [
    "TorusPoint",
    "normalize",
    "trop_distance",
    "FWConfig",
    "fw_solve",
    "fit_one_species",
    "fit_two_species",
    "predict_proba",
    "TropicalLaplace",
    "sample_points",
    "Dataset",
    "PhyloTree",
    "parse_newick",
]
