"""Calculus, geometry and topology on point clouds through a diffusion Markov chain."""

from .carre_du_champ import GammaTensors, KForm, Tensor02, gamma_blocks, visualize_form, wedge
from .function_space import FunctionBasis, eigenbasis
from .kernel import MarkovModel, PointCloud, markov_from_points
from .operators import Calculus, calculus
from .weak_solver import GramOperator

__all__ = [
    "Calculus",
    "FunctionBasis",
    "GammaTensors",
    "GramOperator",
    "KForm",
    "MarkovModel",
    "PointCloud",
    "Tensor02",
    "calculus",
    "eigenbasis",
    "gamma_blocks",
    "markov_from_points",
    "visualize_form",
    "wedge",
]
