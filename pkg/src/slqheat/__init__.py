"""Closed-loop and open-loop solvers for stochastic LQ control of the 1D heat equation."""

from .fem import FemFunction, FemSpace, Mesh1D, assemble_space, norm_gamma, project_l2
from .problem import ProblemSpec
from .riccati import solve_eta, solve_riccati, solve_riccati_v1, solve_riccati_v2
from .stochastics import BrownianPath, SeedSpec, TimeGrid, coarsen, sample_path

__all__ = [
    "BrownianPath",
    "FemFunction",
    "FemSpace",
    "Mesh1D",
    "ProblemSpec",
    "SeedSpec",
    "TimeGrid",
    "assemble_space",
    "coarsen",
    "norm_gamma",
    "project_l2",
    "sample_path",
    "solve_eta",
    "solve_riccati",
    "solve_riccati_v1",
    "solve_riccati_v2",
]
