"""Learning the discretized parameter-to-solution map of parametric diffusion problems."""

from .coefficients import (
    ParameterBox,
    ParametricFamily,
    Variant,
    chessboard,
    clipped_poly,
    cookies_fixed,
    cookies_variable,
    trig_poly,
)
from .dataset import Dataset, SolutionMap
from .estimator import FemSolutionTransformer, NeuralSolutionRegressor
from .fem import Mesh, build_mesh, gram_matrix, gram_norm, relative_error
from .network import Network, init_network, realize
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FemSolutionTransformer", "Mesh", "Network", "NeuralSolutionRegressor",
    "ParameterBox", "ParametricFamily", "SolutionMap", "TrainConfig", "Variant",
    "build_mesh", "chessboard", "clipped_poly", "cookies_fixed", "cookies_variable",
    "gram_matrix", "gram_norm", "init_network", "realize", "relative_error", "train",
    "trig_poly",
]
