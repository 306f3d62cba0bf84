"""scikit-learn compatible front ends.

``FemSolutionTransformer`` maps parameter rows to FE coefficient rows by
solving the PDE; ``NeuralSolutionRegressor`` learns that map with the
relative Gram-norm loss.  Both compose with ``Pipeline`` and
``clone``/``get_params``.
"""

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import fem
from .coefficients import ParametricFamily
from .dataset import Dataset, SolutionMap
from .network import init_network, realize
from .training import TrainConfig, relative_errors, train


class FemSolutionTransformer(TransformerMixin, BaseEstimator):
    """Transform parameter vectors into Galerkin solution vectors.

    Parameters
    ----------
    family : ParametricFamily
        Coefficient set the parameters index.
    mesh_n : int
        Grid points per side; outputs have ``mesh_n**2`` columns.
    """

    def __init__(self, family: ParametricFamily = None, mesh_n: int = 33):
        self.family = family
        self.mesh_n = mesh_n

    def fit(self, X=None, y=None):
        if self.family is None:
            raise ValueError("FemSolutionTransformer needs a family")
        self.solution_map_ = SolutionMap(self.family, self.mesh_n)
        self.gram_ = self.solution_map_.gram
        self.n_features_in_ = self.family.p
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_map_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.family.p:
            raise ValueError(f"expected {self.family.p} parameters per row, got {X.shape[1]}")
        return np.vstack([self.solution_map_(y) for y in X])


class NeuralSolutionRegressor(RegressorMixin, BaseEstimator):
    """Leaky-ReLU network fitted to (parameter, FE solution) pairs.

    The loss is the mean relative error in the norm induced by ``gram``
    (the Euclidean norm when ``gram`` is None).  ``score`` returns one minus
    the mean relative error, so a perfect fit scores 1 and the zero map 0.
    """

    def __init__(self, gram=None, hidden_widths=(100, 100, 100, 100, 100), alpha=0.2,
                 init_std=0.1, batch_size=256, learning_rate=2e-4, beta1=0.9, beta2=0.999,
                 epsilon=1e-8, epochs=2000, eval_every=50, random_state=0):
        self.gram = gram
        self.hidden_widths = hidden_widths
        self.alpha = alpha
        self.init_std = init_std
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.epochs = epochs
        self.eval_every = eval_every
        self.random_state = random_state

    def _gram(self, D):
        if self.gram is None:
            return sp.identity(D, format="csr")
        if self.gram.shape != (D, D):
            raise ValueError(f"gram of shape {self.gram.shape} does not match {D} outputs")
        return self.gram

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, lr=self.learning_rate, beta1=self.beta1,
            beta2=self.beta2, eps=self.epsilon, epochs=self.epochs,
            seed=self.random_state, init_std=self.init_std, eval_every=self.eval_every,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, multi_output=True, dtype=np.float64)
        y = np.atleast_2d(y.T).T
        gram = self._gram(y.shape[1])
        config = self._train_config()
        arch = (X.shape[1],) + tuple(self.hidden_widths) + (y.shape[1],)
        net = init_network(arch, self.init_std, self.random_state, self.alpha)
        data = _ArrayData(X, y)
        val = None if X_val is None else _ArrayData(
            check_array(X_val, dtype=np.float64), np.atleast_2d(np.asarray(y_val, dtype=float))
        )
        self.network_, self.history_ = train(net, data, gram, config, val)
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = y.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return realize(self.network_, X)

    def relative_errors(self, X, y) -> np.ndarray:
        check_is_fitted(self, "network_")
        X, y = check_X_y(X, y, multi_output=True, dtype=np.float64)
        return relative_errors(self.network_, X, y, self._gram(self.n_outputs_))

    def score(self, X, y, sample_weight=None):
        errs = self.relative_errors(X, y)
        return 1.0 - float(np.average(errs, weights=sample_weight))


class _ArrayData:
    """Minimal dataset view over arrays for :func:`ppde.training.train`."""

    def __init__(self, parameters, solutions):
        self.parameters = parameters
        self.solutions = solutions

    def __len__(self):
        return len(self.parameters)


def regressor_from_dataset(dataset: Dataset, **params) -> NeuralSolutionRegressor:
    """Regressor whose Gram matrix matches ``dataset``'s mesh."""
    gram = fem.gram_matrix(fem.build_mesh(dataset.mesh_n))
    return NeuralSolutionRegressor(gram=gram, **params)
