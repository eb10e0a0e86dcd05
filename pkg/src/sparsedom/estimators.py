"""Thin scikit-learn style wrappers over the functional modules.

Rows of ``X`` are grid functions (one function per row, one column per
cloud point), so the transformers compose with sklearn pipelines.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import decomposition, dyadic, weights
from .errors import ContractViolation


def _rows(X, size):
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != size:
        raise ContractViolation(f"expected rows of length {size}, got shape {X.shape}")
    return X


class DyadicGridEstimator(BaseEstimator):
    """Builds and verifies a dyadic grid; ``fit`` takes a DiscreteSHT."""

    def __init__(self, delta=0.25, seed=0, mode="test", verify=True):
        self.delta = delta
        self.seed = seed
        self.mode = mode
        self.verify = verify

    def fit(self, S, y=None):
        self.grid_ = dyadic.build_grid(S, self.delta, seed=self.seed, mode=self.mode)
        self.report_ = dyadic.verify_grid(self.grid_) if self.verify else None
        self.C_ = self.grid_.C
        self.eps_ = self.grid_.eps
        return self


class MaximalFunction(TransformerMixin, BaseEstimator):
    """Row-wise dyadic maximal function M^D_p."""

    def __init__(self, grid=None, p=1.0):
        self.grid = grid
        self.p = p

    def fit(self, X=None, y=None):
        if self.grid is None:
            raise ContractViolation("MaximalFunction needs a grid")
        self.n_features_in_ = self.grid.S.size
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _rows(X, self.n_features_in_)
        return np.stack([decomposition.dyadic_maximal(self.grid, f, self.p) for f in X])


class CZTransformer(TransformerMixin, BaseEstimator):
    """Row-wise Calderón–Zygmund split; ``transform`` returns the good parts.

    The last split results are kept in ``results_`` for inspection.
    """

    def __init__(self, grid=None, lam=1.0):
        self.grid = grid
        self.lam = lam

    def fit(self, X=None, y=None):
        if self.grid is None:
            raise ContractViolation("CZTransformer needs a grid")
        self.n_features_in_ = self.grid.S.size
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _rows(X, self.n_features_in_)
        self.results_ = [decomposition.cz_decompose(self.grid, f, self.lam) for f in X]
        return np.stack([r.g for r in self.results_])


class MuckenhouptEstimator(BaseEstimator):
    """Fits [w]_{A_p} and [w]_{RH_q} of a weight over a grid."""

    def __init__(self, grid=None, p=2.0, q=2.0):
        self.grid = grid
        self.p = p
        self.q = q

    def fit(self, w, y=None):
        if self.grid is None:
            raise ContractViolation("MuckenhouptEstimator needs a grid")
        w = w if isinstance(w, weights.Weight) else weights.Weight(w)
        self.a_p_ = weights.a_p_constant(w, self.p, self.grid)
        self.rh_ = weights.rh_constant(w, self.q, self.grid)
        return self
