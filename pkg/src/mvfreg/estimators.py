"""scikit-learn style estimators wrapping the functional regression core.

``X`` is a 3-d array of curve values with shape (n_samples, n_curves,
n_times) ((n_samples, n_times) is accepted for a single predictor) and ``y``
is (n_samples, n_targets). Both estimators expose ``get_params`` /
``set_params`` and compose with the usual model-selection tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .basis import make_basis
from .dataset import CurveDataset
from .model import fit_model
from .selection import cv_large_p, cv_small_p
from .solvers import PenaltyConfig


def _validate_Xy(X, y, grid):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ValueError("X must have shape (n_samples, n_curves, n_times)")
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y disagree on the number of samples")
    if grid is None:
        grid = np.linspace(0.0, 1.0, X.shape[2])
    else:
        grid = np.asarray(grid, dtype=float)
    return CurveDataset(grid=grid, X=X, Y=y)


class MultiResponseFunctionalRegression(BaseEstimator, RegressorMixin):
    """Functional regression of a vector response on predictor curves.

    Fits response-informed components by a penalized generalized
    eigenproblem and regresses the response on the component scores.

    Parameters
    ----------
    n_components : int or None
        Components to keep; None keeps every extractable one (at most the
        response dimension).
    penalty : {'smooth', 'smooth-sparse'}
        'smooth' shrinks toward smooth component functions; 'smooth-sparse'
        additionally zeroes out entire predictor curves.
    tau : float
        Overall penalty strength.
    lam : float
        Mix of the curve-selection part, in (0, 1]; smooth-sparse only.
    eta : float
        Roughness weight inside the block norm.
    basis_dim, degree : int
        B-spline system used to represent component functions.
    grid : array-like or None
        Observation times in [0, 1]; defaults to an equally spaced grid.

    Attributes
    ----------
    model_ : FittedModel
        Full fitted model (components, loadings, intercept).
    n_components_ : int
        Number of components actually fitted.
    """

    def __init__(
        self,
        n_components=None,
        penalty="smooth",
        tau=1e-6,
        lam=0.2,
        eta=1e-3,
        basis_dim=30,
        degree=3,
        grid=None,
    ):
        self.n_components = n_components
        self.penalty = penalty
        self.tau = tau
        self.lam = lam
        self.eta = eta
        self.basis_dim = basis_dim
        self.degree = degree
        self.grid = grid

    def _config(self) -> PenaltyConfig:
        lam = self.lam if self.penalty == "smooth-sparse" else 0.0
        return PenaltyConfig(mode=self.penalty, tau=self.tau, lam=lam, eta=self.eta)

    def fit(self, X, y):
        ds = _validate_Xy(X, y, self.grid)
        spec = make_basis(self.basis_dim, self.degree)
        self.model_ = fit_model(ds, spec, self._config(), k=self.n_components)
        self.n_components_ = self.model_.k
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[:, None, :]
        return self.model_.predict(X)

    def transform(self, X):
        """Component scores of new curves, shape (n_samples, n_components_)."""
        check_is_fitted(self, "model_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[:, None, :]
        return self.model_.transform(X)

    def selected_predictors(self):
        check_is_fitted(self, "model_")
        return self.model_.selected_predictors()


class MultiResponseFunctionalRegressionCV(BaseEstimator, RegressorMixin):
    """Cross-validated variant selecting penalty weights and component count.

    ``mode='auto'`` uses the smooth penalty for up to 5 predictor curves and
    the smooth-sparse penalty above that, matching where each grid is
    worthwhile in practice.
    """

    def __init__(
        self,
        mode="auto",
        basis_dim=30,
        degree=3,
        grid=None,
        n_folds=5,
        random_state=0,
    ):
        self.mode = mode
        self.basis_dim = basis_dim
        self.degree = degree
        self.grid = grid
        self.n_folds = n_folds
        self.random_state = random_state

    def fit(self, X, y):
        ds = _validate_Xy(X, y, self.grid)
        spec = make_basis(self.basis_dim, self.degree)
        mode = self.mode
        if mode == "auto":
            mode = "smooth" if ds.p <= 5 else "smooth-sparse"
        if mode == "smooth":
            cv = cv_small_p(ds, spec, self.random_state, n_folds=self.n_folds)
        elif mode == "smooth-sparse":
            cv = cv_large_p(ds, spec, self.random_state, n_folds=self.n_folds)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        tau, lam, eta, k = cv.best
        config = PenaltyConfig(mode=mode, tau=tau, lam=lam, eta=eta)
        self.cv_result_ = cv
        full = fit_model(ds, spec, config, k=None)
        if k < full.k:
            full = fit_model(ds, spec, config, k=k, components=full.components)
        self.model_ = full
        self.n_components_ = self.model_.k
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[:, None, :]
        return self.model_.predict(X)

    def selected_predictors(self):
        check_is_fitted(self, "model_")
        return self.model_.selected_predictors()
