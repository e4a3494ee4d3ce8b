"""Curve datasets and the discretized quadratic forms driving the eigensolvers.

The sample covariance and cross-covariance kernels are never materialized on
the time grid. Every quadratic form routes through the centered score matrix
``Z`` (n x p*D) and the centered response ``Yc``:

* a' (Z'Z/n) a        discretizes the predictor-covariance form,
* a' (Z'Yc Yc'Z/n^2) a discretizes the cross-covariance form,

which keeps memory at O(n*p*D) and makes p = 1000 tractable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .basis import BasisSpec, eval_basis, trapezoid_weights


@dataclass(frozen=True)
class CurveDataset:
    """n samples of p predictor curves on a shared grid plus an n x m response.

    Attributes
    ----------
    grid : ndarray of shape (T,)
        Strictly increasing observation times in [0, 1].
    X : ndarray of shape (n, p, T)
        Predictor curve values.
    Y : ndarray of shape (n, m)
        Response matrix.
    truth : ndarray of shape (n, m), optional
        Noise-free regression-function values (simulations only).
    support : tuple of int, optional
        Indices of truly active predictors (simulations only).
    meta : dict
        Generator bookkeeping such as the signal scale and noise level.
    """

    grid: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    truth: Optional[np.ndarray] = None
    support: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 2:  # single predictor shorthand
            X = X[:, None, :]
        if X.ndim != 3:
            raise ValueError("X must have shape (n, p, T)")
        if Y.ndim == 1:
            Y = Y[:, None]
        n, p, T = X.shape
        if n < 2 or T < 2 or p < 1:
            raise ValueError("need n >= 2 samples, p >= 1 curves, T >= 2 grid points")
        if Y.shape[0] != n or Y.shape[1] < 1:
            raise ValueError("Y must have one row per sample and m >= 1 columns")
        if grid.shape != (T,):
            raise ValueError("grid length must match the curve axis of X")
        if np.any(np.diff(grid) <= 0) or grid[0] < 0.0 or grid[-1] > 1.0:
            raise ValueError("grid must be strictly increasing within [0, 1]")
        for name, arr in (("X", X), ("Y", Y), ("grid", grid)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=float)
            if truth.ndim == 1:
                truth = truth[:, None]
            if truth.shape != Y.shape:
                raise ValueError("truth must match the shape of Y")
            object.__setattr__(self, "truth", truth)
        if self.support is not None:
            object.__setattr__(self, "support", tuple(int(j) for j in self.support))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def n_times(self) -> int:
        return self.grid.size

    def subset(self, idx) -> "CurveDataset":
        """Dataset restricted to the given sample indices (copies views)."""
        idx = np.asarray(idx)
        return replace(
            self,
            X=self.X[idx],
            Y=self.Y[idx],
            truth=None if self.truth is None else self.truth[idx],
        )


@dataclass(frozen=True)
class DesignMatrices:
    """Centered score matrix and companions for one dataset/basis/eta triple.

    Attributes
    ----------
    Z : ndarray of shape (n, p*D)
        Z[l, (j-1)*D + d] = int {X_lj(t) - xbar_j(t)} B_d(t) dt.
    Yc : ndarray of shape (n, m)
        Centered response.
    xbar : ndarray of shape (p, T)
        Mean predictor curves.
    ybar : ndarray of shape (m,)
        Mean response (the fitted intercept).
    gn : ndarray of shape (D, D)
        G + eta*H, the per-block metric shared by all p blocks.
    """

    Z: np.ndarray
    Yc: np.ndarray
    xbar: np.ndarray
    ybar: np.ndarray
    gn: np.ndarray
    basis: BasisSpec
    eta: float
    grid: np.ndarray

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        return self.xbar.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def m(self) -> int:
        return self.Yc.shape[1]

    def with_eta(self, eta: float) -> "DesignMatrices":
        """Cheap copy with a different roughness weight (shares Z and Yc)."""
        if eta == self.eta:
            return self
        return replace(self, gn=self.basis.penalty_matrix(eta), eta=float(eta))

    def blocks(self, a: np.ndarray) -> np.ndarray:
        """View of a stacked coefficient vector as (p, D) blocks."""
        return np.asarray(a).reshape(self.p, self.dim)

    def group_norms(self, a: np.ndarray) -> np.ndarray:
        """Per-predictor eta-norms ||a_j||_eta of a stacked coefficient vector."""
        blocks = self.blocks(a)
        sq = np.einsum("jd,de,je->j", blocks, self.gn, blocks)
        return np.sqrt(np.maximum(sq, 0.0))

    def penalty_value(self, a: np.ndarray, tau: float, lam: float) -> float:
        """tau*[(1-lam)*sum_j ||a_j||_eta^2 + lam*(sum_j ||a_j||_eta)^2]."""
        norms = self.group_norms(a)
        return tau * ((1.0 - lam) * float(norms @ norms) + lam * float(norms.sum()) ** 2)


def group_norm(a_j: np.ndarray, gn: np.ndarray) -> float:
    """sqrt(a_j' Gn a_j) for a single block in the eta-metric."""
    a_j = np.asarray(a_j, dtype=float)
    if a_j.shape != (gn.shape[0],):
        raise ValueError("block length does not match the metric dimension")
    return float(np.sqrt(max(a_j @ gn @ a_j, 0.0)))


def build_design(ds: CurveDataset, spec: BasisSpec, eta: float = 0.0) -> DesignMatrices:
    """Center the dataset and assemble the score matrix Z and companions.

    For any stacked coefficient vector ``a``, ``a @ (Z.T @ Z / n) @ a`` equals
    the trapezoid discretization of the predictor-covariance quadratic form
    and ``a @ (Z.T @ Yc @ Yc.T @ Z / n**2) @ a`` the cross-covariance form.
    """
    if eta < 0 or not np.isfinite(eta):
        raise ValueError("eta must be finite and nonnegative")
    xbar = ds.X.mean(axis=0)
    ybar = ds.Y.mean(axis=0)
    Z = centered_scores(ds.X, xbar, spec, ds.grid)
    return DesignMatrices(
        Z=Z,
        Yc=ds.Y - ybar,
        xbar=xbar,
        ybar=ybar,
        gn=spec.penalty_matrix(eta),
        basis=spec,
        eta=float(eta),
        grid=ds.grid,
    )


def centered_scores(X, xbar, spec: BasisSpec, grid) -> np.ndarray:
    """Score matrix of curves centered at ``xbar``, flattened to (n, p*D)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    n, p, T = X.shape
    if xbar.shape != (p, T):
        raise ValueError("xbar must have shape (p, T)")
    w = trapezoid_weights(grid)
    design = eval_basis(spec, grid)  # (T, D)
    Xc = (X - xbar[None, :, :]) * w
    return (Xc.reshape(n * p, T) @ design).reshape(n, p * spec.dim)
