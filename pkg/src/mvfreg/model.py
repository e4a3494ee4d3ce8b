"""Two-step fitted model: components, least-squares refit, prediction.

The refit is closed-form because component scores are orthogonal with unit
sample variance: the intercept is the response mean and each loading vector
is w_k = (1/n) sum_l T_lk Y_l. Prediction integrates new centered curves
against the component functions and combines scores with the loadings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, eval_basis, make_basis
from .dataset import CurveDataset, DesignMatrices, build_design, centered_scores
from .solvers import (
    BLOCK_ZERO_TOL,
    ComponentSet,
    PenaltyConfig,
    fit_components_smooth,
    fit_components_sparse,
)

MODEL_FORMAT = "mvfreg-model"
MODEL_FORMAT_VERSION = 1


@dataclass
class FittedModel:
    """A fitted multivariate-response functional regression model.

    Immutable in use: ``predict`` is reentrant and instances can be shared
    across threads. Serialization round-trips bit-exactly through JSON.
    """

    basis: BasisSpec
    config: PenaltyConfig
    components: ComponentSet
    W: np.ndarray  # (K, m) loading vectors
    mu: np.ndarray  # (m,) intercept = mean response
    xbar: np.ndarray  # (p, T) mean predictor curves
    grid: np.ndarray  # (T,) training grid
    train_y: np.ndarray | None = None  # kept for bootstrap refits, not serialized

    @property
    def k(self) -> int:
        return self.components.n_components

    @property
    def p(self) -> int:
        return self.xbar.shape[0]

    @property
    def m(self) -> int:
        return self.mu.shape[0]

    # -- prediction ---------------------------------------------------------

    def predict(self, Xnew, grid=None) -> np.ndarray:
        """Predicted responses for new curves observed on the training grid.

        Curves on a different grid are linearly interpolated onto the
        training grid first; the new grid must cover the training range
        (extrapolation is refused).
        """
        Xnew = _as_curves(Xnew, self.p)
        if grid is not None:
            Xnew = _regrid(Xnew, np.asarray(grid, dtype=float), self.grid)
        if Xnew.shape[1] != self.p:
            raise ValueError(f"expected {self.p} predictor curves, got {Xnew.shape[1]}")
        if Xnew.shape[2] != self.grid.size:
            raise ValueError("curves must be observed on the training grid")
        scores = self.transform(Xnew)
        return self.mu + scores @ self.W

    def transform(self, Xnew) -> np.ndarray:
        """Component scores of new curves: integrals of centered curves
        against each component function."""
        Xnew = _as_curves(Xnew, self.p)
        Znew = centered_scores(Xnew, self.xbar, self.basis, self.grid)
        if self.k == 0:
            return np.zeros((Xnew.shape[0], 0))
        return Znew @ self.components.coeffs.T

    def fitted_values(self) -> np.ndarray:
        """In-sample fitted responses from the stored training scores."""
        return self.mu + self.components.scores.T @ self.W

    def coefficient_surface(self, grid=None) -> np.ndarray:
        """Coefficient functions B[j, r](t) = sum_k alpha_kj(t) W[k, r].

        Returns an array of shape (p, m, T') on the requested grid (training
        grid by default).
        """
        grid = self.grid if grid is None else np.asarray(grid, dtype=float)
        design = eval_basis(self.basis, grid)  # (T', D)
        out = np.zeros((self.p, self.m, grid.size))
        if self.k == 0:
            return out
        # component curves: (K, p, T')
        alph = np.einsum("td,kjd->kjt", design,
                         self.components.coeffs.reshape(self.k, self.p, -1))
        return np.einsum("kjt,kr->jrt", alph, self.W)

    def component_curves(self, grid=None) -> np.ndarray:
        """Component functions alpha_k evaluated on a grid, shape (K, p, T')."""
        grid = self.grid if grid is None else np.asarray(grid, dtype=float)
        design = eval_basis(self.basis, grid)
        if self.k == 0:
            return np.zeros((0, self.p, grid.size))
        return np.einsum("td,kjd->kjt", design,
                         self.components.coeffs.reshape(self.k, self.p, -1))

    def selected_predictors(self) -> np.ndarray:
        """Indices of predictors contributing to the fitted surface.

        The smooth penalty performs no curve selection, so it reports every
        predictor. Under the smooth-sparse penalty a predictor is selected
        when some component with a nonzero loading carries its block.
        """
        if self.config.mode == "smooth":
            return np.arange(self.p)
        if self.k == 0:
            return np.zeros(0, dtype=int)
        gn = self.basis.penalty_matrix(self.config.eta)
        blocks = self.components.coeffs.reshape(self.k, self.p, -1)
        norms = np.sqrt(
            np.maximum(np.einsum("kjd,de,kje->kj", blocks, gn, blocks), 0.0)
        )
        active_k = np.linalg.norm(self.W, axis=1) > 0.0
        if not active_k.any():
            return np.zeros(0, dtype=int)
        return np.flatnonzero(norms[active_k].max(axis=0) > BLOCK_ZERO_TOL)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "basis": {
                "degree": self.basis.degree,
                "dim": self.basis.dim,
                "knots": self.basis.knots.tolist(),
            },
            "config": {
                "mode": self.config.mode,
                "tau": self.config.tau,
                "lam": self.config.lam,
                "eta": self.config.eta,
            },
            "k": self.k,
            "mu": self.mu.tolist(),
            "W": self.W.tolist(),
            "coeffs": self.components.coeffs.tolist(),
            "sigma2": self.components.sigma2.tolist(),
            "scores": self.components.scores.tolist(),
            "grid": self.grid.tolist(),
            "xbar": self.xbar.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a model document")
        if int(doc.get("version", -1)) != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        basis = make_basis(doc["basis"]["dim"], doc["basis"]["degree"])
        if not np.allclose(basis.knots, np.asarray(doc["basis"]["knots"]), atol=0.0):
            raise ValueError("knot vector does not match an equally spaced basis")
        cfg = PenaltyConfig(**doc["config"])
        k = int(doc["k"])
        grid = np.asarray(doc["grid"], dtype=float)
        xbar = np.atleast_2d(np.asarray(doc["xbar"], dtype=float))
        p = xbar.shape[0]
        coeffs = np.asarray(doc["coeffs"], dtype=float).reshape(k, p * basis.dim)
        scores = np.asarray(doc["scores"], dtype=float).reshape(k, -1)
        comps = ComponentSet(
            coeffs=coeffs,
            sigma2=np.asarray(doc["sigma2"], dtype=float),
            scores=scores,
            config=cfg,
            converged=np.ones(k, dtype=bool),
        )
        return cls(
            basis=basis,
            config=cfg,
            components=comps,
            W=np.asarray(doc["W"], dtype=float).reshape(k, -1),
            mu=np.asarray(doc["mu"], dtype=float),
            xbar=xbar,
            grid=grid,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "FittedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_model(
    ds: CurveDataset,
    spec: BasisSpec,
    config: PenaltyConfig,
    k: int | None = None,
    dm: DesignMatrices | None = None,
    components: ComponentSet | None = None,
) -> FittedModel:
    """Fit components and the least-squares refit in one call.

    ``k=None`` keeps every extractable component. An explicit ``k`` larger
    than the number of computed components raises ValueError. Precomputed
    design matrices or components may be passed to avoid rework.
    """
    if dm is None:
        dm = build_design(ds, spec, config.eta)
    if components is None:
        k_req = _default_k_cap(ds) if k is None else int(k)
        if k_req < 1:
            raise ValueError("k must be >= 1 when given")
        if config.mode == "smooth":
            components = fit_components_smooth(dm, config.tau, config.eta, k_req)
        else:
            components = fit_components_sparse(
                dm, config.tau, config.lam, config.eta, k_req
            )
    if k is not None and k > components.n_components:
        raise ValueError(
            f"k={k} exceeds the {components.n_components} available components"
        )
    if k is not None and k < components.n_components:
        components = _truncate(components, k)
    W = _loadings(components, dm)
    return FittedModel(
        basis=spec,
        config=config,
        components=components,
        W=W,
        mu=dm.ybar.copy(),
        xbar=dm.xbar.copy(),
        grid=ds.grid.copy(),
        train_y=ds.Y,
    )


def _default_k_cap(ds: CurveDataset) -> int:
    return max(1, min(ds.m, ds.n - 1))


def _truncate(components: ComponentSet, k: int) -> ComponentSet:
    return ComponentSet(
        coeffs=components.coeffs[:k],
        sigma2=components.sigma2[:k],
        scores=components.scores[:k],
        config=components.config,
        converged=components.converged[:k],
        objective_traces=components.objective_traces[:k],
    )


def _loadings(components: ComponentSet, dm: DesignMatrices) -> np.ndarray:
    """w_k = (1/n) sum_l T_lk Y_l; centered and raw responses agree because
    scores of centered curves sum to zero."""
    if components.n_components == 0:
        return np.zeros((0, dm.m))
    return components.scores @ dm.Yc / dm.n


def bootstrap_intervals(
    ds: CurveDataset,
    spec: BasisSpec,
    config: PenaltyConfig,
    Xnew,
    k: int | None = None,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    k_rule: str = "fixed",
) -> np.ndarray:
    """Percentile bootstrap prediction intervals, shape (q, m, 2).

    Draws ``n_boot`` resamples with replacement, refits per resample and
    takes the (1-level)/2 and (1+level)/2 empirical percentiles of the
    predictions. ``k_rule`` controls the per-resample component count:
    ``fixed`` reuses ``k`` (or the reference fit's count), ``k_upper``
    reapplies the eigenvalue-ratio upper bound, and ``cv`` repeats the full
    cross-validation (slow; reproduces tuning variation).
    """
    if n_boot < 2:
        raise ValueError("n_boot must be >= 2")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must be in [0, 1)")
    if k_rule not in ("fixed", "k_upper", "cv"):
        raise ValueError(f"unknown k_rule {k_rule!r}")
    Xnew = _as_curves(Xnew, ds.p)
    q = Xnew.shape[0]
    preds = np.empty((n_boot, q, ds.m))
    children = np.random.SeedSequence(seed).spawn(n_boot)
    for b in range(n_boot):
        rng = np.random.default_rng(children[b])
        idx = _draw_resample(rng, ds.n)
        ds_b = ds.subset(idx)
        preds[b] = _bootstrap_predict(ds_b, spec, config, Xnew, k, k_rule, seed)
    lo = 100.0 * (1.0 - level) / 2.0
    hi = 100.0 * (1.0 + level) / 2.0
    limits = np.percentile(preds, [lo, hi], axis=0)
    return np.moveaxis(limits, 0, -1)


def _draw_resample(rng, n: int) -> np.ndarray:
    """Resample indices; all-identical draws are redrawn (at most 10 times)."""
    for _ in range(10):
        idx = rng.integers(0, n, size=n)
        if np.unique(idx).size > 1:
            return idx
    raise RuntimeError("resampling produced identical rows 10 times in a row")


def _bootstrap_predict(ds_b, spec, config, Xnew, k, k_rule, seed):
    from .selection import cv_large_p, cv_small_p, k_upper  # cycle guard

    if k_rule == "cv":
        cv = (cv_small_p if config.mode == "smooth" else cv_large_p)(ds_b, spec, seed)
        tau, lam, eta, k_b = cv.best
        config = PenaltyConfig(mode=config.mode, tau=tau, lam=lam, eta=eta)
        model = fit_model(ds_b, spec, config, k=None)
        model = _refit_truncated(model, ds_b, spec, config, k_b)
        return model.predict(Xnew)
    model = fit_model(ds_b, spec, config, k=None)
    if k_rule == "k_upper":
        k_b = k_upper(model.components.sigma2, ds_b.m) if model.k else 0
    else:
        k_b = model.k if k is None else min(int(k), model.k)
    model = _refit_truncated(model, ds_b, spec, config, k_b)
    return model.predict(Xnew)


def _refit_truncated(model, ds, spec, config, k_b):
    if k_b >= model.k:
        return model
    return fit_model(ds, spec, config, k=k_b, components=model.components)


def _as_curves(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, None, :] if p == 1 else X[None, :, :]
    if X.ndim == 2:
        # ambiguous (q, T) vs (p, T): treat as (q, T) for single-predictor
        # models and as one sample of p curves otherwise
        X = X[:, None, :] if p == 1 else X[None, :, :]
    if X.ndim != 3:
        raise ValueError("curves must have shape (q, p, T)")
    return X


def _regrid(X: np.ndarray, grid_new: np.ndarray, grid_train: np.ndarray) -> np.ndarray:
    if grid_new.size == grid_train.size and np.array_equal(grid_new, grid_train):
        return X
    if grid_new[0] > grid_train[0] + 1e-12 or grid_new[-1] < grid_train[-1] - 1e-12:
        raise ValueError(
            "new grid does not cover the training grid; refusing to extrapolate"
        )
    q, p, _ = X.shape
    out = np.empty((q, p, grid_train.size))
    for i in range(q):
        for j in range(p):
            out[i, j] = np.interp(grid_train, grid_new, X[i, j])
    return out
