"""Component-count bound and cross-validated tuning for both penalty modes.

The eigenvalue-ratio rule caps the number of components; a 5-fold
cross-validation then scans the tuning grid (25 tau x eta pairs for the
smooth penalty, 12 (tau, lam) x eta triples for the smooth-sparse penalty)
and every component count up to the per-cell cap, minimizing total
validation error. Fold work is the outer loop so per-fold design matrices
are built once and shared across grid cells; the reduction order over cells
is fixed, making results reproducible for a given seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec
from .dataset import CurveDataset, build_design, centered_scores
from .solvers import fit_components_smooth, fit_components_sparse

SMALL_P_TAU = (1e-9, 1e-6, 1e-3, 1e1, 1e3)
SMALL_P_ETA = (1e-7, 1e-5, 1e-3, 1e-1, 10.0)
LARGE_P_TAU_LAM = ((1e-1, 0.1), (1.0, 0.2), (10.0, 0.3), (100.0, 0.4))
LARGE_P_ETA = (1e-6, 1e-3, 1.0)

K_UPPER_RATIO = 0.001


@dataclass(frozen=True)
class CvCell:
    tau: float
    lam: float
    eta: float


@dataclass
class CvResult:
    """Outcome of a cross-validation scan.

    ``best`` holds (tau, lam, eta, k); ``table`` is one record per explored
    (cell, k) with the total validation error summed over folds; ties are
    broken toward smaller k, then larger tau, then larger eta.
    """

    best: tuple
    table: list
    k_upper: dict
    seed: int
    mode: str
    n_folds: int
    fold_sizes: list
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": "mvfreg-cv",
            "version": 1,
            "mode": self.mode,
            "seed": self.seed,
            "n_folds": self.n_folds,
            "fold_sizes": list(self.fold_sizes),
            "best": {
                "tau": self.best[0],
                "lam": self.best[1],
                "eta": self.best[2],
                "k": self.best[3],
            },
            "k_upper": [
                {"tau": c.tau, "lam": c.lam, "eta": c.eta, "k_upper": int(v)}
                for c, v in self.k_upper.items()
            ],
            "table": [
                {
                    "tau": rec["tau"],
                    "lam": rec["lam"],
                    "eta": rec["eta"],
                    "k": rec["k"],
                    "error": rec["error"],
                }
                for rec in self.table
            ],
            "warnings": list(self.warnings),
        }


def k_upper(sigma2, m: int) -> int:
    """Eigenvalue-ratio upper bound for the component count.

    Returns the smallest k > 1 with sigma2_k/(sigma2_1+...+sigma2_k) <= 0.001,
    capped at m; when no k qualifies, returns min(m, len(sigma2)).
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if sigma2.size == 0:
        raise ValueError("sigma2 must be a nonempty sequence")
    if np.any(sigma2 < 0):
        raise ValueError("sigma2 must be nonnegative")
    if np.any(np.diff(sigma2) > 1e-8 * max(sigma2[0], 1e-300)):
        raise ValueError("sigma2 must be non-increasing")
    csum = np.cumsum(sigma2)
    for k in range(2, sigma2.size + 1):
        denom = csum[k - 1]
        if denom <= 0.0 or sigma2[k - 1] / denom <= K_UPPER_RATIO:
            return min(k, m)
    return min(m, sigma2.size)


def cv_small_p(ds: CurveDataset, spec: BasisSpec, seed: int, n_folds: int = 5) -> CvResult:
    """Cross-validated tuning for the smooth penalty (25-cell grid)."""
    cells = [CvCell(tau, 0.0, eta) for tau in SMALL_P_TAU for eta in SMALL_P_ETA]
    return _run_cv(ds, spec, seed, cells, "smooth", n_folds)


def cv_large_p(ds: CurveDataset, spec: BasisSpec, seed: int, n_folds: int = 5) -> CvResult:
    """Cross-validated tuning for the smooth-sparse penalty (12-cell grid)."""
    cells = [
        CvCell(tau, lam, eta) for (tau, lam) in LARGE_P_TAU_LAM for eta in LARGE_P_ETA
    ]
    return _run_cv(ds, spec, seed, cells, "smooth-sparse", n_folds)


def make_folds(n: int, n_folds: int, seed: int) -> list:
    """Disjoint cover of range(n): a seeded permutation cut into blocks."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, n_folds)]


def _fit_cell(dm, cell: CvCell, mode: str, k_max: int):
    if mode == "smooth":
        return fit_components_smooth(dm, cell.tau, cell.eta, k_max)
    return fit_components_sparse(dm, cell.tau, cell.lam, cell.eta, k_max)


def _run_cv(ds, spec, seed, cells, mode, n_folds) -> CvResult:
    n, m = ds.n, ds.m
    notes = []
    if n < 4:
        raise ValueError("need at least 4 samples for cross-validation")
    feasible = min(n_folds, n // 2)
    if feasible < n_folds:
        notes.append(f"fold count reduced from {n_folds} to {feasible} for n={n}")
        warnings.warn(notes[-1])
        n_folds = feasible

    # Step 1: per-cell component cap from the full data.
    dm_full = build_design(ds, spec, 0.0)
    cell_cap = {}
    for cell in cells:
        comps = _fit_cell(dm_full.with_eta(cell.eta), cell, mode, m)
        cell_cap[cell] = k_upper(comps.sigma2, m) if comps.n_components else 0
    if max(cell_cap.values(), default=0) == 0:
        raise ValueError("no usable components on the full data; response may be constant")

    # Step 2: accumulate validation errors fold-by-fold, reusing the fold
    # design across cells.
    folds = make_folds(n, n_folds, seed)
    errors = {cell: np.zeros(cell_cap[cell]) for cell in cells if cell_cap[cell] > 0}
    for fold in folds:
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        train = np.flatnonzero(mask)
        ds_tr = ds.subset(train)
        dm_tr = build_design(ds_tr, spec, 0.0)
        Zval = centered_scores(ds.X[fold], dm_tr.xbar, spec, ds.grid)
        Yval = ds.Y[fold]
        for cell in cells:
            cap = cell_cap[cell]
            if cap == 0:
                continue
            comps = _fit_cell(dm_tr.with_eta(cell.eta), cell, mode, cap)
            W = comps.scores @ dm_tr.Yc / ds_tr.n if comps.n_components else None
            pred = np.tile(dm_tr.ybar, (fold.size, 1))
            err_k = np.empty(cap)
            for k in range(1, cap + 1):
                if comps.n_components >= k:
                    sc = Zval @ comps.coeffs[k - 1]
                    pred = pred + np.outer(sc, W[k - 1])
                err_k[k - 1] = float(np.sum((pred - Yval) ** 2))
            errors[cell] += err_k

    # Step 3: minimize total error; ties prefer smaller k, larger tau, larger eta.
    table = []
    best = None
    best_key = None
    for cell in cells:
        cap = cell_cap[cell]
        for k in range(1, cap + 1):
            err = float(errors[cell][k - 1])
            table.append(
                {"tau": cell.tau, "lam": cell.lam, "eta": cell.eta, "k": k, "error": err}
            )
            key = (err, k, -cell.tau, -cell.eta)
            if best_key is None or key < best_key:
                best_key = key
                best = (cell.tau, cell.lam, cell.eta, k)
    return CvResult(
        best=best,
        table=table,
        k_upper=cell_cap,
        seed=seed,
        mode=mode,
        n_folds=n_folds,
        fold_sizes=[int(f.size) for f in folds],
        warnings=notes,
    )
