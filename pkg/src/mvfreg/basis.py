"""Cubic B-spline systems on [0, 1] and their exact Gram/roughness matrices.

All function-space inner products used elsewhere in the package are
discretized through the two matrices computed here:

* ``gram``       -- G[i, j] = int_0^1 B_i(t) B_j(t) dt
* ``roughness``  -- H[i, j] = int_0^1 B_i''(t) B_j''(t) dt

Both are computed by per-knot-span Gauss-Legendre quadrature, which is exact
for piecewise polynomials, so the penalty matrices do not depend on the
observation grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline


@dataclass(frozen=True)
class BasisSpec:
    """A clamped B-spline basis on [0, 1] with precomputed penalty matrices.

    Instances are immutable and safe to share between concurrent workers.

    Attributes
    ----------
    degree : int
        Polynomial degree of each piece (3 = cubic).
    dim : int
        Number of basis functions D.
    knots : ndarray of shape (dim + degree + 1,)
        Nondecreasing knot vector with (degree+1)-fold boundary knots at 0
        and 1 and equally spaced interior knots.
    gram : ndarray of shape (dim, dim)
        L2 Gram matrix G, symmetric positive definite.
    roughness : ndarray of shape (dim, dim)
        Second-derivative Gram matrix H, symmetric positive semidefinite.
    """

    degree: int
    dim: int
    knots: np.ndarray
    gram: np.ndarray = field(repr=False)
    roughness: np.ndarray = field(repr=False)

    def penalty_matrix(self, eta: float) -> np.ndarray:
        """Return G + eta*H, the metric behind the eta-norm of one curve block."""
        if eta < 0:
            raise ValueError("eta must be nonnegative")
        return self.gram + eta * self.roughness


def make_basis(dim: int = 30, degree: int = 3) -> BasisSpec:
    """Build a clamped B-spline basis with equally spaced interior knots.

    Parameters
    ----------
    dim : int
        Number of basis functions; must satisfy dim >= degree + 1.
    degree : int
        Spline degree (default cubic).

    Returns
    -------
    BasisSpec
        Basis with exact Gram and roughness matrices.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if dim < degree + 1:
        raise ValueError(f"dim must be >= degree + 1 = {degree + 1}, got {dim}")
    n_interior = dim - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    gram = _piecewise_gram(knots, degree, dim, deriv=0)
    rough = _piecewise_gram(knots, degree, dim, deriv=2)
    return BasisSpec(degree=degree, dim=dim, knots=knots, gram=gram, roughness=rough)


def eval_basis(spec: BasisSpec, grid) -> np.ndarray:
    """Evaluate all basis functions on a grid.

    Returns a (len(grid), dim) matrix whose (i, d) entry is B_d(grid[i]).
    Each row has at most degree+1 nonzeros and sums to 1.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1:
        raise ValueError("grid must be one-dimensional")
    if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
        raise ValueError("grid points must lie in [0, 1]")
    return BSpline.design_matrix(grid, spec.knots, spec.degree).toarray()


def eval_basis_deriv(spec: BasisSpec, grid, deriv: int = 1) -> np.ndarray:
    """Evaluate the deriv-th derivative of every basis function on a grid."""
    grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, spec.dim))
    coeff = np.zeros(spec.dim)
    for d in range(spec.dim):
        coeff[d] = 1.0
        out[:, d] = BSpline(spec.knots, coeff.copy(), spec.degree)(grid, nu=deriv)
        coeff[d] = 0.0
    return out


def trapezoid_weights(grid) -> np.ndarray:
    """Composite trapezoidal-rule weights for a strictly increasing grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must hold at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += d / 2.0
    w[1:] += d / 2.0
    return w


def curve_scores(spec: BasisSpec, curve, grid) -> np.ndarray:
    """Approximate int_0^1 x(t) B_d(t) dt for every d by the trapezoidal rule.

    ``curve`` may be a vector of values on the grid or an array whose last
    axis runs over the grid, in which case scores are computed along that
    axis. The map is linear in the curve values.
    """
    grid = np.asarray(grid, dtype=float)
    curve = np.asarray(curve, dtype=float)
    if curve.shape[-1] != grid.size:
        raise ValueError(
            f"curve has {curve.shape[-1]} values but grid has {grid.size} points"
        )
    w = trapezoid_weights(grid)
    design = eval_basis(spec, grid)
    return (curve * w) @ design


def interpolate_coefficients(spec: BasisSpec, values, grid) -> np.ndarray:
    """Least-squares basis coefficients for a function sampled on a grid."""
    design = eval_basis(spec, np.asarray(grid, dtype=float))
    coeff, *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    return coeff


def _piecewise_gram(knots, degree, dim, deriv):
    """Exact Gram matrix of the deriv-th basis derivatives via per-span quadrature."""
    # degree+1 Gauss nodes integrate the degree-2*degree product exactly.
    # Accumulation runs in extended precision: the roughness matrix has
    # entries ~ (spans)^3 and plain float64 sums visibly pollute the
    # annihilation of affine functions.
    nodes, weights = np.polynomial.legendre.leggauss(degree + 1)
    spans = np.unique(knots)
    out = np.zeros((dim, dim), dtype=np.longdouble)
    coeff = np.eye(dim)
    splines = [BSpline(knots, coeff[d], degree) for d in range(dim)]
    for left, right in zip(spans[:-1], spans[1:]):
        half = (right - left) / 2.0
        x = (nodes + 1.0) * half + left
        vals = np.column_stack([s(x, nu=deriv) for s in splines]).astype(np.longdouble)
        out += np.longdouble(half) * (vals * weights[:, None]).T @ vals
    out = out.astype(np.float64)
    return (out + out.T) / 2.0
