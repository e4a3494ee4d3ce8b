"""Synthetic data generators and the population-level demonstrations.

Four scenario families cover one smooth Gaussian-process predictor, one
basis-expansion predictor, 50 correlated basis-expansion predictors with a
5-curve support, and 1000 lag-correlated Gaussian-process predictors with a
5-curve support. Every generator is deterministic given its seeds, and the
noise level enters only as a multiplier on pre-drawn standard normals, so
changing sigma changes nothing but the noise.

The signal scale c is calibrated by Monte Carlo so that the per-coordinate
average signal variance equals 1, making the signal-to-noise ratio 1 at
sigma = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import trapezoid_weights
from .dataset import CurveDataset

_SNR_STREAM = 7001
_SAMPLE_STREAM = 7002
_SNR_DRAWS = 10000

_DEFAULT_P = {1: 1, 2: 1, 3: 50, 4: 1000}
_SUPPORT = {1: (0,), 2: (0,), 3: (0, 1, 2, 3, 4), 4: (0, 10, 20, 30, 40)}


@dataclass(frozen=True)
class SimScenario:
    """Generator specification for one simulation cell."""

    sim_id: int
    n: int = 100
    m: int = 1
    sigma: float = 0.1
    rho: float = 0.2  # cross-curve correlation, scenario 3 only
    lag: int = 2  # moving-average window, scenario 4 only
    n_times: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.sim_id not in (1, 2, 3, 4):
            raise ValueError(f"unknown scenario id {self.sim_id}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.sim_id == 3 and not (0.0 <= self.rho <= 1.0):
            raise ValueError("rho must lie in [0, 1]")
        if self.sim_id == 4 and self.lag < 1:
            raise ValueError("lag must be a positive integer")

    @property
    def p(self) -> int:
        return _DEFAULT_P[self.sim_id]

    @property
    def support(self) -> tuple:
        return _SUPPORT[self.sim_id]


class ScenarioInstance:
    """A scenario with its coefficient surface and signal scale frozen.

    Splitting instance creation from sampling lets one replicate share the
    same mixing matrix and scale c between its training and test sets.
    """

    def __init__(self, scenario: SimScenario):
        self.scenario = scenario
        self.grid = np.linspace(0.0, 1.0, scenario.n_times)
        rng = np.random.default_rng(scenario.seed)
        self.B = _coefficient_surface(scenario, self.grid, rng)
        self.mu = np.ones(scenario.m)
        self.c = _estimate_scale(
            scenario,
            self.B,
            self.grid,
            np.random.default_rng([scenario.seed, _SNR_STREAM]),
        )

    def sample(self, n: int, sample_seed: int = 0) -> CurveDataset:
        """Draw a dataset of size n; X is drawn before the noise so the
        stored truth is invariant to sigma."""
        sc = self.scenario
        rng = np.random.default_rng([sc.seed, _SAMPLE_STREAM, sample_seed])
        X = _draw_curves(sc, self.grid, rng, n)
        noise = rng.standard_normal((n, sc.m))
        w = trapezoid_weights(self.grid)
        supp = list(sc.support)
        signal = np.einsum(
            "njt,jrt->nr", X[:, supp] * w, self.B[supp]
        )
        F = self.mu + self.c * signal
        Y = F + sc.sigma * noise
        return CurveDataset(
            grid=self.grid,
            X=X,
            Y=Y,
            truth=F,
            support=sc.support,
            meta={
                "sim_id": sc.sim_id,
                "sigma": sc.sigma,
                "c": self.c,
                "seed": sc.seed,
                "sample_seed": sample_seed,
                "rho": sc.rho,
                "lag": sc.lag,
            },
        )


def gen_sim1(n, m, sigma, seed, n_times=64) -> CurveDataset:
    """Gaussian-process predictor with squared-exponential covariance."""
    sc = SimScenario(sim_id=1, n=n, m=m, sigma=sigma, seed=seed, n_times=n_times)
    return ScenarioInstance(sc).sample(n)


def gen_sim2(n, m, sigma, seed, n_times=64) -> CurveDataset:
    """Single predictor built from a 20-term Fourier expansion."""
    sc = SimScenario(sim_id=2, n=n, m=m, sigma=sigma, seed=seed, n_times=n_times)
    return ScenarioInstance(sc).sample(n)


def gen_sim3(n, m, sigma, rho, seed, n_times=64) -> CurveDataset:
    """50 correlated Fourier-expansion predictors, 5 of them active."""
    sc = SimScenario(
        sim_id=3, n=n, m=m, sigma=sigma, rho=rho, seed=seed, n_times=n_times
    )
    return ScenarioInstance(sc).sample(n)


def gen_sim4(n, m, sigma, lag, seed, n_times=64) -> CurveDataset:
    """1000 lag-correlated Gaussian-process predictors, 5 active."""
    sc = SimScenario(
        sim_id=4, n=n, m=m, sigma=sigma, lag=lag, seed=seed, n_times=n_times
    )
    return ScenarioInstance(sc).sample(n)


def snr_scale(scenario: SimScenario, mc_seed=None, n_draws: int = _SNR_DRAWS) -> float:
    """Monte Carlo estimate of the scale c making average signal variance 1.

    Only the active predictors are sampled (inactive ones do not enter the
    signal). Raises when the coefficient surface is identically zero.
    """
    rng = np.random.default_rng(scenario.seed)
    grid = np.linspace(0.0, 1.0, scenario.n_times)
    B = _coefficient_surface(scenario, grid, rng)
    entropy = (
        [scenario.seed, _SNR_STREAM] if mc_seed is None else [int(mc_seed), _SNR_STREAM]
    )
    return _estimate_scale(scenario, B, grid, np.random.default_rng(entropy), n_draws)


# ---------------------------------------------------------------------------
# coefficient surfaces


def _coefficient_surface(sc: SimScenario, grid, rng) -> np.ndarray:
    """True coefficient values, shape (p, m, T). Draws the mixing matrix."""
    t = grid
    if sc.sim_id == 1:
        k = np.arange(1, sc.m + 1)[:, None]
        b = np.sin(3 * np.pi * t + k) + np.cos(3 * np.pi * t + k)
        return b[None, :, :]
    if sc.sim_id == 2:
        mix = rng.uniform(0.0, 1.0, size=(sc.m, 3))
        beta = np.stack([np.cos(2 * np.pi * t), 2 * t**2, 1.0 / (1.0 + t)])
        return (mix @ beta)[None, :, :]
    mix = rng.uniform(0.0, 1.0, size=(3, sc.m))
    B = np.zeros((sc.p, sc.m, t.size))
    rows = _beta_rows(sc.sim_id, t)  # (5, 3, T)
    for pos, row in zip(sc.support, rows):
        B[pos] = np.einsum("kt,km->mt", row, mix)
    return B


def _beta_rows(sim_id: int, t) -> np.ndarray:
    ks = np.arange(1, 4)[:, None]
    if sim_id == 3:
        return np.stack(
            [
                t[None, :] ** ks,
                np.cos(ks * np.pi * t),
                1.0 / (t[None, :] + ks),
                np.log(t[None, :] + ks),
                np.exp(-ks * t[None, :] ** 2),
            ]
        )
    return np.stack(
        [
            2.0 * (t[None, :] + 1.0) * np.exp(-ks * t[None, :]),
            np.sin(ks * np.pi * t / 2.0) / np.sqrt(1.0 + t[None, :]),
            3.0 * np.sinh(-t[None, :]) / ks + t[None, :] ** 2,
            0.5 * (1.0 + t[None, :]) ** ks * np.cos(ks * np.pi * t),
            np.tan(t[None, :]) / (1.0 + ks * t[None, :] ** 2),
        ]
    )


# ---------------------------------------------------------------------------
# curve sampling


def _se_kernel_chol(grid) -> np.ndarray:
    """Cholesky factor of the squared-exponential kernel with 1e-10 jitter;
    the raw 64-point kernel matrix is numerically singular."""
    d = grid[:, None] - grid[None, :]
    K = np.exp(-((30.0 * d) ** 2)) + 1e-10 * np.eye(grid.size)
    return np.linalg.cholesky(K)


def _fourier_bases(grid):
    k = np.arange(1, 21)[:, None]
    return np.sin(2 * np.pi * k * grid), np.cos(2 * np.pi * k * grid)


_KSCALE = (1.0 / np.sqrt(np.arange(1.0, 21.0))) ** 0.5  # sd of V_k: var = 1/sqrt(k)


def _draw_curves(sc: SimScenario, grid, rng, n: int) -> np.ndarray:
    """Sample predictor curves, shape (n, p, T)."""
    if sc.sim_id == 1:
        L = _se_kernel_chol(grid)
        return (rng.standard_normal((n, grid.size)) @ L.T)[:, None, :]
    if sc.sim_id == 2:
        sinb, cosb = _fourier_bases(grid)
        V = rng.standard_normal((n, 20, 2)) * _KSCALE[None, :, None]
        return (V[:, :, 0] @ sinb + V[:, :, 1] @ cosb)[:, None, :]
    if sc.sim_id == 3:
        sinb, cosb = _fourier_bases(grid)
        xi = rng.standard_normal((n, 20, 2, sc.p))
        shared = rng.standard_normal((n, 20, 2, 1))
        V = _KSCALE[None, :, None, None] * (
            np.sqrt(1.0 - sc.rho) * xi + np.sqrt(sc.rho) * shared
        )
        return np.einsum("nkj,kt->njt", V[:, :, 0, :], sinb) + np.einsum(
            "nkj,kt->njt", V[:, :, 1, :], cosb
        )
    # scenario 4: moving average over independent GP draws, chunked to keep
    # the W buffer modest at p = 1000
    L = _se_kernel_chol(grid)
    p, lag, T = sc.p, sc.lag, grid.size
    X = np.empty((n, p, T))
    chunk = max(1, min(n, int(64e6 // ((p + lag) * T * 8))))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        W = rng.standard_normal((hi - lo, p + lag, T)) @ L.T
        cs = np.concatenate([np.zeros((hi - lo, 1, T)), np.cumsum(W, axis=1)], axis=1)
        # X_j = (W_{j+1} + ... + W_{j+lag})/sqrt(lag), 1-based j
        X[lo:hi] = (cs[:, 1 + lag : p + lag + 1] - cs[:, 1 : p + 1]) / np.sqrt(lag)
    return X


def _draw_support_signal(sc: SimScenario, grid, rng, n: int) -> np.ndarray:
    """Sample only the active predictor curves, shape (n, |support|, T).

    Marginal law matches the corresponding coordinates of `_draw_curves`.
    """
    if sc.sim_id in (1, 2):
        return _draw_curves(sc, grid, rng, n)
    if sc.sim_id == 3:
        sinb, cosb = _fourier_bases(grid)
        q = len(sc.support)
        xi = rng.standard_normal((n, 20, 2, q))
        shared = rng.standard_normal((n, 20, 2, 1))
        V = _KSCALE[None, :, None, None] * (
            np.sqrt(1.0 - sc.rho) * xi + np.sqrt(sc.rho) * shared
        )
        return np.einsum("nkj,kt->njt", V[:, :, 0, :], sinb) + np.einsum(
            "nkj,kt->njt", V[:, :, 1, :], cosb
        )
    # scenario 4: draw the W span covering every active window
    L = _se_kernel_chol(grid)
    lag = sc.lag
    first = sc.support[0] + 1  # 1-based predictor index
    last = sc.support[-1] + 1
    n_w = (last + lag) - (first + 1) + 1  # W indices first+1 .. last+lag
    out = np.empty((n, len(sc.support), grid.size))
    W = rng.standard_normal((n, n_w, grid.size)) @ L.T
    for col, pos in enumerate(sc.support):
        j = pos + 1
        a = (j + 1) - (first + 1)
        out[:, col] = W[:, a : a + lag].sum(axis=1) / np.sqrt(lag)
    return out


def _estimate_scale(sc, B, grid, rng, n_draws: int = _SNR_DRAWS) -> float:
    """c with mean_r Var(c * signal_r) = 1, estimated from signal draws."""
    supp = list(sc.support)
    Bs = B[supp]
    if not np.any(Bs):
        raise ValueError("coefficient surface is identically zero; scale undefined")
    w = trapezoid_weights(grid)
    total = np.zeros(sc.m)
    total_sq = np.zeros(sc.m)
    count = 0
    batch = 2000
    while count < n_draws:
        take = min(batch, n_draws - count)
        Xs = _draw_support_signal(sc, grid, rng, take)
        sig = np.einsum("njt,jrt->nr", Xs * w, Bs)
        total += sig.sum(axis=0)
        total_sq += (sig**2).sum(axis=0)
        count += take
    var = total_sq / count - (total / count) ** 2
    mean_var = float(var.mean())
    if mean_var <= 0.0:
        raise ValueError("signal variance is zero; scale undefined")
    return 1.0 / np.sqrt(mean_var)


# ---------------------------------------------------------------------------
# population demonstrations


def fig1_curves(m: int = 20, case: str = "cs", rho: float = 0.5) -> np.ndarray:
    """Relative tail-sum approximation errors for two correlation designs.

    Eigendecomposes the m x m covariance of the regression function (entry
    rho^|i-j| for ``ar``, constant off-diagonal rho for ``cs``) and returns
    sum_{k>K} lambda_k / sum_k lambda_k for K = 0..m.
    """
    if case not in ("ar", "cs"):
        raise ValueError("case must be 'ar' or 'cs'")
    if case == "ar":
        idx = np.arange(m)
        cov = rho ** np.abs(idx[:, None] - idx[None, :])
    else:
        cov = np.full((m, m), float(rho))
        np.fill_diagonal(cov, 1.0)
    vals = np.linalg.eigvalsh(cov)
    if vals.min() < -1e-8:
        raise ValueError("correlation parameter yields an indefinite covariance")
    vals = np.sort(np.maximum(vals, 0.0))[::-1]
    total = vals.sum()
    tails = np.concatenate([[total], total - np.cumsum(vals)])
    return tails / total


def brownian_demo(n_times: int = 64, k_max: int = 5) -> dict:
    """Population comparison of three rank-K decompositions on Brownian paths.

    Discretizes the min(s, t) covariance and a 5-dimensional sine coefficient
    vector on a uniform grid (excluding t = 0, where the process is
    degenerate), then computes the relative approximation error of the
    response-informed optimal decomposition, the covariance eigenbasis, and
    the covariance-orthogonal unit-norm basis, for K = 0..k_max. All three
    use the identical discretization, so the comparison is exact at grid
    level.
    """
    m = 5
    t = np.arange(1, n_times + 1) / n_times
    S = np.minimum(t[:, None], t[None, :])
    B = np.stack(
        [np.sin(k * np.pi * t) + 2.0 * np.sin((k + 1) * np.pi * t) for k in range(1, m + 1)],
        axis=1,
    )  # (T, m)
    w = trapezoid_weights(t)
    Wd = np.diag(w)
    V = S @ (w[:, None] * B)  # (T, m): integral of Sigma against each b_r
    U = w[:, None] * V  # numerator factor: Gamma-form = U U'
    Bsig = Wd @ S @ Wd  # covariance metric
    errors = {}
    total = float(np.einsum("tm,ts,sm->", B, Bsig, B))

    alphas_opt = _sequential_components(U, Bsig, Bsig, k_max)
    alphas_pls = _sequential_components(U, Wd, Bsig, k_max)
    # covariance eigenbasis in the L2 metric
    sw = np.sqrt(w)
    sym = sw[:, None] * S * sw[None, :]
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1][:k_max]
    alphas_pca = [vecs[:, i] / sw for i in order]

    for name, alphas in (
        ("optimal", alphas_opt),
        ("fpca", alphas_pca),
        ("fpls", alphas_pls),
    ):
        errs = [1.0]
        A = np.zeros((t.size, 0))
        Wmat = np.zeros((0, m))
        for k in range(k_max):
            a = alphas[k]
            var = float(a @ Bsig @ a)
            wk = (a @ U) / var
            A = np.column_stack([A, a])
            Wmat = np.vstack([Wmat, wk])
            E = B - A @ Wmat
            errs.append(float(np.einsum("tm,ts,sm->", E, Bsig, E)) / total)
        errors[name] = np.asarray(errs)
    return errors


def _sequential_components(U, N, Bsig, k_max) -> list:
    """Sequential rank-m maximizers of a'UU'a / a'Na with Bsig-orthogonality.

    Small dense helper for the population demos: N is the normalization
    metric (the covariance form for the optimal decomposition, the L2 Gram
    for the unit-norm variant); constraints make scores uncorrelated.
    """
    Nf = np.linalg.cholesky(N + 1e-13 * np.eye(N.shape[0]) * np.trace(N))
    Ninv_U = _chol_solve(Nf, U)
    alphas = []
    crows = []
    xcols = []
    for _ in range(k_max):
        if crows:
            C = np.stack(crows)
            Xc = np.stack(xcols, axis=1)
            om = C @ Xc
            Wmap = Ninv_U - Xc @ np.linalg.solve(om, C @ Ninv_U)
        else:
            Wmap = Ninv_U
        R = U.T @ Wmap
        R = (R + R.T) / 2.0
        vals, vecs = np.linalg.eigh(R)
        z = vecs[:, -1]
        a = Wmap @ z
        var = float(a @ Bsig @ a)
        if var <= 0.0:
            break
        a = a / np.sqrt(var)
        alphas.append(a)
        row = Bsig @ a
        crows.append(row)
        xcols.append(_chol_solve(Nf, row))
    return alphas


def _chol_solve(L, b):
    from scipy.linalg import solve_triangular

    y = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, y, lower=False, check_finite=False)
