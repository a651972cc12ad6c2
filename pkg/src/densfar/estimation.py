"""Estimation of the first-order functional autoregression for densities.

Given a panel of densities f_1..f_T the pipeline is:

    mean        f_bar = (1/T) sum_t f_t
    demean      w_t   = f_t - f_bar            (zero-integral functions)
    covariance  Q     = (1/T) sum_t w_t (x) w_t
    lag-1 cross P     = (1/T) sum_t w_t (x) w_{t-1}
    spectrum    (lambda_k, v_k) of Q
    inverse     Qplus = sum_{k<=K} lambda_k^{-1} v_k (x) v_k
    operator    A     = P Qplus
    residuals   e_t   = w_t - A w_{t-1}
    noise cov   Sigma = (1/T) sum_t e_t (x) e_t

The rank-K truncation regularizes the otherwise ill-posed inversion of Q;
K must stay within the numerically usable rank of the estimated covariance.
P and Sigma keep the divisor T even though only T-1 terms exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyPanel,
    EmptyResiduals,
    RankDeficient,
    TooFewPeriods,
)
from .grid import (
    EigenSystem,
    GridFunction,
    GridSpec,
    OperatorRep,
    apply_operator,
    compose,
    eigh_operator,
    project_zero_integral,
    _require_same_grid,
)
from .kde import DensityPanel

__all__ = [
    "FarModel",
    "RANK_CUTOFF_REL",
    "mean_density",
    "demean",
    "covariance_operator",
    "lag1_cross_covariance",
    "principal_components",
    "regularized_inverse",
    "estimate_operator",
    "residuals",
    "noise_covariance",
    "fit",
]

# An eigenvalue below this fraction of the largest one counts as numerically
# zero: inverting past it would amplify noise without bound.
RANK_CUTOFF_REL = 1e-10


@dataclass(frozen=True, eq=False)
class FarModel:
    """Fitted artifacts of the density autoregression.

    Attributes
    ----------
    grid : GridSpec
    mean_density : GridFunction
        Sample average of the panel densities.
    eigen : EigenSystem
        Eigenpairs of the covariance operator Q_hat.
    K : int
        Truncation level of the regularized inverse.
    A_hat, Q_hat, P_hat, Sigma_hat : OperatorRep
        Autoregressive operator, covariance, lag-1 cross-covariance, and
        residual noise covariance.
    residuals : tuple of GridFunction
        T-1 fitted residuals.
    sample_size : int
        Number of panel periods T used in the fit.
    w_initial, w_last : GridFunction
        First and last demeaned densities; kept so that bootstrap
        regeneration and forecasting work from the stored model alone.
    """

    grid: GridSpec
    mean_density: GridFunction
    eigen: EigenSystem
    K: int
    A_hat: OperatorRep
    Q_hat: OperatorRep
    P_hat: OperatorRep
    Sigma_hat: OperatorRep
    residuals: tuple
    sample_size: int
    w_initial: GridFunction
    w_last: GridFunction

    def __post_init__(self):
        object.__setattr__(self, "residuals", tuple(self.residuals))


def _values_matrix(functions) -> np.ndarray:
    functions = list(functions)
    out = np.empty((len(functions), functions[0].grid.n))
    for i, f in enumerate(functions):
        out[i] = f.values
    return out


def mean_density(panel: DensityPanel) -> GridFunction:
    """Pointwise average of the panel densities."""
    if len(panel) == 0:
        raise EmptyPanel("cannot average an empty panel")
    return GridFunction(panel.grid, _values_matrix(panel.densities).mean(axis=0))


def demean(panel: DensityPanel, f_bar: GridFunction) -> list:
    """Subtract the mean density from every period.

    Each difference is re-projected onto the zero-integral subspace, which
    is a no-op analytically but removes quadrature roundoff.
    """
    _require_same_grid(panel.densities[0], f_bar)
    return [project_zero_integral(f - f_bar) for f in panel.densities]


def covariance_operator(w, divisor: int | None = None) -> OperatorRep:
    """Sample covariance operator (1/T) sum_t w_t (x) w_t.

    Parameters
    ----------
    divisor : int, optional
        Normalization; defaults to the number of terms.
    """
    w = list(w)
    if len(w) < 2:
        raise TooFewPeriods(f"covariance needs >= 2 periods, got {len(w)}")
    grid = _require_same_grid(*w)
    mat = _values_matrix(w)
    d = len(w) if divisor is None else int(divisor)
    return OperatorRep(grid, mat.T @ mat / d)


def lag1_cross_covariance(w) -> OperatorRep:
    """Lag-1 cross-covariance (1/T) sum over consecutive pairs w_t (x) w_{t-1}.

    The divisor is the number of periods T although only T-1 pairs exist.
    """
    w = list(w)
    if len(w) < 2:
        raise TooFewPeriods(f"cross-covariance needs >= 2 periods, got {len(w)}")
    grid = _require_same_grid(*w)
    mat = _values_matrix(w)
    return OperatorRep(grid, mat[1:].T @ mat[:-1] / len(w))


def principal_components(Q_hat: OperatorRep) -> EigenSystem:
    """Eigenpairs of the covariance operator, in descending order."""
    return eigh_operator(Q_hat)


def usable_rank(eigen: EigenSystem) -> int:
    """Largest K with lambda_K above the relative rank cutoff."""
    vals = eigen.eigenvalues
    if len(vals) == 0 or vals[0] <= 0.0:
        return 0
    return int(np.sum(vals > RANK_CUTOFF_REL * vals[0]))


def regularized_inverse(eigen: EigenSystem, K: int) -> OperatorRep:
    """Rank-K inverse sum_{k<=K} lambda_k^{-1} v_k (x) v_k.

    Raises
    ------
    RankDeficient
        If K exceeds the usable rank (lambda_K <= 1e-10 * lambda_1), meaning
        the requested truncation cannot be inverted stably on this sample.
    """
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    if K > usable_rank(eigen):
        raise RankDeficient(
            f"K={K} exceeds the usable rank {usable_rank(eigen)} of the covariance"
        )
    grid = eigen.grid
    kernel = np.zeros((grid.n, grid.n))
    for k in range(K):
        v = eigen.functions[k].values
        kernel += np.outer(v, v) / eigen.eigenvalues[k]
    return OperatorRep(grid, kernel)


def estimate_operator(P_hat: OperatorRep, Q_K_plus: OperatorRep) -> OperatorRep:
    """Plug-in autoregressive operator: the composition P Qplus."""
    return compose(P_hat, Q_K_plus)


def residuals(w, A_hat: OperatorRep) -> list:
    """Fitted residuals e_t = w_t - A w_{t-1}, for t = 2..T."""
    w = list(w)
    if len(w) < 2:
        raise TooFewPeriods(f"residuals need >= 2 periods, got {len(w)}")
    return [w[t] - apply_operator(A_hat, w[t - 1]) for t in range(1, len(w))]


def noise_covariance(resid, divisor: int | None = None) -> OperatorRep:
    """Noise covariance (1/T) sum_t e_t (x) e_t from the fitted residuals.

    The default divisor is len(resid) + 1: the residuals of a fit on T
    periods number T-1, and the normalization keeps the divisor at T.
    """
    resid = list(resid)
    if not resid:
        raise EmptyResiduals("noise covariance needs at least one residual")
    grid = _require_same_grid(*resid)
    d = len(resid) + 1 if divisor is None else int(divisor)
    mat = _values_matrix(resid)
    return OperatorRep(grid, mat.T @ mat / d)


def fit(panel: DensityPanel, K: int) -> FarModel:
    """Fit the full autoregression on a density panel with truncation K.

    Raises
    ------
    TooFewPeriods
        Fewer than 5 periods.
    RankDeficient
        K exceeds the usable rank of the estimated covariance.
    """
    T = len(panel)
    if T < 5:
        raise TooFewPeriods(f"fit needs >= 5 periods, got {T}")
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    f_bar = mean_density(panel)
    w = demean(panel, f_bar)
    Q_hat = covariance_operator(w)
    P_hat = lag1_cross_covariance(w)
    eigen = principal_components(Q_hat)
    Q_K_plus = regularized_inverse(eigen, K)
    A_hat = estimate_operator(P_hat, Q_K_plus)
    resid = residuals(w, A_hat)
    Sigma_hat = noise_covariance(resid, divisor=T)
    return FarModel(
        grid=panel.grid,
        mean_density=f_bar,
        eigen=eigen,
        K=int(K),
        A_hat=A_hat,
        Q_hat=Q_hat,
        P_hat=P_hat,
        Sigma_hat=Sigma_hat,
        residuals=tuple(resid),
        sample_size=T,
        w_initial=w[0],
        w_last=w[-1],
    )
