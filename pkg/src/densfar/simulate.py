"""Simulation machinery: sampling from grid densities, generating density
panels from a known autoregression, and the Monte Carlo study harness.

A generator holds a transition operator, a mean density, and a noise source
(a pool of residual functions resampled with replacement, or a Gaussian law
with a given covariance operator). Panels are simulated by iterating the
autoregression from zero through a burn-in, then converting the kept states
to densities. The study harness re-estimates densities from finite samples
drawn by rejection sampling and compares the autoregressive forecast with
the AVE/LAST benchmarks against the true simulated density.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import median

import numpy as np

from ._threads import parallel_map
from .errors import (
    DegenerateDensity,
    DensfarError,
    TooManyDropped,
    UnstableGenerator,
)
from .estimation import FarModel, fit
from .forecast import (
    MEASURES,
    PREDICTORS,
    error_metrics,
    forecast_one_step,
    predictor_ave,
    predictor_last,
    to_density,
)
from .grid import (
    GridFunction,
    GridSpec,
    OperatorRep,
    eigh_operator,
    norm,
    _check_density_values,
    _require_same_grid,
)
from .kde import DensityPanel, RawPanel, estimate_panel

__all__ = [
    "FarGenerator",
    "StudyConfig",
    "StudyResult",
    "make_cosine_generator",
    "acceptance_sample",
    "simulate_far",
    "run_study",
]

# Total simulated length when no burn-in is given: the kept T+1 periods are
# the tail of a 1000-period run.
DEFAULT_TOTAL_PERIODS = 1000

_STABILITY_FACTOR = 1e6


@dataclass(frozen=True, eq=False)
class FarGenerator:
    """Data-generating process for density panels.

    Noise comes from `residual_pool` (drawn i.i.d. with replacement after
    centering) when present, otherwise from a mean-zero Gaussian with
    covariance `noise_covariance`.
    """

    grid: GridSpec
    transition: OperatorRep
    mean_density: GridFunction
    residual_pool: tuple | None = None
    noise_covariance: OperatorRep | None = None

    def __post_init__(self):
        _require_same_grid(self.transition, self.mean_density)
        if self.residual_pool is None and self.noise_covariance is None:
            raise ValueError("generator needs a residual pool or a noise covariance")
        if self.residual_pool is not None:
            pool = tuple(self.residual_pool)
            if not pool:
                raise ValueError("residual pool must be nonempty")
            _require_same_grid(self.transition, *pool)
            object.__setattr__(self, "residual_pool", pool)
        if self.noise_covariance is not None:
            _require_same_grid(self.transition, self.noise_covariance)

    @classmethod
    def from_model(cls, model: FarModel) -> "FarGenerator":
        """Generator that mimics a fitted model: its operator, mean, and
        residual pool."""
        return cls(
            grid=model.grid,
            transition=model.A_hat,
            mean_density=model.mean_density,
            residual_pool=model.residuals,
        )

    def noise_sampler(self):
        """Return draw(rng) -> ndarray of noise values on the grid."""
        if self.residual_pool is not None:
            pool = np.stack([r.values for r in self.residual_pool])
            pool = pool - pool.mean(axis=0)

            def draw(rng):
                return pool[rng.integers(0, len(pool))]

            return draw
        eigen = eigh_operator(self.noise_covariance)
        lam = eigen.eigenvalues
        keep = lam > 1e-14 * (lam[0] if len(lam) else 0.0)
        if not np.any(keep):
            zero = np.zeros(self.grid.n)
            return lambda rng: zero
        factor = np.stack(
            [f.values for f, k in zip(eigen.functions, keep) if k]
        ).T * np.sqrt(lam[keep])

        def draw(rng):
            return factor @ rng.standard_normal(factor.shape[1])

        return draw


def default_mean_density(grid: GridSpec) -> GridFunction:
    """Smooth unimodal density bounded away from zero on the support.

    A bell curve centered on the support mixed with a 15% uniform floor,
    normalized on the grid; the floor keeps moderate fluctuations of the
    simulated state from clipping at zero.
    """
    mid = 0.5 * (grid.a + grid.b)
    width = (grid.b - grid.a) / 6.0
    bell = np.exp(-0.5 * ((grid.points - mid) / width) ** 2)
    bell /= float(np.dot(grid.weights, bell))
    uniform = 1.0 / (grid.b - grid.a)
    raw = 0.85 * bell + 0.15 * uniform
    return GridFunction(grid, raw / float(np.dot(grid.weights, raw)))


def cosine_modes(grid: GridSpec, m: int) -> list:
    """First m zero-integral cosine harmonics, quadrature-orthonormalized."""
    out = []
    s = (grid.points - grid.a) / (grid.b - grid.a)
    for k in range(1, m + 1):
        vals = np.cos(k * np.pi * s)
        # already orthogonal under trapezoid weights; clean roundoff anyway
        for u in out:
            vals = vals - float(np.dot(grid.weights * u.values, vals)) * u.values
        vals = vals - float(np.dot(grid.weights, vals)) / (grid.b - grid.a)
        f = GridFunction(grid, vals)
        out.append(f * (1.0 / norm(f)))
    return out


def make_cosine_generator(
    grid: GridSpec,
    strengths,
    noise_sds,
    mean: GridFunction | None = None,
) -> FarGenerator:
    """Synthetic generator with cosine-harmonic eigenstructure.

    The transition operator is sum_k strengths[k] phi_k (x) phi_k and the
    Gaussian noise covariance sum_k noise_sds[k]^2 phi_k (x) phi_k over the
    orthonormal cosine modes phi_k, so the process reduces to independent
    scalar AR(1) components with known coefficients.
    """
    strengths = np.asarray(strengths, dtype=np.float64)
    noise_sds = np.asarray(noise_sds, dtype=np.float64)
    if strengths.shape != noise_sds.shape:
        raise ValueError("strengths and noise_sds must have equal length")
    modes = cosine_modes(grid, len(strengths))
    a_kernel = np.zeros((grid.n, grid.n))
    s_kernel = np.zeros((grid.n, grid.n))
    for kappa, sd, phi in zip(strengths, noise_sds, modes):
        block = np.outer(phi.values, phi.values)
        a_kernel += kappa * block
        s_kernel += sd * sd * block
    return FarGenerator(
        grid=grid,
        transition=OperatorRep(grid, a_kernel),
        mean_density=mean if mean is not None else default_mean_density(grid),
        noise_covariance=OperatorRep(grid, s_kernel),
    )


def _sample_by_rejection(f: GridFunction, n: int, rng) -> tuple:
    grid = f.grid
    values = _check_density_values(f)
    f_max = float(values.max())
    if f_max <= 0.0:
        raise DegenerateDensity("target density has no positive mass")
    draws = np.empty(n)
    filled = 0
    proposed = 0
    accepted = 0
    width = grid.b - grid.a
    # mass/(width*f_max) proposals are accepted on average
    rate_guess = max(1.0 / (width * f_max), 1e-3)
    while filled < n:
        chunk = int(np.ceil((n - filled) / rate_guess * 1.2)) + 16
        x = rng.uniform(grid.a, grid.b, size=chunk)
        u = rng.uniform(0.0, 1.0, size=chunk)
        accept = u <= np.interp(x, grid.points, values) / f_max
        proposed += chunk
        kept = x[accept]
        accepted += len(kept)
        take = min(len(kept), n - filled)
        draws[filled : filled + take] = kept[:take]
        filled += take
    return draws, proposed, accepted


def acceptance_sample(f: GridFunction, n: int, seed) -> np.ndarray:
    """Draw n observations from a grid density by rejection sampling.

    Proposals are uniform on the support; a proposal x survives when
    u <= f(x)/f_max with f evaluated by linear interpolation between grid
    points and u uniform on [0, 1]. Deterministic for a given seed.

    Raises
    ------
    DegenerateDensity
        If the density has no positive values.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    draws, _, _ = _sample_by_rejection(f, n, np.random.default_rng(seed))
    return draws


def simulate_far(
    generator: FarGenerator,
    T: int,
    seed,
    burn_in: int | None = None,
) -> DensityPanel:
    """Simulate T+1 periods of densities from the generator.

    The state starts at zero, runs through `burn_in` discarded periods
    (default: a total simulated length of 1000), and each kept state is
    converted to a density by adding the mean, clipping, and rescaling.
    Period labels are zero-padded integers starting at 1.

    Raises
    ------
    UnstableGenerator
        If the running state norm exceeds 1e6 times the mean density norm,
        indicating an unstable transition operator.
    """
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    if burn_in is None:
        burn_in = max(0, DEFAULT_TOTAL_PERIODS - (T + 1))
    if burn_in < 0:
        raise ValueError(f"need burn_in >= 0, got {burn_in}")
    rng = np.random.default_rng(seed)
    grid = generator.grid
    draw = generator.noise_sampler()
    a_w = generator.transition.kernel * grid.weights[None, :]
    bound = _STABILITY_FACTOR * norm(generator.mean_density)
    sqrt_w = np.sqrt(grid.weights)
    w = np.zeros(grid.n)
    kept = np.empty((T + 1, grid.n))
    total = burn_in + T + 1
    for t in range(total):
        w = a_w @ w + draw(rng)
        if float(np.linalg.norm(sqrt_w * w)) > bound:
            raise UnstableGenerator(
                f"state norm exceeded {_STABILITY_FACTOR:g} x mean norm at period {t + 1}"
            )
        if t >= burn_in:
            kept[t - burn_in] = w
    # clip-and-rescale conversion to densities, vectorized over periods
    raw = np.clip(generator.mean_density.values[None, :] + kept, 0.0, None)
    masses = raw @ grid.weights
    if float(masses.min()) <= 1e-12:
        raise UnstableGenerator("simulated state wiped out all density mass")
    raw /= masses[:, None]
    densities = [GridFunction._wrap(grid, row) for row in raw]
    width = len(str(T + 1))
    labels = [str(i + 1).zfill(width) for i in range(T + 1)]
    return DensityPanel._wrap(grid, densities, labels)


@dataclass(frozen=True, eq=False)
class StudyConfig:
    """Configuration of a Monte Carlo forecast study.

    For every (T, N) pair and iteration: simulate T+1 true densities, draw
    N observations per period, re-estimate the densities by KDE, fit the
    autoregression with truncation K on the first T periods, and score the
    FAR/AVE/LAST forecasts of period T+1 against the true density.
    """

    generator: FarGenerator
    T_values: tuple
    N_values: tuple
    iterations: int
    seed: int
    burn_in: int | None = None
    K: int = 4
    kernel: str = "normal"

    def __post_init__(self):
        object.__setattr__(self, "T_values", tuple(int(t) for t in self.T_values))
        object.__setattr__(self, "N_values", tuple(int(n) for n in self.N_values))
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if any(t < 10 for t in self.T_values) or not self.T_values:
            raise ValueError("every T must be >= 10")
        if any(n < 10 for n in self.N_values) or not self.N_values:
            raise ValueError("every N must be >= 10")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass(frozen=True, eq=False)
class StudyResult:
    """Aggregated study table.

    cells maps (T, N, predictor, measure) to (mean, median); stderrs maps
    the same key to the Monte Carlo standard error of the mean; dropped
    maps (T, N) to the number of failed iterations.
    """

    T_values: tuple
    N_values: tuple
    iterations: int
    cells: dict
    stderrs: dict
    dropped: dict

    def to_rows(self) -> list:
        """Wide rows shaped like the study table: one row per (T, measure),
        one mean and one median column per (N, predictor)."""
        rows = []
        for T in self.T_values:
            for measure in MEASURES:
                row = {"T": T, "measure": measure}
                for N in self.N_values:
                    for predictor in PREDICTORS:
                        mean_val, med_val = self.cells[(T, N, predictor, measure)]
                        row[f"N{N}_{predictor}_mean"] = mean_val
                        row[f"N{N}_{predictor}_median"] = med_val
                rows.append(row)
        return rows


# Fraction of failed iterations tolerated per study cell.
_DROP_CEILING = 0.02


def _study_iteration(config: StudyConfig, T: int, N: int, it: int):
    panel_true = simulate_far(
        config.generator,
        T,
        seed=(config.seed, T, N, it, 0),
        burn_in=config.burn_in,
    )
    blocks = [
        acceptance_sample(f, N, seed=(config.seed, T, N, it, 1, t))
        for t, f in enumerate(panel_true.densities)
    ]
    raw = RawPanel(labels=panel_true.labels, blocks=tuple(blocks))
    estimated = estimate_panel(raw, config.generator.grid, config.kernel)
    train = estimated.head(T)
    truth = panel_true.densities[T]
    model = fit(train, config.K)
    f_far = to_density(forecast_one_step(model, model.w_last), model.mean_density)
    return {
        "FAR": error_metrics(f_far, truth),
        "AVE": error_metrics(predictor_ave(train), truth),
        "LAST": error_metrics(predictor_last(train), truth),
    }


def run_study(config: StudyConfig) -> StudyResult:
    """Run the Monte Carlo study over every (T, N) cell.

    Iterations are independent with random streams derived from the seed
    and the iteration index, so results do not depend on execution order.
    Failed iterations are dropped and counted; more than 2% failures in a
    cell aborts the study.
    """
    cells = {}
    stderrs = {}
    dropped = {}
    for T in config.T_values:
        for N in config.N_values:
            def run_one(it, T=T, N=N):
                try:
                    return _study_iteration(config, T, N, it)
                except DensfarError:
                    return None
            outcomes = parallel_map(run_one, range(config.iterations))
            good = [o for o in outcomes if o is not None]
            n_dropped = config.iterations - len(good)
            if n_dropped > _DROP_CEILING * config.iterations:
                raise TooManyDropped(
                    f"cell (T={T}, N={N}): {n_dropped}/{config.iterations} "
                    f"iterations failed"
                )
            dropped[(T, N)] = n_dropped
            for predictor in PREDICTORS:
                for measure in MEASURES:
                    vals = np.array([o[predictor].as_dict()[measure] for o in good])
                    cells[(T, N, predictor, measure)] = (
                        float(vals.mean()),
                        float(median(vals.tolist())),
                    )
                    stderrs[(T, N, predictor, measure)] = float(
                        vals.std(ddof=1) / np.sqrt(len(vals))
                    ) if len(vals) > 1 else 0.0
    return StudyResult(
        T_values=config.T_values,
        N_values=config.N_values,
        iterations=config.iterations,
        cells=cells,
        stderrs=stderrs,
        dropped=dropped,
    )
