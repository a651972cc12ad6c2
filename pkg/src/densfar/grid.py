"""Discretized L2([a, b]) numerics on a shared uniform grid.

Every function in the pipeline (densities, demeaned densities, features,
eigenfunctions) is a vector of values on one :class:`GridSpec`; every
integral operator is an n-by-n kernel matrix acting through trapezoid
quadrature:

    (K g)(x_i) = sum_j weights[j] * kernel[i, j] * g(x_j)

Inner products, adjoints, eigen- and singular decompositions are all taken
with respect to the quadrature geometry, so eigenfunctions come out
orthonormal in L2, not in the Euclidean sense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (
    GridMismatch,
    GridTooSmall,
    InvalidSupport,
    NegativeDensity,
    NonPSD,
    NotSymmetric,
)

__all__ = [
    "GridSpec",
    "GridFunction",
    "OperatorRep",
    "EigenSystem",
    "SingularSystem",
    "make_grid",
    "inner",
    "norm",
    "project_zero_integral",
    "outer",
    "apply_operator",
    "adjoint",
    "compose",
    "quadratic_form",
    "eigh_operator",
    "svd_operator",
    "cdf_from_density",
    "quantile",
]

MIN_GRID_SIZE = 16

# Relative window inside which tiny negative eigenvalues of a PSD operator
# are treated as roundoff and clipped to zero.
_PSD_CLIP_REL = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform grid over a compact support [a, b] with trapezoid weights.

    Attributes
    ----------
    a, b : float
        Support bounds, a < b.
    n : int
        Number of grid points (>= 16).
    points : ndarray, shape (n,)
        Strictly increasing abscissae with points[0] = a, points[-1] = b.
    weights : ndarray, shape (n,)
        Nonnegative quadrature weights summing to b - a.
    """

    a: float
    b: float
    n: int
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        object.__setattr__(self, "weights", _readonly(self.weights))

    @property
    def h(self) -> float:
        """Grid spacing (b - a) / (n - 1)."""
        return (self.b - self.a) / (self.n - 1)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            self.n == other.n
            and self.a == other.a
            and self.b == other.b
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self) -> int:
        return hash((self.a, self.b, self.n))

    def function(self, values) -> "GridFunction":
        """Wrap raw values as a GridFunction on this grid."""
        return GridFunction(self, values)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n))

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.n, float(c)))


def make_grid(a: float, b: float, n: int) -> GridSpec:
    """Build a uniform grid on [a, b] with trapezoid quadrature weights.

    End weights are h/2, interior weights h, with h = (b - a)/(n - 1), so
    the weights sum to b - a exactly up to roundoff.

    Raises
    ------
    InvalidSupport
        If a >= b.
    GridTooSmall
        If n < 16.
    """
    a = float(a)
    b = float(b)
    n = int(n)
    if not (a < b):
        raise InvalidSupport(f"need a < b, got a={a}, b={b}")
    if n < MIN_GRID_SIZE:
        raise GridTooSmall(f"need n >= {MIN_GRID_SIZE}, got n={n}")
    points = np.linspace(a, b, n)
    h = (b - a) / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = h / 2.0
    return GridSpec(a=a, b=b, n=n, points=points, weights=weights)


def _require_same_grid(*objs) -> GridSpec:
    grid = objs[0].grid
    for other in objs[1:]:
        if other.grid is not grid and other.grid != grid:
            raise GridMismatch(
                f"operands live on different grids: "
                f"[{grid.a}, {grid.b}] n={grid.n} vs "
                f"[{other.grid.a}, {other.grid.b}] n={other.grid.n}"
            )
    return grid


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real-valued function represented by its values on a GridSpec."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.n,):
            raise ValueError(
                f"expected {self.grid.n} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def _wrap(cls, grid: GridSpec, values: np.ndarray) -> "GridFunction":
        # fast path for freshly computed arrays the library owns: linear
        # combinations of validated inputs stay finite, so skip the checks
        obj = object.__new__(cls)
        values.setflags(write=False)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "values", values)
        return obj

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction._wrap(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction._wrap(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction._wrap(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction._wrap(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class OperatorRep:
    """Integral operator on the grid, stored as its kernel matrix.

    kernel[i, j] = k(points[i], points[j]); the action on g is the weighted
    matrix-vector product (K g)(x_i) = sum_j weights[j] kernel[i, j] g(x_j).
    """

    grid: GridSpec
    kernel: np.ndarray

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"expected {self.grid.n}x{self.grid.n} kernel, "
                f"got shape {kernel.shape}"
            )
        if not np.all(np.isfinite(kernel)):
            raise ValueError("operator kernel must be finite")
        object.__setattr__(self, "kernel", _readonly(kernel))


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues (descending) and quadrature-orthonormal eigenfunctions."""

    grid: GridSpec
    eigenvalues: np.ndarray
    functions: tuple

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        object.__setattr__(self, "functions", tuple(self.functions))

    def __len__(self) -> int:
        return len(self.eigenvalues)


class SingularSystem(NamedTuple):
    """Top singular triplets of an operator under the quadrature geometry."""

    values: np.ndarray
    left: tuple
    right: tuple


def inner(f: GridFunction, g: GridFunction) -> float:
    """Quadrature inner product sum_i w_i f_i g_i, approximating the L2 one."""
    grid = _require_same_grid(f, g)
    return float(np.dot(grid.weights * f.values, g.values))


def norm(f: GridFunction) -> float:
    """Quadrature L2 norm of f."""
    return float(np.sqrt(max(inner(f, f), 0.0)))


def project_zero_integral(f: GridFunction) -> GridFunction:
    """Project f onto the subspace of zero-integral functions.

    Returns f - (<1, f> / (b - a)) * 1, whose quadrature integral vanishes.
    Idempotent: functions already integrating to zero pass through unchanged.
    """
    grid = f.grid
    mean_level = float(np.dot(grid.weights, f.values)) / (grid.b - grid.a)
    return GridFunction._wrap(grid, f.values - mean_level)


def outer(u: GridFunction, v: GridFunction) -> OperatorRep:
    """Tensor product operator u (x) v with kernel u_i * v_j.

    Its action is (u (x) v) g = <v, g> u.
    """
    grid = _require_same_grid(u, v)
    return OperatorRep(grid, np.outer(u.values, v.values))


def apply_operator(K: OperatorRep, g: GridFunction) -> GridFunction:
    """Apply the integral operator to g via trapezoid quadrature."""
    grid = _require_same_grid(K, g)
    return GridFunction._wrap(grid, K.kernel @ (grid.weights * g.values))


def adjoint(K: OperatorRep) -> OperatorRep:
    """Adjoint under the quadrature inner product: the transposed kernel."""
    return OperatorRep(K.grid, K.kernel.T)


def compose(K1: OperatorRep, K2: OperatorRep) -> OperatorRep:
    """Operator composition K1 after K2 under quadrature.

    Kernel is kernel1 @ diag(weights) @ kernel2, so that
    apply(compose(K1, K2), g) == apply(K1, apply(K2, g)).
    """
    grid = _require_same_grid(K1, K2)
    return OperatorRep(grid, K1.kernel @ (grid.weights[:, None] * K2.kernel))


def quadratic_form(K: OperatorRep, v: GridFunction) -> float:
    """<v, K v> under the quadrature inner product."""
    grid = _require_same_grid(K, v)
    wv = grid.weights * v.values
    return float(wv @ K.kernel @ wv)


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    # Deterministic orientation: largest-magnitude entry is positive.
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def eigh_operator(K: OperatorRep) -> EigenSystem:
    """Spectral decomposition of a symmetric PSD operator.

    Solves the weighted eigenproblem by symmetrizing with W^{1/2}
    (W = diag(weights)): eigenvectors of W^{1/2} kernel W^{1/2} mapped back
    through W^{-1/2} are orthonormal under the quadrature inner product.
    Eigenvalues are returned in descending order; negatives inside the
    relative roundoff window are clipped to zero.

    Raises
    ------
    NotSymmetric
        If the kernel is not symmetric within 1e-10 (relative).
    NonPSD
        If an eigenvalue falls below -1e-12 relative to the largest magnitude.
    """
    grid = K.grid
    kernel = K.kernel
    scale = float(np.max(np.abs(kernel))) if kernel.size else 0.0
    if float(np.max(np.abs(kernel - kernel.T))) > 1e-10 * (1.0 + scale):
        raise NotSymmetric("kernel is not symmetric within tolerance")
    sqrt_w = np.sqrt(grid.weights)
    sym = sqrt_w[:, None] * kernel * sqrt_w[None, :]
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    vmax = float(np.max(np.abs(vals))) if vals.size else 0.0
    tol = _PSD_CLIP_REL * vmax
    if vals.size and float(vals.min()) < -tol:
        raise NonPSD(
            f"eigenvalue {vals.min():.3e} below the PSD window of {-tol:.3e}"
        )
    vals = np.clip(vals, 0.0, None)
    functions = tuple(
        GridFunction._wrap(grid, _fix_sign(vecs[:, k] / sqrt_w))
        for k in range(len(vals))
    )
    return EigenSystem(grid=grid, eigenvalues=vals, functions=functions)


def svd_operator(K: OperatorRep, m: int) -> SingularSystem:
    """Top-m singular triplets of the operator in the quadrature geometry.

    Computed from the dense SVD of W^{1/2} kernel W^{1/2}; left and right
    singular functions are mapped back through W^{-1/2} and carry the same
    deterministic sign convention as eigenfunctions (each right function's
    largest-magnitude entry is positive, the left function flipped along
    with it so that kernel reconstruction is preserved).
    """
    grid = K.grid
    if not 1 <= m <= grid.n:
        raise ValueError(f"need 1 <= m <= n={grid.n}, got m={m}")
    sqrt_w = np.sqrt(grid.weights)
    sym = sqrt_w[:, None] * K.kernel * sqrt_w[None, :]
    u_mat, s, vt = np.linalg.svd(sym)
    left = []
    right = []
    for k in range(m):
        uv = u_mat[:, k] / sqrt_w
        vv = vt[k, :] / sqrt_w
        i = int(np.argmax(np.abs(vv)))
        if vv[i] < 0:
            vv = -vv
            uv = -uv
        left.append(GridFunction._wrap(grid, uv))
        right.append(GridFunction._wrap(grid, vv))
    return SingularSystem(values=_readonly(s[:m]), left=tuple(left), right=tuple(right))


def _check_density_values(f: GridFunction) -> np.ndarray:
    values = f.values
    floor = -1e-12 * max(1.0, float(np.max(np.abs(values))) if values.size else 0.0)
    if float(values.min()) < floor:
        raise NegativeDensity(
            f"density has negative values down to {values.min():.3e}"
        )
    return np.clip(values, 0.0, None)


def cdf_from_density(f: GridFunction) -> GridFunction:
    """Cumulative trapezoid integral of a nonnegative density.

    F(a) = 0, F is nondecreasing, and F(b) equals the quadrature integral
    of f (so 1 for a unit-mass density). Roundoff-level negatives in f are
    clipped before integrating.
    """
    values = _check_density_values(f)
    cdf = cumulative_trapezoid(values, f.grid.points, initial=0.0)
    return GridFunction(f.grid, cdf)


def quantile(f: GridFunction, p: float) -> float:
    """Quantile of a density: smallest x with F(x) >= p, linearly interpolated.

    Requires 0 < p < 1 and a nonnegative f.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"need 0 < p < 1, got p={p}")
    cdf = cdf_from_density(f).values
    points = f.grid.points
    if p <= cdf[0]:
        return float(points[0])
    if p >= cdf[-1]:
        return float(points[-1])
    i = int(np.searchsorted(cdf, p, side="left"))
    # cdf[i-1] < p <= cdf[i]; interpolate inside the bracketing cell
    rise = cdf[i] - cdf[i - 1]
    if rise <= 0.0:
        return float(points[i])
    frac = (p - cdf[i - 1]) / rise
    return float(points[i - 1] + frac * (points[i] - points[i - 1]))
