"""Real density matrices sampled on the in-phase amplitude axis.

A state is stored as ``values[i, j] = <x_i|rho|x_j>`` (density per unit x^2),
so ``trace = sum_i values[i, i] * dx``.  Quadrature units have vacuum
variance 1/2.  All states produced by the coherent Ising machine dynamics
are real and symmetric, which is what this module assumes.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import interp
from .errors import DegenerateState, GridLeak, InvalidArgument

MIN_POINTS = 64
DEFAULT_X_MAX = 16.0
DEFAULT_N_POINTS = 257
DEFAULT_INTERP_ORDER = 24

EPS_TRACE = 1e-10
EPS_POS = 1e-6  # relative to the largest diagonal element
LEAK_TOL = 1e-6


@dataclass(frozen=True)
class XGrid:
    x_max: float
    n_points: int

    @property
    def x_min(self):
        return -self.x_max

    @property
    def dx(self):
        return 2.0 * self.x_max / (self.n_points - 1)

    @cached_property
    def x(self):
        x = np.linspace(-self.x_max, self.x_max, self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self):
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_points, self.dx)
        w[[0, -1]] *= 0.5
        w.flags.writeable = False
        return w


def make_grid(x_max=DEFAULT_X_MAX, n_points=DEFAULT_N_POINTS):
    if not x_max > 0:
        raise InvalidArgument(f"x_max must be positive, got {x_max}")
    if int(n_points) != n_points or n_points < MIN_POINTS:
        raise InvalidArgument(f"n_points must be an integer >= {MIN_POINTS}, got {n_points}")
    return XGrid(float(x_max), int(n_points))


@dataclass(frozen=True, eq=False)
class DensityMatrixX:
    grid: XGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        n = self.grid.n_points
        if v.shape != (n, n):
            raise InvalidArgument(f"values must be {n}x{n}, got {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def trace(self):
        return float(np.dot(self.grid.weights, np.diagonal(self.values)))

    @property
    def diagonal(self):
        return np.diagonal(self.values)

    def check(self, eps_sym=1e-12):
        """Raise if the matrix violates the symmetry or positivity invariants."""
        v = self.values
        scale = max(np.abs(v).max(), 1e-300)
        if np.abs(v - v.T).max() > eps_sym * scale:
            raise InvalidArgument("density matrix is not symmetric")
        d = np.diagonal(v)
        if d.min() < -EPS_POS * d.max():
            raise InvalidArgument("density matrix has negative diagonal entries")
        return self


@dataclass(frozen=True)
class Moments:
    mean_x: float
    var_x: float
    var_p: float
    trace: float
    purity: float

    @property
    def uncertainty_product(self):
        return self.var_x * self.var_p


def _state(grid, values):
    values = 0.5 * (values + values.T)
    return DensityMatrixX(grid, values)


def pure_state(grid, psi):
    """Density matrix of a real wavefunction sampled on the grid (normalized here)."""
    psi = np.asarray(psi, dtype=float)
    norm = np.dot(grid.weights, psi * psi)
    if norm <= 0:
        raise DegenerateState("wavefunction has zero norm")
    psi = psi / np.sqrt(norm)
    return _state(grid, np.outer(psi, psi))


def vacuum_state(grid):
    x = grid.x
    psi = np.pi**-0.25 * np.exp(-0.5 * x * x)
    return _state(grid, np.outer(psi, psi))


def coherent_state(grid, x0):
    """Vacuum displaced along x so that <x> = x0 (real displacement)."""
    if abs(x0) > 0.75 * grid.x_max:
        raise InvalidArgument(f"|x0|={abs(x0)} exceeds 0.75*x_max={0.75 * grid.x_max}")
    x = grid.x
    psi = np.pi**-0.25 * np.exp(-0.5 * (x - x0) ** 2)
    return _state(grid, np.outer(psi, psi))


def squeezed_vacuum(grid, r, x0=0.0):
    """Gaussian with var_x = e^{2r}/2 and var_p = e^{-2r}/2, centred at x0."""
    x = grid.x
    var = 0.5 * np.exp(2 * r)
    psi = np.exp(-((x - x0) ** 2) / (4 * var))
    return pure_state(grid, psi)


def cat_state(grid, x0, mixed=False):
    """Superposition (or, if ``mixed``, equal mixture) of coherent states at +-x0."""
    x = grid.x
    plus = np.pi**-0.25 * np.exp(-0.5 * (x - x0) ** 2)
    minus = np.pi**-0.25 * np.exp(-0.5 * (x + x0) ** 2)
    if mixed:
        return _state(grid, 0.5 * (np.outer(plus, plus) + np.outer(minus, minus)))
    return pure_state(grid, plus + minus)


@lru_cache(maxsize=8)
def first_derivative_matrix(grid):
    """Band-limited (sinc) centred difference for d/dx; antisymmetric."""
    k = np.subtract.outer(np.arange(grid.n_points), np.arange(grid.n_points))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(k == 0, 0.0, (-1.0) ** k / (k * grid.dx))
    d.flags.writeable = False
    return d


@lru_cache(maxsize=8)
def second_derivative_matrix(grid):
    """Band-limited (sinc) centred difference for d^2/dx^2; symmetric."""
    k = np.subtract.outer(np.arange(grid.n_points), np.arange(grid.n_points))
    h2 = grid.dx**2
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(k == 0, -np.pi**2 / (3 * h2), -2.0 * (-1.0) ** k / (k * k * h2))
    d.flags.writeable = False
    return d


def p_first_moment(rho):
    """Real part of -i<p> machinery: sum_i w_i (d/dx1 rho)(x_i, x_i); zero for real states."""
    d1 = first_derivative_matrix(rho.grid)
    return float(np.dot(rho.grid.weights, np.einsum("ik,ki->i", d1, rho.values)))


def moments(rho):
    grid = rho.grid
    w = grid.weights
    d = np.diagonal(rho.values)
    tr = float(np.dot(w, d))
    if not tr > 0:
        raise DegenerateState(f"trace {tr} is not positive")
    x = grid.x
    mean = float(np.dot(w, x * d)) / tr
    var_x = float(np.dot(w, (x - mean) ** 2 * d)) / tr
    d2 = second_derivative_matrix(grid)
    p2 = -np.einsum("ik,ki->i", d2, rho.values)
    var_p = float(np.dot(w, p2)) / tr
    wv = rho.values * w[:, None]
    purity = float(np.einsum("ij,ji->", wv, wv)) / tr**2
    return Moments(mean, var_x, var_p, tr, purity)


def purity(rho):
    w = rho.grid.weights
    wv = rho.values * w[:, None]
    return float(np.einsum("ij,ji->", wv, wv)) / rho.trace**2


def renormalize(rho):
    tr = rho.trace
    if not tr > EPS_TRACE:
        raise DegenerateState(f"cannot renormalize: trace {tr:.3e} <= {EPS_TRACE:g}")
    return DensityMatrixX(rho.grid, rho.values / tr)


def edge_mass(rho, fraction=0.05):
    """Probability in the outer ``fraction`` of the grid on either side."""
    x = rho.grid.x
    edge = np.abs(x) > (1 - 2 * fraction) * rho.grid.x_max
    w = rho.grid.weights
    return float(np.dot(w[edge], np.diagonal(rho.values)[edge])) / rho.trace


def resample(rho, scale, order=DEFAULT_INTERP_ORDER):
    """Rescale the amplitude axis: rho'(x, x') = rho(x/s, x'/s) / s.

    This is the exact solution of the squeezing advection over one
    substep with ``s = exp(S * dtau)``.  Values outside the grid are zero.
    """
    if not scale > 0:
        raise InvalidArgument(f"scale must be positive, got {scale}")
    if scale == 1.0:
        return rho
    grid = rho.grid
    start, w = interp.lagrange_stencil(grid, grid.x / scale, order)
    out = interp.congruence(rho.values, (start, w / np.sqrt(scale)))
    out = _state(grid, out)
    lost = rho.trace - out.trace
    if lost > LEAK_TOL * rho.trace:
        raise GridLeak(f"resample by {scale:.6g} pushed {lost:.2e} of the trace off the grid")
    return out
