"""Truncated photon-number basis: an independent implementation of every channel.

Operators are built from the exact matrix of ``a`` in the first ``D`` number
states; nothing here shares numerics with the grid representation except
the Hermite functions used to change basis.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import InvalidArgument, TruncationOverflow
from .grid import DensityMatrixX, Moments

DEFAULT_DIM = 60
TRUNCATION_TOL = 1e-8
TOP_LEVELS = 4
CONVERSION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DensityMatrixFock:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InvalidArgument(f"values must be square, got {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.values.shape[0]

    @property
    def trace(self):
        return float(np.trace(self.values).real)

    def populations(self):
        return np.diagonal(self.values).real.copy()


def _herm(v):
    return 0.5 * (v + v.conj().T)


@lru_cache(maxsize=16)
def annihilation(dim):
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    a.flags.writeable = False
    return a


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise InvalidArgument(f"dimension must be an integer >= 2, got {dim}")


def fock_number_state(dim, n):
    _check_dim(dim)
    if not 0 <= n < dim:
        raise InvalidArgument(f"photon number {n} outside 0..{dim - 1}")
    v = np.zeros((dim, dim), dtype=complex)
    v[n, n] = 1.0
    return DensityMatrixFock(v)


def fock_vacuum(dim=DEFAULT_DIM):
    return fock_number_state(dim, 0)


def _pure(c):
    c = np.asarray(c, dtype=complex)
    c = c / np.linalg.norm(c)
    return DensityMatrixFock(np.outer(c, c.conj()))


def coherent_amplitudes(dim, alpha):
    n = np.arange(dim)
    logmag = n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1) if alpha else np.where(n == 0, 0.0, -np.inf)
    phase = np.sign(alpha) ** n if alpha else 1.0
    return np.exp(-0.5 * alpha * alpha + logmag) * phase


def fock_coherent(dim, x0):
    """Coherent state with real amplitude alpha = x0 / sqrt(2), i.e. <x> = x0."""
    _check_dim(dim)
    return _pure(coherent_amplitudes(dim, x0 / math.sqrt(2.0)))


def fock_cat(dim, x0, mixed=False):
    plus = coherent_amplitudes(dim, x0 / math.sqrt(2.0))
    minus = coherent_amplitudes(dim, -x0 / math.sqrt(2.0))
    if mixed:
        v = 0.5 * (np.outer(plus, plus) + np.outer(minus, minus))
        return DensityMatrixFock(v / np.trace(v))
    return _pure(plus + minus)


def fock_thermal(dim, nbar):
    if not nbar >= 0:
        raise InvalidArgument(f"mean photon number must be non-negative, got {nbar}")
    n = np.arange(dim)
    p = (nbar / (1 + nbar)) ** n if nbar else (n == 0).astype(float)
    return DensityMatrixFock(np.diag(p / p.sum()))


def fock_squeezed_vacuum(dim, S):
    """exp(S/2 (a^+2 - a^2))|0>: var_x = e^{2S}/2, var_p = e^{-2S}/2."""
    _check_dim(dim)
    c = np.zeros(dim)
    m = np.arange((dim + 1) // 2)
    t = math.tanh(S)
    logc = 0.5 * gammaln(2 * m + 1) - m * math.log(2.0) - gammaln(m + 1)
    with np.errstate(divide="ignore"):
        c[2 * m] = np.sign(t) ** m * np.exp(logc + m * math.log(abs(t))) if t else (m == 0)
    c /= math.sqrt(math.cosh(S))
    return _pure(c)


def _truncation_check(rho, what):
    pops = rho.populations()
    top = pops[-TOP_LEVELS:].sum()
    if top > TRUNCATION_TOL * max(rho.trace, 1e-300):
        raise TruncationOverflow(
            f"{what}: population {top:.2e} in the top {TOP_LEVELS} of {rho.dim} levels"
        )


def _rk4(rho, gen, n_steps):
    h = 1.0 / n_steps
    r = rho
    for _ in range(n_steps):
        k1 = gen(r)
        k2 = gen(r + 0.5 * h * k1)
        k3 = gen(r + 0.5 * h * k2)
        k4 = gen(r + h * k3)
        r = r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return r


def fock_psa_step(rho, S, L, n_substeps=None):
    """Integrate d rho = S/2 [a^+2 - a^2, rho] + L/2 (2 a^2 rho a^+2 - {a^+2 a^2, rho}) over unit time."""
    if S == 0 and L == 0:
        return rho
    _truncation_check(rho, "PSA input")
    dim = rho.dim
    a = annihilation(dim)
    a2 = a @ a
    h_sq = a2.T - a2
    n2 = a2.T @ a2

    def gen(r):
        out = 0.5 * S * (h_sq @ r - r @ h_sq)
        if L:
            out = out + 0.5 * L * (2 * a2 @ r @ a2.T - n2 @ r - r @ n2)
        return out

    # keep h * (spectral radius) well inside the RK4 region for accuracy
    radius = S * 2 * dim + L * dim * dim
    steps = max(n_substeps or 1, math.ceil(radius / 0.5))
    out = DensityMatrixFock(_herm(_rk4(rho.values, gen, steps)))
    _truncation_check(out, "PSA output")
    return out


@lru_cache(maxsize=64)
def _loss_kraus(dim, T):
    """E_k = sum_n sqrt(C(n,k)) T^{(n-k)/2} (1-T)^{k/2} |n-k><n|, k = 0..dim-1."""
    ops = np.zeros((dim, dim, dim))
    n = np.arange(dim)
    for k in range(dim):
        m = n[k:]
        if T == 1.0:
            coef = np.where(k == 0, 1.0, 0.0) * np.ones(m.size)
        else:
            logc = 0.5 * (gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1))
            logt = 0.5 * (m - k) * math.log(T) if T > 0 else np.where(m == k, 0.0, -np.inf)
            coef = np.exp(logc + logt + 0.5 * k * math.log1p(-T))
        ops[k, m - k, m] = coef
    ops.flags.writeable = False
    return ops


def hermite_functions(n_max, x):
    """psi_0..psi_{n_max-1} at points x, shape (n_max, len(x)); normalized recurrence."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((n_max, x.size))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, n_max - 1):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def fock_loss_and_measure(rho, T, x_m=None):
    """Beam splitter with retained amplitude sqrt(T) against vacuum.

    With ``x_m=None`` the auxiliary mode is traced out and the new state is
    returned.  Otherwise the auxiliary in-phase quadrature is projected onto
    ``x_m`` and ``(conditional_state, p(x_m))`` is returned.
    """
    if not 0 < T <= 1:
        raise InvalidArgument(f"T must lie in (0, 1], got {T}")
    _truncation_check(rho, "beam-splitter input")
    dim = rho.dim
    ops = _loss_kraus(dim, T)
    if x_m is None:
        if T == 1.0:
            return rho
        v = (ops @ rho.values @ ops.transpose(0, 2, 1)).sum(axis=0)
        return DensityMatrixFock(_herm(v))
    psi = hermite_functions(dim, [x_m])[:, 0]
    m = np.tensordot(psi, ops, axes=1)
    v = m @ rho.values @ m.T
    p = float(np.trace(v).real)
    if not p > 0:
        raise InvalidArgument(f"outcome x_m={x_m} has zero probability")
    return DensityMatrixFock(_herm(v / p)), p


def fock_measurement_density(rho, T, x_m):
    return fock_loss_and_measure(rho, T, x_m)[1]


def fock_displace(rho, d, pad=32):
    """Shift the in-phase amplitude by d (displacement alpha = d / sqrt(2))."""
    if d == 0:
        return rho
    _truncation_check(rho, "displacement input")
    dim = rho.dim
    big = annihilation(dim + pad)
    u = expm((d / math.sqrt(2.0)) * (big.T - big))[:dim, :dim]
    out = DensityMatrixFock(_herm(u @ rho.values @ u.T))
    _truncation_check(out, "displacement output")
    return out


def fock_moments(rho):
    dim = rho.dim
    a = annihilation(dim)
    x = (a + a.T) / math.sqrt(2.0)
    p = (a - a.T) / (1j * math.sqrt(2.0))
    v = rho.values
    tr = rho.trace

    def ev(op):
        return float(np.trace(op @ v).real) / tr

    mx = ev(x)
    mp = ev(p)
    # second moments: use exact (a+a^+)^2 = a^2 + a^+2 + 2 a^+ a + 1 so truncation does not bias them
    n = np.diag(np.arange(dim, dtype=float))
    a2 = a @ a
    x2 = 0.5 * (a2 + a2.T + 2 * n + np.eye(dim))
    p2 = -0.5 * (a2 + a2.T - 2 * n - np.eye(dim))
    purity = float(np.trace(v @ v).real) / tr**2
    return Moments(mx, ev(x2) - mx * mx, ev(p2) - mp * mp, tr, purity)


def grid_from_fock(rho, grid):
    """<x|rho|x'> = sum_mn psi_m(x) rho_mn psi_n(x'); only the real part survives for real states."""
    v = rho.values
    if np.abs(v.imag).max() > 1e-8 * max(np.abs(v).max(), 1e-300):
        raise InvalidArgument("Fock state has complex coefficients; not representable as a real grid state")
    psi = hermite_functions(rho.dim, grid.x)
    out = psi.T @ v.real @ psi
    out = DensityMatrixX(grid, 0.5 * (out + out.T))
    if abs(out.trace - rho.trace) > CONVERSION_TOL * rho.trace:
        raise TruncationOverflow(f"grid holds {out.trace:.8f} of trace {rho.trace:.8f}")
    return out


def fock_from_grid(rho, dim=DEFAULT_DIM):
    """Project onto the first ``dim`` number states by trapezoidal quadrature."""
    grid = rho.grid
    psi = hermite_functions(dim, grid.x) * grid.weights
    v = psi @ rho.values @ psi.T
    out = DensityMatrixFock(0.5 * (v + v.T))
    if abs(out.trace - rho.trace) > CONVERSION_TOL * rho.trace:
        raise TruncationOverflow(f"{dim} levels hold {out.trace:.8f} of trace {rho.trace:.8f}")
    return out


def trace_distance(a, b):
    """Half the trace norm of a - b, for two Fock states or two grid states."""
    if isinstance(a, DensityMatrixFock) and isinstance(b, DensityMatrixFock):
        if a.dim != b.dim:
            raise InvalidArgument(f"dimension mismatch {a.dim} vs {b.dim}")
        diff = a.values - b.values
    elif isinstance(a, DensityMatrixX) and isinstance(b, DensityMatrixX):
        if a.grid != b.grid:
            raise InvalidArgument("grid mismatch")
        sw = np.sqrt(a.grid.weights)
        diff = sw[:, None] * (a.values - b.values) * sw[None, :]
    else:
        raise InvalidArgument("both states must use the same basis")
    return 0.5 * float(np.abs(np.linalg.eigvalsh(_herm(diff))).sum())


def fock_round_trip(states, params, J, x_m):
    """One round trip (PSA, averaged background loss, measurement, feedback) with given outcomes.

    ``params`` carries ``psa.S``, ``psa.L``, ``T``, ``T_prime`` and ``R`` as in
    ``engine.RoundTripParams``; ``x_m`` holds one injected outcome per pulse.
    Returns ``(states, probability densities of the outcomes)``.
    """
    J = np.asarray(J, dtype=float)
    out, dens = [], []
    for rho, xm in zip(states, x_m):
        rho = fock_psa_step(rho, params.psa.S, params.psa.L)
        rho = fock_loss_and_measure(rho, params.T_prime)
        rho, p = fock_loss_and_measure(rho, params.T, xm)
        out.append(rho)
        dens.append(p)
    if params.R > 0:
        d = params.R * (J @ (np.asarray(x_m, dtype=float) / math.sqrt(1.0 - params.T)))
        out = [fock_displace(rho, di) for rho, di in zip(out, d)]
    return out, np.array(dens)
