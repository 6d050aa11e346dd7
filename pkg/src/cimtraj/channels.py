"""The four per-round-trip maps: PSA, background loss, homodyne, feedback.

Beam-splitter convention: ``T`` is the retained power fraction, so the
signal keeps amplitude ``sqrt(T)`` and the measured port receives
``sqrt(1 - T)`` of the signal plus vacuum noise.  The Kraus operator for
outcome ``x_m`` is

    <x_f|M|x_i> = pi^{-1/4} delta(x_i - sqrt(T) x_f - sqrt(1-T) x_m)
                  exp(-(sqrt(T) x_m - sqrt(1-T) x_f)^2 / 2)

which satisfies ``int dx_m M^T M = 1``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq
from scipy.special import ndtr

from . import interp
from .errors import DegenerateState, GridLeak, IntegrationUnstable, InvalidArgument
from .grid import (
    DEFAULT_INTERP_ORDER,
    LEAK_TOL,
    DensityMatrixX,
    first_derivative_matrix,
    renormalize,
    resample,
)

DEFAULT_SUBSTEPS = 4
# classical RK4 is stable for real negative h*lambda down to about -2.785
RK4_STABLE = 2.0  # RK4 is stable to h*rate ~ 2.78 on the real axis; keep a margin
MAX_SUBSTEPS = 512
TRACE_DRIFT_TOL = 1e-6
MODE_EIG_TOL = 1e-6
ACTIVE_PAD = 16


@dataclass(frozen=True)
class PsaParams:
    """Per-round-trip PSA settings: squeezing rate S = g*beta*t and two-photon loss L = g^2*t."""

    S: float
    L: float
    n_substeps: int = DEFAULT_SUBSTEPS

    def __post_init__(self):
        if not 0 <= self.S < 1:
            raise InvalidArgument(f"S must lie in [0, 1), got {self.S}")
        if not self.L >= 0:
            raise InvalidArgument(f"L must be non-negative, got {self.L}")
        if int(self.n_substeps) != self.n_substeps or self.n_substeps < 1:
            raise InvalidArgument(f"n_substeps must be a positive integer, got {self.n_substeps}")


@dataclass(frozen=True)
class MeasurementOutcome:
    x_m: float
    prob_density: float


def _check_transmission(T, name="T"):
    if not 0 < T <= 1:
        raise InvalidArgument(f"{name} must lie in (0, 1], got {T}")


# --------------------------------------------------------------------------
# phase-sensitive amplifier

@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Eigenbasis of the grid-discretized a^2-dagger a^2 operator.

    ``vectors[:, k]`` are orthonormal in the plain l2 sense (no dx factor),
    sorted by eigenvalue; only modes whose eigenvalue matches n(n-1) to
    ``MODE_EIG_TOL`` are kept, i.e. the levels the grid resolves.
    ``jump`` is a^2 expressed in this basis.
    """

    grid: object
    vectors: np.ndarray
    eigenvalues: np.ndarray
    jump: np.ndarray
    full_max_eigenvalue: float

    @property
    def n_modes(self):
        return self.eigenvalues.size


def grid_annihilation(grid):
    """a = (x + d/dx)/sqrt(2) on the grid, with the band-limited derivative."""
    return (np.diag(grid.x) + first_derivative_matrix(grid)) / math.sqrt(2.0)


@lru_cache(maxsize=4)
def mode_basis(grid):
    a = grid_annihilation(grid)
    jump = a @ a
    lam, vec = eigh(jump.T @ jump)
    # n = 0 and n = 1 share the eigenvalue 0; separate them with the number operator
    pair = vec[:, :2]
    _, rot = eigh(pair.T @ (a.T @ a) @ pair)
    vec[:, :2] = pair @ rot
    n = np.arange(lam.size, dtype=float)
    expected = n * (n - 1)
    expected[:2] = 0.0
    bad = np.abs(lam - expected) > MODE_EIG_TOL * np.maximum(expected, 1.0)
    bad[:2] = np.abs(lam[:2]) > MODE_EIG_TOL
    n_modes = int(np.argmax(bad)) if bad.any() else lam.size
    if n_modes < 8:
        raise InvalidArgument("grid resolves fewer than 8 oscillator levels; enlarge it")
    v = np.ascontiguousarray(vec[:, :n_modes])
    return ModeBasis(grid, v, lam[:n_modes].copy(), v.T @ jump @ v, float(lam[-1]))


@lru_cache(maxsize=1024)
def _modal_resample(grid, scale, order):
    basis = mode_basis(grid)
    start, w = interp.lagrange_stencil(grid, grid.x / scale, order)
    pv = interp.apply_rows(basis.vectors, (start, w / math.sqrt(scale)))
    return basis.vectors.T @ pv


@lru_cache(maxsize=1024)
def _mode_rows(grid, n_active):
    """Grid rows on which any of the lowest ``n_active`` modes is non-negligible."""
    amp = np.abs(mode_basis(grid).vectors[:, :n_active]).max(axis=1)
    idx = np.nonzero(amp > 1e-17)[0]
    return int(idx[0]), int(idx[-1]) + 1


def _rk4_modal(r, jump, decay, h):
    """One classical RK4 step of d r = L J r J^T - decay * r.

    ``jump`` is already scaled by sqrt(L) and ``decay[i, j] = L (lam_i + lam_j) / 2``.
    RK4 conserves the trace exactly because the generator does.
    """

    def F(m):
        return jump @ m @ jump.T - decay * m

    k1 = F(r)
    k2 = F(r + 0.5 * h * k1)
    k3 = F(r + 0.5 * h * k2)
    k4 = F(r + h * k3)
    return r + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _integrate_modal(r, basis, S, L, n_sub, order, n_active):
    grid = basis.grid
    h = 1.0 / n_sub
    lam = basis.eigenvalues[:n_active]
    jump = math.sqrt(L) * basis.jump[:n_active, :n_active]
    decay = 0.5 * L * (lam[:, None] + lam[None, :])
    r = r[:n_active, :n_active]
    if S:
        half = _modal_resample(grid, math.exp(0.5 * S * h), order)[:n_active, :n_active]
        full = _modal_resample(grid, math.exp(S * h), order)[:n_active, :n_active]
        r = half @ r @ half.T
    for i in range(n_sub):
        if L:
            r = _rk4_modal(r, jump, decay, h)
        if S:
            m = half if i == n_sub - 1 else full
            r = m @ r @ m.T
    return r


def substeps_for(params, max_eigenvalue):
    """Substep count: at least ``params.n_substeps`` and within RK4's stability limit."""
    need = math.ceil(params.L * max_eigenvalue / RK4_STABLE) if params.L else 1
    return int(min(MAX_SUBSTEPS, max(params.n_substeps, need)))


def psa_step(rho, params, method="spectral", order=DEFAULT_INTERP_ORDER):
    """Evolve one pass through the phase-sensitive amplifier.

    Integrates the squeezing generator (exactly, by rescaling the amplitude
    axis) and the two-photon-loss Lindblad term over unit time using
    Strang splitting.  ``method="spectral"`` integrates the loss term in the
    grid's a^2-dagger a^2 eigenbasis with classical RK4; ``method="explicit"`` uses explicit RK4
    on the (z, w) = (x + x', x - x') form of the same generator (slow, for
    cross-checks).
    """
    if params.S == 0 and params.L == 0:
        return rho
    if method == "explicit":
        return _psa_explicit(rho, params, order)
    if method != "spectral":
        raise InvalidArgument(f"unknown PSA method {method!r}")
    grid = rho.grid
    basis = mode_basis(grid)
    v = basis.vectors
    tr_in = rho.trace
    lo, hi = interp.support(rho.values)
    vs = v[lo:hi]
    r0 = vs.T @ (rho.values[lo:hi, lo:hi] * grid.dx) @ vs
    r0 = 0.5 * (r0 + r0.T)
    tr_modes = float(np.trace(r0))
    if tr_in - tr_modes > LEAK_TOL * tr_in:
        raise GridLeak(
            f"{(tr_in - tr_modes) / tr_in:.2e} of the state lies outside the "
            f"{basis.n_modes} oscillator levels the grid resolves"
        )
    pops = np.diagonal(r0)
    significant = np.nonzero(np.abs(pops) > 1e-14 * tr_modes)[0]
    last = int(significant[-1]) if significant.size else 0
    n_active = min(basis.n_modes, last + 1 + ACTIVE_PAD)
    n_sub = substeps_for(params, basis.eigenvalues[n_active - 1])

    while True:
        r = _integrate_modal(r0, basis, params.S, params.L, n_sub, order, n_active)
        tail = float(np.trace(r[-ACTIVE_PAD // 2:, -ACTIVE_PAD // 2:]))
        if abs(tail) > 1e-12 * tr_modes:
            if n_active < basis.n_modes:
                n_active = basis.n_modes
                n_sub = max(n_sub, substeps_for(params, basis.eigenvalues[-1]))
                continue
            if abs(tail) > LEAK_TOL * tr_modes:
                raise GridLeak(
                    f"squeezing put {abs(tail) / tr_modes:.2e} of the state into the highest "
                    f"oscillator levels the grid resolves"
                )
        drift = abs(float(np.trace(r)) - tr_modes) / tr_modes
        if drift <= TRACE_DRIFT_TOL:
            break
        if n_sub >= MAX_SUBSTEPS:
            raise IntegrationUnstable(f"PSA trace drift {drift:.2e} with {n_sub} substeps")
        n_sub *= 2

    lo, hi = _mode_rows(grid, n_active)
    va = v[lo:hi, :n_active]
    block = va @ (0.5 * (r + r.T)) @ va.T / grid.dx
    out = np.zeros_like(rho.values)
    out[lo:hi, lo:hi] = 0.5 * (block + block.T)
    out = DensityMatrixX(grid, out)
    # remaining drift (projection, interpolation) is below TRACE_DRIFT_TOL; restore the input trace
    return DensityMatrixX(grid, out.values * (tr_in / out.trace))


def two_photon_loss_zw(values, grid, L):
    """d rho/d tau of two-photon loss evaluated in the rotated coordinates.

    ``F(z, w) = <x|rho|x'>`` with ``z = x + x'``, ``w = x - x'``::

        (L/8) [ (3(z^2 + w^2) - z^2 w^2) F + (z^2 - w^2 + 8) z F_z
                + (w^2 - z^2 + 8) w F_w + 4(z^2 - 1) F_zz + 4(w^2 - 1) F_ww
                + 4(z d_z - w d_w)(F_zz - F_ww) - 16 F_zzww ]

    Derivatives use the band-limited stencil along each matrix axis.
    """
    return _zw_generator(values, grid.x, first_derivative_matrix(grid), L)


def _zw_generator(f, x, d, L):
    def dz(m):
        return 0.5 * (d @ m + m @ d.T)

    def dw(m):
        return 0.5 * (d @ m - m @ d.T)

    z = x[:, None] + x[None, :]
    w = x[:, None] - x[None, :]
    z2, w2 = z * z, w * w
    fz, fw = dz(f), dw(f)
    fzz, fww = dz(fz), dw(fw)
    fzzz, fwww = dz(fzz), dw(fww)
    fzzw, fzww = dw(fzz), dz(fww)
    fzzww = dw(fzzw)
    br = (
        (3 * (z2 + w2) - z2 * w2) * f
        + (z2 - w2 + 8) * z * fz
        + (w2 - z2 + 8) * w * fw
        + 4 * (z2 - 1) * fzz
        + 4 * (w2 - 1) * fww
        + 4 * (z * (fzzz - fzww) - w * (fzzw - fwww))
        - 16 * fzzww
    )
    return (L / 8.0) * br


def two_photon_loss_operator(values, grid, L):
    """Same generator written as L (A rho A^T - {A^T A, rho}/2), A = a^2 on the grid."""
    a = grid_annihilation(grid)
    A = a @ a
    N = A.T @ A
    return L * (A @ values @ A.T - 0.5 * (N @ values + values @ N))


@lru_cache(maxsize=4)
def _zw_radius(grid, iterations=200):
    """Spectral radius of the discretized (z, w) loss generator at L = 1, by power iteration."""
    rng = np.random.default_rng(0)
    m = rng.standard_normal((grid.n_points, grid.n_points))
    m = m + m.T
    d = first_derivative_matrix(grid)
    lam = 0.0
    for _ in range(iterations):
        f = _zw_generator(m, grid.x, d, 1.0)
        norm = np.linalg.norm(f)
        lam = norm / np.linalg.norm(m)
        m = f / norm
    # margin for the slow final convergence of the power iteration
    return 1.1 * lam


def _psa_explicit(rho, params, order):
    grid = rho.grid
    S, L = params.S, params.L
    # the discretized bracket is not the grid a^2-dagger a^2 operator; use its own spectral radius
    n_sub = max(params.n_substeps, math.ceil(L * _zw_radius(grid) / RK4_STABLE)) if L else params.n_substeps
    h = 1.0 / n_sub
    tr_in = rho.trace
    v = rho.values

    def F(m):
        return two_photon_loss_zw(m, grid, L)

    for _ in range(n_sub):
        if S:
            v = resample(DensityMatrixX(grid, v), math.exp(0.5 * S * h), order).values
        if L:
            k1 = F(v)
            k2 = F(v + 0.5 * h * k1)
            k3 = F(v + 0.5 * h * k2)
            k4 = F(v + h * k3)
            v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if S:
            v = resample(DensityMatrixX(grid, 0.5 * (v + v.T)), math.exp(0.5 * S * h), order).values
    out = DensityMatrixX(grid, 0.5 * (v + v.T))
    drift = abs(out.trace - tr_in) / tr_in
    if drift > TRACE_DRIFT_TOL:
        raise IntegrationUnstable(f"explicit PSA trace drift {drift:.2e}")
    return out


# --------------------------------------------------------------------------
# beam splitters and homodyne detection

def _kernel_resolved(grid, T):
    return math.sqrt(T / 2.0) >= 1.5 * grid.dx


def measurement_density(rho, T, x_m=None, order=DEFAULT_INTERP_ORDER):
    """Outcome density p(x_m) = Tr(M_{x_m} rho M_{x_m}^T), by default on the grid nodes.

    Only the diagonal of rho enters: x_m = sqrt(1-T) x + (vacuum noise of variance T/2).
    """
    _check_transmission(T)
    grid = rho.grid
    x = grid.x
    xm = grid.x if x_m is None else np.atleast_1d(np.asarray(x_m, dtype=float))
    diag = np.diagonal(rho.values)
    if _kernel_resolved(grid, T):
        kern = np.exp(-((xm[:, None] - math.sqrt(1 - T) * x[None, :]) ** 2) / T)
        p = (kern @ (grid.weights * diag)) / math.sqrt(math.pi * T)
    else:
        # narrow vacuum-noise kernel: integrate over the retained coordinate instead
        pts = math.sqrt(T) * x[None, :] + math.sqrt(1 - T) * xm[:, None]
        start, w = interp.lagrange_stencil(grid, pts.ravel(), order)
        padded = np.pad(diag, order)
        vals = np.einsum("pa,pa->p", w, padded[start[:, None] + order + np.arange(order)])
        g2 = np.exp(-((math.sqrt(T) * xm[:, None] - math.sqrt(1 - T) * x[None, :]) ** 2))
        p = (g2 * vals.reshape(pts.shape)) @ grid.weights / math.sqrt(math.pi)
    return p if x_m is None or np.ndim(x_m) else float(p[0])


def _sample_outcome(nodes, density, weights, u):
    """Inverse CDF of the piecewise-linear density through the nodes."""
    p = np.clip(density, 0.0, None)
    seg = 0.5 * (p[1:] + p[:-1]) * np.diff(nodes)
    cdf = np.concatenate(([0.0], np.cumsum(seg)))
    total = cdf[-1]
    target = min(max(u, 0.0), 1.0) * total
    k = int(np.searchsorted(cdf, target, side="right")) - 1
    k = min(max(k, 0), nodes.size - 2)
    h = nodes[k + 1] - nodes[k]
    p0, p1 = p[k], p[k + 1]
    rem = target - cdf[k]
    slope = (p1 - p0) / h
    if abs(slope) * h < 1e-12 * max(p0, 1e-300):
        t = rem / p0 if p0 > 0 else 0.5 * h
    else:
        disc = p0 * p0 + 2.0 * slope * rem
        t = (-p0 + math.sqrt(max(disc, 0.0))) / slope
    return float(nodes[k] + min(max(t, 0.0), h)), total


def _sample_outcome_exact(rho, T, u):
    """Invert the closed-form outcome CDF sum_i w_i rho_ii Phi((y - sqrt(1-T) x_i) / sqrt(T/2))."""
    grid = rho.grid
    x = grid.x
    mass = grid.weights * np.clip(np.diagonal(rho.values), 0.0, None)
    keep = mass > 1e-18 * mass.sum()
    mass = mass[keep]
    centre = math.sqrt(1 - T) * x[keep]
    sigma = math.sqrt(T / 2.0)

    def cdf(y):
        return float(np.dot(mass, ndtr((y - centre) / sigma)))

    at_nodes = ndtr((x[:, None] - centre[None, :]) / sigma) @ mass
    total = float(at_nodes[-1] - at_nodes[0])
    target = at_nodes[0] + min(max(u, 0.0), 1.0) * total
    k = int(np.searchsorted(at_nodes, target, side="right")) - 1
    k = min(max(k, 0), x.size - 2)
    if at_nodes[k + 1] <= at_nodes[k]:
        return float(x[k]), total
    y = brentq(lambda v: cdf(v) - target, x[k], x[k + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return float(y), total


def kraus_stencil(grid, T, x_m, order=DEFAULT_INTERP_ORDER):
    """Stencil form of M_{x_m}: rows are x_f, weights include the Gaussian factor."""
    x = grid.x
    start, w = interp.lagrange_stencil(grid, math.sqrt(T) * x + math.sqrt(1 - T) * x_m, order)
    g = np.pi**-0.25 * np.exp(-0.5 * (math.sqrt(T) * x_m - math.sqrt(1 - T) * x) ** 2)
    return start, w * g[:, None]


def apply_kraus(rho, T, x_m, order=DEFAULT_INTERP_ORDER):
    """Unnormalized M rho M^T; its trace is p(x_m)."""
    st = kraus_stencil(rho.grid, T, x_m, order)
    return DensityMatrixX(rho.grid, interp.congruence(rho.values, st))


def homodyne_measure(rho, T, rng_draw, order=DEFAULT_INTERP_ORDER):
    """Sample an outcome with probability Tr(M rho M^T) and return the conditional state."""
    _check_transmission(T)
    grid = rho.grid
    if _kernel_resolved(grid, T):
        x_m, total = _sample_outcome_exact(rho, T, rng_draw)
    else:
        p = measurement_density(rho, T, order=order)
        x_m, total = _sample_outcome(grid.x, p, grid.weights, rng_draw)
    tr = rho.trace
    if not total > 0 or abs(total - tr) > LEAK_TOL * max(tr, 1.0):
        raise GridLeak(f"outcome density integrates to {total:.8g} (trace {tr:.8g})")
    dens = measurement_density(rho, T, x_m=x_m, order=order)
    if T == 1.0:
        return MeasurementOutcome(x_m, dens / tr), rho
    out = apply_kraus(rho, T, x_m, order)
    try:
        out = renormalize(out)
    except DegenerateState as exc:
        raise GridLeak(f"conditional state vanished at x_m={x_m:.4g}: {exc}") from exc
    out = DensityMatrixX(grid, 0.5 * (out.values + out.values.T))
    return MeasurementOutcome(x_m, dens / tr), out


def loss_channel(rho, T_prime, order=DEFAULT_INTERP_ORDER):
    """Non-selective beam-splitter loss: sum over outcomes of M rho M^T."""
    _check_transmission(T_prime, "T_prime")
    if T_prime == 1.0:
        return rho
    grid = rho.grid
    p = measurement_density(rho, T_prime, order=order)
    w = grid.weights
    scale = float(np.dot(w, p))
    acc = np.zeros_like(rho.values)
    for k in np.nonzero(p * w > 1e-17 * scale)[0]:
        st = kraus_stencil(grid, T_prime, grid.x[k], order)
        acc += w[k] * interp.congruence(rho.values, st)
    out = DensityMatrixX(grid, 0.5 * (acc + acc.T))
    tr_in, tr_out = rho.trace, out.trace
    if abs(tr_out - tr_in) > LEAK_TOL * tr_in:
        raise GridLeak(f"loss channel lost {tr_in - tr_out:.2e} of the trace")
    return DensityMatrixX(grid, out.values * (tr_in / tr_out))


def background_loss_selective(rho, T_prime, rng_draw, order=DEFAULT_INTERP_ORDER):
    """Sampled version of the background coupler; the outcome is discarded."""
    if T_prime == 1.0:
        _check_transmission(T_prime, "T_prime")
        return rho
    return homodyne_measure(rho, T_prime, rng_draw, order)[1]


# --------------------------------------------------------------------------
# feedback injection

def displace(rho, d, order=DEFAULT_INTERP_ORDER):
    """rho'(x, x') = rho(x - d, x' - d)."""
    if d == 0:
        return rho
    grid = rho.grid
    st = interp.lagrange_stencil(grid, grid.x - d, order)
    out = interp.congruence(rho.values, st)
    out = DensityMatrixX(grid, 0.5 * (out + out.T))
    lost = rho.trace - out.trace
    if abs(lost) > LEAK_TOL * rho.trace:
        raise GridLeak(f"displacement by {d:.4g} moved {lost:.2e} of the trace off the grid")
    return out


# --------------------------------------------------------------------------
# diagnostics

def kraus_completeness(grid, T, n_modes=50, order=DEFAULT_INTERP_ORDER):
    """Operator-norm deviation of sum_k dx_m M_k^T M_k from identity.

    Measured on the span of the lowest ``n_modes`` oscillator levels
    resolved by the grid (the states the simulator represents); grid-scale
    checkerboard vectors are outside that span.
    """
    _check_transmission(T)
    basis = mode_basis(grid)
    v = basis.vectors[:, :n_modes]
    acc = np.zeros((v.shape[1], v.shape[1]))
    for k, xm in enumerate(grid.x):
        mv = interp.apply_rows(v, kraus_stencil(grid, T, xm, order))
        acc += grid.weights[k] * (mv.T @ mv)
    return float(np.linalg.norm(acc - np.eye(v.shape[1]), 2))
