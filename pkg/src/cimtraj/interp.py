"""Local Lagrange interpolation stencils on a uniform grid.

Every coordinate map used by the channels (rescaling, shifting, the beam
splitter contraction) is a separable linear map ``rho -> P rho P^T`` where
each row of ``P`` has ``order`` consecutive non-zero weights.  A stencil is
stored as ``(start, weights)``: row ``i`` touches grid indices
``start[i] .. start[i] + order - 1``.  Nodes outside the grid carry zero
weight, i.e. the sampled function is extended by zero.
"""

from functools import lru_cache
from math import factorial

import numpy as np

from . import kernels

# entries with |rho_ij| <= sqrt(rho_ii rho_jj) below this fraction of the peak are skipped
SUPPORT_TOL = 1e-34


@lru_cache(maxsize=16)
def _barycentric(order):
    j = np.arange(order)
    return np.array([(-1.0) ** (order - 1 - k) / (factorial(k) * factorial(order - 1 - k)) for k in j])


def lagrange_stencil(grid, points, order):
    """Weights for evaluating a grid function at arbitrary ``points``.

    Returns ``(start, weights)`` with ``start`` int64 of shape ``(p,)`` and
    ``weights`` of shape ``(p, order)``.  ``order`` must be even; 4 is cubic.
    """
    if order < 2 or order % 2:
        raise ValueError(f"interpolation order must be even and >= 2, got {order}")
    points = np.asarray(points, dtype=float)
    u = (points - grid.x_min) / grid.dx
    base = np.floor(u)
    start = base.astype(np.int64) - (order // 2 - 1)
    t = u - start  # position inside the stencil, in [order/2 - 1, order/2)
    diff = t[:, None] - np.arange(order)
    exact = diff == 0.0
    diff[exact] = 1.0
    # barycentric form: w_j = prod_m (t - m) * c_j / (t - j)
    w = np.prod(diff, axis=1)[:, None] * _barycentric(order) / diff
    hit = exact.any(axis=1)
    w[hit] = exact[hit]
    idx = start[:, None] + np.arange(order)
    w[(idx < 0) | (idx >= grid.n_points)] = 0.0
    # points far outside the grid: clamp start so indexing stays in the padded range
    start = np.clip(start, -order, grid.n_points)
    return start, w


def congruence(values, row_stencil, col_stencil=None):
    """Apply ``P values Q^T`` for stencil matrices ``P`` (rows) and ``Q`` (columns)."""
    if col_stencil is None:
        col_stencil = row_stencil
    sr, wr = row_stencil
    sc, wc = col_stencil
    order = wr.shape[1]
    lo, hi = support(values)
    n_out_r, n_out_c = sr.size, sc.size
    rows = _touching(sr, order, lo, hi)
    cols = _touching(sc, order, lo, hi)
    out = np.zeros((n_out_r, n_out_c))
    if rows.size == 0 or cols.size == 0:
        return out
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1
    padded = np.pad(values[lo:hi, lo:hi], order)
    shift = order - lo
    out[r0:r1, c0:c1] = kernels.banded_congruence(
        padded, sr[r0:r1] + shift, wr[r0:r1], sc[c0:c1] + shift, wc[c0:c1]
    )
    return out


def support(values, tol=SUPPORT_TOL):
    """Index range [lo, hi) outside which a PSD matrix is negligible."""
    d = np.abs(np.diagonal(values))
    idx = np.nonzero(d > tol * d.max())[0] if d.size else d
    if idx.size == 0:
        return 0, 0
    return int(idx[0]), int(idx[-1]) + 1


def _touching(start, order, lo, hi):
    """Rows whose stencil overlaps [lo, hi); these form a contiguous block for monotone stencils."""
    return np.nonzero((start + order > lo) & (start < hi))[0]


def apply_rows(values, stencil):
    """Apply ``P values`` for a stencil matrix ``P`` (left multiplication only)."""
    s, w = stencil
    order = w.shape[1]
    padded = np.pad(values, ((order, order), (0, 0)))
    return kernels.banded_rows(padded, s + order, w)


def stencil_matrix(grid, stencil):
    """Dense matrix form of a stencil (for diagnostics and small tests)."""
    s, w = stencil
    n = grid.n_points
    out = np.zeros((s.size, n))
    for k in range(w.shape[1]):
        cols = s + k
        ok = (cols >= 0) & (cols < n)
        rows = np.nonzero(ok)[0]
        np.add.at(out, (rows, cols[ok]), w[ok, k])
    return out
