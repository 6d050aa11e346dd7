"""Derived quantities and file exports: success probability, Wigner functions, contour tables."""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

from functools import lru_cache

import numpy as np
from scipy.special import sici

from .errors import CimError, InvalidArgument
from .grid import DensityMatrixX, make_grid

FLOAT_FMT = "{:.17g}"
MOMENT_FIELDS = ("mean_x", "var_x", "var_p", "trace", "purity")


def fmt(v):
    return FLOAT_FMT.format(float(v))


@lru_cache(maxsize=8)
def _half_line_weights(grid):
    """Exact integrals over x > 0 of the band-limited interpolating functions.

    A node at x = 0 gets exactly half its weight; far from the origin the
    weights tend to dx (x > 0) or 0 (x < 0).
    """
    h = grid.dx
    w = h * (0.5 + sici(np.pi * grid.x / h)[0] / np.pi)
    w.flags.writeable = False
    return w


def positive_mass(rho):
    """Probability of x > 0 (up spin), the symmetric tie x = 0 counting half."""
    d = np.diagonal(rho.values)
    return float(np.dot(_half_line_weights(rho.grid), d) / rho.trace)


def pair_success(q1, q2):
    """Probability that two independent pulses have opposite signs."""
    return q1 * (1 - q2) + (1 - q1) * q2


def success_probability(state_pairs):
    """Ensemble mean of the antiferromagnetic success probability over (rho_1, rho_2) pairs."""
    state_pairs = list(state_pairs)
    if not state_pairs:
        raise InvalidArgument("success probability of an empty ensemble")
    return float(np.mean([pair_success(positive_mass(a), positive_mass(b)) for a, b in state_pairs]))


def ensemble_average_density(states):
    states = list(states)
    if not states:
        raise InvalidArgument("cannot average an empty ensemble")
    grid = states[0].grid
    if any(s.grid != grid for s in states):
        raise InvalidArgument("states live on different grids")
    acc = np.zeros_like(states[0].values)
    for s in states:
        acc += s.values / s.trace
    return DensityMatrixX(grid, acc / len(states))


def wigner(rho, p_grid=None):
    """W(q, p) = (1/pi) int rho(q + y, q - y) exp(-2 i p y) dy on q = grid nodes.

    Returns an array of shape ``(n_points, len(p_grid))``.  For the real
    symmetric states used here the integrand is even in y, so the transform
    is a cosine sum and the result is real by construction.
    """
    grid = rho.grid
    if p_grid is None:
        p_grid = grid.x
    p = np.asarray(p_grid, dtype=float)
    n = grid.n_points
    v = rho.values / rho.trace
    dx = grid.dx
    i = np.arange(n)
    out = np.zeros((n, p.size))
    out += v[i, i][:, None]
    for k in range(1, n):
        lo, hi = k, n - k
        if lo >= hi:
            break
        rows = np.arange(lo, hi)
        vals = v[rows + k, rows - k]
        out[rows] += 2.0 * vals[:, None] * np.cos(2.0 * p * k * dx)[None, :]
    return out * dx / math.pi


def integrate_wigner(w, q_grid, p_grid):
    return float(np.trapezoid(np.trapezoid(w, p_grid, axis=1), q_grid))


def off_diagonal_lobe(rho, x0):
    """|rho(x0, -x0)| relative to rho(x0, x0): the coherence between +x0 and -x0."""
    grid = rho.grid
    i = int(np.argmin(np.abs(grid.x - x0)))
    j = int(np.argmin(np.abs(grid.x + x0)))
    return float(abs(rho.values[i, j]) / rho.values[i, i])


# --------------------------------------------------------------------------
# files

def _open_for_write(path):
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror}") from exc


class ExportError(CimError):
    category = "io"


def export_contour(rho, path, stride=1):
    """Write (x+x', x-x', value) rows for grid pairs, grid described in a header comment.

    ``stride > 1`` keeps every stride-th node in each direction for plotting;
    only full tables (stride 1) can be read back by ``import_contour``.
    """
    if int(stride) != stride or stride < 1:
        raise InvalidArgument(f"stride must be a positive integer, got {stride}")
    g = rho.grid
    x = g.x[::stride]
    s = (x[:, None] + x[None, :]).ravel()
    d = (x[:, None] - x[None, :]).ravel()
    v = rho.values[::stride, ::stride].ravel()
    with _open_for_write(path) as fh:
        fh.write(f"# x_max={fmt(g.x_max)} n_points={g.n_points} stride={stride}\n")
        fh.write("x_plus_xp,x_minus_xp,value\n")
        fh.writelines(f"{fmt(a)},{fmt(b)},{fmt(c)}\n" for a, b, c in zip(s, d, v))
    return path


def import_contour(path):
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        kv = dict(item.split("=") for item in header.lstrip("#").split())
        if int(kv.get("stride", 1)) != 1:
            raise ExportError(f"{path}: strided tables cannot be read back as states")
        grid = make_grid(float(kv["x_max"]), int(kv["n_points"]))
    except (KeyError, ValueError) as exc:
        raise ExportError(f"{path}: malformed grid header {header.strip()!r}") from exc
    n = grid.n_points
    if data.shape != (n * n, 3):
        raise ExportError(f"{path}: expected {n * n} rows, found {data.shape[0]}")
    return DensityMatrixX(grid, data[:, 2].reshape(n, n))


def export_wigner(rho, path, p_grid=None):
    g = rho.grid
    p = g.x if p_grid is None else np.asarray(p_grid, dtype=float)
    w = wigner(rho, p)
    with _open_for_write(path) as fh:
        fh.write("x,p,W\n")
        for i, q in enumerate(g.x):
            fh.writelines(f"{fmt(q)},{fmt(pj)},{fmt(w[i, j])}\n" for j, pj in enumerate(p))
    return path


# --------------------------------------------------------------------------
# ensemble statistics

@dataclass
class EnsembleStats:
    """Per-round ensemble summaries.

    ``P`` and ``P_err`` have ``rounds + 1`` entries (index N = after N round
    trips).  Moment arrays have shape ``(rounds, n_pulse)``.  ``full_var_x``
    is the in-phase variance of the ensemble-averaged (unconditional)
    state, i.e. mean conditional variance plus variance of conditional means.
    """

    n_traj: int
    P: np.ndarray
    P_err: np.ndarray
    mean_x: np.ndarray
    mean_abs_x: np.ndarray
    median_abs_x: np.ndarray
    var_x: np.ndarray
    median_var_x: np.ndarray
    var_p: np.ndarray
    full_var_x: np.ndarray
    full_var_p: np.ndarray
    seeds: list
    failures: list = field(default_factory=list)

    @property
    def rounds(self):
        return self.mean_x.shape[0]


def ensemble_stats(records, failures=(), which="before"):
    records = list(records)
    if not records:
        raise InvalidArgument("no completed trajectories")
    key = "moments_before" if which == "before" else "moments_after"
    m = np.stack([getattr(r, key) for r in records])  # (traj, rounds, pulse, field)
    mean = m[..., 0]
    var_x = m[..., 1]
    var_p = m[..., 2]
    P_traj = np.stack([r.success_probability() for r in records])
    n = len(records)
    P = P_traj.mean(axis=0)
    # spread of per-trajectory probabilities; equals the binomial error when they are 0/1
    P_err = np.sqrt(np.maximum(P * (1 - P), 0.0) / n)
    return EnsembleStats(
        n_traj=n,
        P=P,
        P_err=P_err,
        mean_x=mean.mean(axis=0),
        mean_abs_x=np.abs(mean).mean(axis=0),
        median_abs_x=np.median(np.abs(mean), axis=0),
        var_x=var_x.mean(axis=0),
        median_var_x=np.median(var_x, axis=0),
        var_p=var_p.mean(axis=0),
        full_var_x=var_x.mean(axis=0) + mean.var(axis=0),
        full_var_p=var_p.mean(axis=0),
        seeds=[r.seed for r in records],
        failures=list(failures),
    )


def series_rows(stats):
    n_pulse = stats.mean_x.shape[1]
    header = ["round", "P", "P_err"]
    for j in range(n_pulse):
        header += [f"{name}_{j + 1}" for name in
                   ("mean_x", "mean_abs_x", "median_abs_x", "var_x", "median_var_x", "var_p",
                    "full_var_x", "full_var_p")]
    rows = []
    for k in range(stats.rounds + 1):
        row = [str(k), fmt(stats.P[k]), fmt(stats.P_err[k])]
        for j in range(n_pulse):
            if k < stats.rounds:
                row += [fmt(a[k, j]) for a in (stats.mean_x, stats.mean_abs_x, stats.median_abs_x,
                                               stats.var_x, stats.median_var_x, stats.var_p,
                                               stats.full_var_x, stats.full_var_p)]
            else:
                row += [""] * 8
        rows.append(row)
    return header, rows


def write_csv(path, header, rows):
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_series(stats, path):
    return write_csv(path, *series_rows(stats))


def record_rows(records):
    header = ["seed", "round", "pulse", "x_m"]
    header += [f"{f}_before" for f in MOMENT_FIELDS[:3]] + [f"{f}_after" for f in MOMENT_FIELDS[:3]]
    header += ["purity_before", "positive_mass_after", "S"]
    rows = []
    for r in records:
        for k in range(r.rounds):
            for j in range(r.x_m.shape[1]):
                b, a = r.moments_before[k, j], r.moments_after[k, j]
                rows.append([str(r.seed), str(k), str(j + 1), fmt(r.x_m[k, j]),
                             fmt(b[0]), fmt(b[1]), fmt(b[2]), fmt(a[0]), fmt(a[1]), fmt(a[2]),
                             fmt(b[4]), fmt(r.positive_mass[k + 1, j]), fmt(r.squeeze[k])])
    return header, rows


def write_records(records, path):
    return write_csv(path, *record_rows(records))


def write_failures(failures, path):
    return write_csv(path, ["seed", "category", "message"], [[str(s), c, m] for s, c, m in failures])


def write_manifest(path, config, version, extra=None):
    """Provenance record; output location and worker count are left out so reruns match byte for byte."""
    cfg = config.to_dict()
    for k in ("out_dir", "workers"):
        cfg.pop(k)
    doc = {
        "version": version,
        "config_sha256": config.digest(),
        "config": cfg,
    }
    doc.update(extra or {})
    with _open_for_write(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


__all__ = [
    "EnsembleStats",
    "ExportError",
    "ensemble_average_density",
    "ensemble_stats",
    "export_contour",
    "export_wigner",
    "import_contour",
    "integrate_wigner",
    "off_diagonal_lobe",
    "pair_success",
    "positive_mass",
    "success_probability",
    "wigner",
    "write_failures",
    "write_manifest",
    "write_records",
    "write_series",
]
