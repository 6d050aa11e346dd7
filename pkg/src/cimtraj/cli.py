"""Command-line front end.

    cimtraj run --config cfg.json [--trajectories N] [--seed S] [--out DIR] [--loss-mode M]
    cimtraj figure3|figure4|figure5|figure6 [--config overrides.json] [--out DIR] ...
    cimtraj figure --figure {3,4,5,6} ...
    cimtraj validate
    cimtraj export (--state SPEC | --config cfg.json [--seed S] [--round N]) [--out DIR]

Exit status: 0 success, 1 unexpected error, 2 usage/configuration error,
3 grid leak, 4 degenerate state or truncation, 5 integration failure,
7 file I/O, 8 too many failed trajectories, 9 validation failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__, analysis, channels, fock
from .config import CONSTANT_PUMP, RAPID_RAMP, SLOW_RAMP, config_from_dict, load_config
from .engine import round_params, run_ensemble, run_trajectory
from .errors import CimError, ConfigError
from .grid import (
    cat_state,
    coherent_state,
    make_grid,
    moments,
    renormalize,
    squeezed_vacuum,
    vacuum_state,
)

log = logging.getLogger("cimtraj")

EXIT_CODES = {
    "config": 2,
    "invalid-argument": 2,
    "grid-leak": 3,
    "degenerate-state": 4,
    "truncation-overflow": 4,
    "integration-unstable": 5,
    "io": 7,
}
EXIT_PARTIAL = 8
EXIT_VALIDATION = 9
MIN_COMPLETED = 0.95

FIG4_T = (0.999, 0.99, 0.9, 0.5)
FIG_SNAPSHOTS = (0, 30, 60, 150)
FIG6_T_PRIME = (1.0, 0.9, 0.7, 0.5)


def preset(name):
    text = resources.files("cimtraj").joinpath("presets", f"{name}.json").read_text()
    return config_from_dict(json.loads(text))


def _overrides(args, cfg):
    changes = {}
    if getattr(args, "trajectories", None) is not None:
        changes["n_traj"] = args.trajectories
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        changes["out_dir"] = args.out
    if getattr(args, "loss_mode", None) is not None:
        changes["loss_mode"] = args.loss_mode
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _base_config(args, preset_name):
    cfg = preset(preset_name)
    if args.config:
        cfg = load_config(args.config, base=cfg)
    return _overrides(args, cfg)


def _progress(total):
    def report(done, result):
        if isinstance(result, tuple):
            log.warning("trajectory failed seed=%s category=%s message=%s", *result)
        log.info("progress trajectories=%d/%d", done, total)

    return report


def _ensemble(cfg):
    res = run_ensemble(cfg, progress=_progress(cfg.n_traj))
    if res.failures:
        log.warning("failed trajectories=%d of %d", len(res.failures), res.n_requested)
    if res.completed_fraction < MIN_COMPLETED:
        raise PartialEnsemble(f"only {len(res.records)} of {res.n_requested} trajectories completed")
    return res


class PartialEnsemble(CimError):
    category = "partial-ensemble"


def _write_run(cfg, res, out, prefix=""):
    stats = analysis.ensemble_stats(res.records, res.failures)
    paths = [
        analysis.write_series(stats, os.path.join(out, f"{prefix}series.csv")),
        analysis.write_records(res.records, os.path.join(out, f"{prefix}records.csv")),
    ]
    if res.failures:
        paths.append(analysis.write_failures(res.failures, os.path.join(out, f"{prefix}failures.csv")))
    paths.append(analysis.write_manifest(
        os.path.join(out, f"{prefix}manifest.json"), cfg, __version__,
        {"seeds": [cfg.base_seed, cfg.base_seed + cfg.n_traj - 1],
         "completed": len(res.records), "failed": len(res.failures)},
    ))
    return stats, paths


def cmd_run(args):
    if not args.config:
        raise ConfigError("run needs --config")
    cfg = _overrides(args, load_config(args.config))
    res = _ensemble(cfg)
    stats, paths = _write_run(cfg, res, cfg.out_dir)
    log.info("P(0)=%.6f P(final)=%.6f", stats.P[0], stats.P[-1])
    for p in paths:
        print(p)
    return 0


def _snapshot_exports(rec, cfg, out, tag, rounds, pulses, stride):
    paths = []
    for n in rounds:
        if n not in rec.snapshots:
            continue
        for j in pulses:
            front = rec.snapshots[n][j]
            paths.append(analysis.export_contour(
                front, os.path.join(out, f"{tag}_N{n}_pulse{j + 1}_front.csv"), stride))
            behind = channels.psa_step(front, round_params(cfg, n).psa, order=cfg.interp_order)
            paths.append(analysis.export_contour(
                behind, os.path.join(out, f"{tag}_N{n}_pulse{j + 1}_behind.csv"), stride))
    return paths


def _moment_table(rec):
    header = ["round"]
    n_pulse = rec.x_m.shape[1]
    for j in range(1, n_pulse + 1):
        header += [f"x_m_{j}", f"mean_x_{j}", f"var_x_{j}", f"var_p_{j}",
                   f"mean_x_after_{j}", f"var_x_after_{j}", f"var_p_after_{j}"]
    rows = []
    for k in range(rec.rounds):
        row = [str(k)]
        for j in range(n_pulse):
            b, a = rec.moments_before[k, j], rec.moments_after[k, j]
            row += [analysis.fmt(v) for v in (rec.x_m[k, j], b[0], b[1], b[2], a[0], a[1], a[2])]
        rows.append(row)
    return header, rows


def cmd_figure3(args):
    cfg = _base_config(args, "table1").replace(snapshot_rounds=FIG_SNAPSHOTS)
    out = cfg.out_dir
    rec = run_trajectory(cfg, cfg.base_seed)
    paths = [analysis.write_csv(os.path.join(out, "fig3_series.csv"), *_moment_table(rec))]
    paths += _snapshot_exports(rec, cfg, out, "fig3", FIG_SNAPSHOTS, (0, 1), args.stride)
    paths.append(analysis.write_manifest(os.path.join(out, "fig3_manifest.json"), cfg, __version__,
                                         {"seed": cfg.base_seed}))
    for p in paths:
        print(p)
    return 0


def cmd_figure4(args):
    # T = 0.5 drives amplitudes beyond what the default grid resolves, so the sweep uses a wider one
    base = _base_config(args, "tsweep").replace(snapshot_rounds=FIG_SNAPSHOTS)
    out = base.out_dir
    paths = []
    for T in FIG4_T:
        cfg = base.replace(T=T)
        rec = run_trajectory(cfg, cfg.base_seed)
        tag = f"fig4_T{T:g}"
        paths.append(analysis.write_csv(os.path.join(out, f"{tag}_series.csv"), *_moment_table(rec)))
        paths += _snapshot_exports(rec, cfg, out, tag, FIG_SNAPSHOTS, (0,), args.stride)
        if T == FIG4_T[0] and 60 in rec.snapshots:
            paths.append(analysis.export_wigner(rec.snapshots[60][0],
                                                os.path.join(out, "fig4e_wigner_N60.csv")))
    paths.append(analysis.write_manifest(os.path.join(out, "fig4_manifest.json"), base, __version__,
                                         {"seed": base.base_seed, "T": list(FIG4_T)}))
    for p in paths:
        print(p)
    return 0


def cmd_figure5(args):
    base = _base_config(args, "tsweep")
    out = base.out_dir
    paths = []
    for T in FIG4_T:
        cfg = base.replace(T=T)
        rec = run_trajectory(cfg, cfg.base_seed)
        header = ["round", "var_x_front", "var_p_front", "var_x_behind", "var_p_behind", "product_front"]
        rows = []
        for k in range(rec.rounds):
            b, a = rec.moments_before[k, 0], rec.moments_after[k, 0]
            rows.append([str(k)] + [analysis.fmt(v) for v in (b[1], b[2], a[1], a[2], b[1] * b[2])])
        paths.append(analysis.write_csv(os.path.join(out, f"fig5_T{T:g}_loop.csv"), header, rows))
        if cfg.n_traj > 1:
            res = _ensemble(cfg)
            st = analysis.ensemble_stats(res.records, res.failures)
            rows = [[str(k), analysis.fmt(st.full_var_x[k, 0]), analysis.fmt(st.full_var_p[k, 0])]
                    for k in range(st.rounds)]
            paths.append(analysis.write_csv(os.path.join(out, f"fig5_T{T:g}_full.csv"),
                                            ["round", "full_var_x", "full_var_p"], rows))
    paths.append(analysis.write_manifest(os.path.join(out, "fig5_manifest.json"), base, __version__,
                                         {"seed": base.base_seed, "T": list(FIG4_T)}))
    for p in paths:
        print(p)
    return 0


# retained fraction T * T' below which the gain needed for G_tot drives amplitudes past a box
# of the given half-width; lossier runs are moved to a wider box at the same spacing
GRID_FOR_LOSS = ((0.6, 22.0), (0.95, 16.0))


def _fit_grid(cfg):
    for below, x_max in GRID_FOR_LOSS:
        if cfg.T * cfg.T_prime < below:
            if cfg.x_max < x_max:
                dx = 2 * cfg.x_max / (cfg.n_points - 1)
                return cfg.replace(x_max=x_max, n_points=int(round(2 * x_max / dx)) + 1)
            break
    return cfg


def cmd_figure6(args):
    base = _base_config(args, "table2")
    out = base.out_dir
    t_primes = args.t_prime or FIG6_T_PRIME
    paths = []
    for name, sched in (("slow", SLOW_RAMP), ("rapid", RAPID_RAMP), ("constant", CONSTANT_PUMP)):
        for tp in t_primes:
            cfg = _fit_grid(base.replace(schedule=sched, T_prime=tp))
            if tp < 1 and args.loss_mode is None:
                # the averaged channel costs one quadrature node per outcome; sample instead
                cfg = cfg.replace(loss_mode="selective")
            log.info("figure6 schedule=%s T_prime=%g trajectories=%d", name, tp, cfg.n_traj)
            res = _ensemble(cfg)
            st = analysis.ensemble_stats(res.records, res.failures)
            rows = [[str(k), analysis.fmt(st.P[k]), analysis.fmt(st.P_err[k])] for k in range(st.rounds + 1)]
            paths.append(analysis.write_csv(os.path.join(out, f"fig6_{name}_Tp{tp:g}.csv"),
                                            ["round", "P", "P_err"], rows))
    paths.append(analysis.write_manifest(os.path.join(out, "fig6_manifest.json"), base, __version__,
                                         {"T_prime": list(t_primes)}))
    for p in paths:
        print(p)
    return 0


FIGURES = {3: cmd_figure3, 4: cmd_figure4, 5: cmd_figure5, 6: cmd_figure6}


def cmd_figure(args):
    if args.figure not in FIGURES:
        raise ConfigError(f"--figure must be one of {sorted(FIGURES)}")
    return FIGURES[args.figure](args)


def validation_checks():
    """Fast invariant and oracle checks: (name, passed, detail) triples."""
    g = make_grid()
    out = []

    def check(name, ok, detail):
        out.append((name, bool(ok), detail))

    m = moments(vacuum_state(g))
    check("vacuum moments", abs(m.var_x - 0.5) < 1e-6 and abs(m.var_p - 0.5) < 1e-6 and abs(m.mean_x) < 1e-12,
          f"var_x={m.var_x:.10f} var_p={m.var_p:.10f}")
    for T in (0.5, 0.9, 0.99, 0.999):
        dev = channels.kraus_completeness(g, T)
        check(f"Kraus completeness T={T}", dev < 1e-6, f"deviation={dev:.2e}")
    sq = moments(channels.psa_step(vacuum_state(g), channels.PsaParams(0.3, 0.0)))
    check("squeezing S=0.3", abs(sq.var_x - 0.5 * math.exp(0.6)) < 1e-4 and abs(sq.var_p - 0.5 * math.exp(-0.6)) < 1e-4,
          f"var_x={sq.var_x:.6f} var_p={sq.var_p:.6f}")
    v = vacuum_state(g)
    r = channels.psa_step(v, channels.PsaParams(0.0, 0.002))
    dev = float(np.abs(r.values - v.values).max())
    check("two-photon-loss fixed point", dev < 1e-8, f"max change={dev:.1e}")
    cf, _ = fock.fock_loss_and_measure(fock.fock_coherent(40, 1.5), 0.9, 0.4)
    cg = renormalize(channels.apply_kraus(coherent_state(g, 1.5), 0.9, 0.4))
    td = fock.trace_distance(fock.grid_from_fock(cf, g), cg)
    check("grid/Fock homodyne agreement", td < 1e-6, f"trace distance={td:.1e}")
    cat = cat_state(g, 2.0)
    w = analysis.wigner(cat)
    check("cat Wigner negativity", w.min() <= -0.05 * w.max(), f"min/max={w.min() / w.max():.3f}")
    p = analysis.success_probability([(v, v)])
    check("vacuum success probability", abs(p - 0.5) < 1e-8, f"P={p:.10f}")
    return out


def cmd_validate(args):
    results = validation_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:32s} {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else EXIT_VALIDATION


def state_from_spec(spec, grid):
    """Parse 'vacuum', 'coherent:X0', 'squeezed:R', 'cat:X0', 'mixture:X0', 'thermal:NBAR', 'fock:N'."""
    kind, _, arg = spec.partition(":")
    try:
        val = float(arg) if arg else None
    except ValueError as exc:
        raise ConfigError(f"bad state argument in {spec!r}") from exc
    if kind == "vacuum":
        return vacuum_state(grid)
    if val is None:
        raise ConfigError(f"state {kind!r} needs a parameter, e.g. {kind}:2")
    if kind == "coherent":
        return coherent_state(grid, val)
    if kind == "squeezed":
        return squeezed_vacuum(grid, val)
    if kind == "cat":
        return cat_state(grid, val)
    if kind == "mixture":
        return cat_state(grid, val, mixed=True)
    if kind == "thermal":
        return fock.grid_from_fock(fock.fock_thermal(fock.DEFAULT_DIM, val), grid)
    if kind == "fock":
        return fock.grid_from_fock(fock.fock_number_state(fock.DEFAULT_DIM, int(val)), grid)
    raise ConfigError(f"unknown state kind {kind!r}")


def cmd_export(args):
    out = args.out or "out"
    if args.state:
        rho = state_from_spec(args.state, make_grid())
        tag = args.state.replace(":", "_")
    elif args.config:
        cfg = load_config(args.config)
        seed = cfg.base_seed if args.seed is None else args.seed
        n = cfg.rounds if args.round is None else args.round
        cfg = cfg.replace(rounds=max(n, 1), snapshot_rounds=(n,))
        rec = run_trajectory(cfg, seed)
        rho = rec.snapshots[n][args.pulse - 1]
        tag = f"seed{seed}_N{n}_pulse{args.pulse}"
    else:
        raise ConfigError("export needs --state or --config")
    paths = [
        analysis.export_contour(rho, os.path.join(out, f"contour_{tag}.csv"), args.stride),
        analysis.export_wigner(rho, os.path.join(out, f"wigner_{tag}.csv")),
    ]
    for p in paths:
        print(p)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cimtraj", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v progress, -vv per-round logs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--trajectories", type=int, help="number of trajectories")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--loss-mode", choices=("selective", "averaged"), help="background loss treatment")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--stride", type=int, default=2, help="grid stride for contour files")
        p.add_argument("--t-prime", type=float, action="append", help="background transmission (figure 6)")

    common(sub.add_parser("run", help="ensemble simulation"), config_required=True)
    for n in FIGURES:
        common(sub.add_parser(f"figure{n}", help=f"data for figure {n}"))
    p = sub.add_parser("figure", help="data for a figure selected by --figure")
    common(p)
    p.add_argument("--figure", type=int, required=True, choices=sorted(FIGURES))
    sub.add_parser("validate", help="invariant and oracle self-test")
    p = sub.add_parser("export", help="write contour and Wigner tables for a state")
    p.add_argument("--state", help="vacuum | coherent:X0 | squeezed:R | cat:X0 | mixture:X0 | thermal:NBAR | fock:N")
    p.add_argument("--config", help="run a trajectory and export one of its states")
    p.add_argument("--seed", type=int)
    p.add_argument("--round", type=int)
    p.add_argument("--pulse", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--stride", type=int, default=1)
    return parser


COMMANDS = {
    "run": cmd_run,
    "figure": cmd_figure,
    "validate": cmd_validate,
    "export": cmd_export,
    **{f"figure{n}": f for n, f in FIGURES.items()},
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except PartialEnsemble as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except CimError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
