"""Round trips of an N-pulse network and seeded ensembles of trajectories.

Random numbers: trajectory ``k`` of an ensemble uses
``numpy.random.default_rng(base_seed + k)``.  Every round draws an
``(n_pulse, 2)`` block of uniforms; column 0 feeds the background coupler
(selective mode only) and column 1 the measurement, so the stream stays
aligned whatever the loss mode.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import channels
from .analysis import MOMENT_FIELDS, pair_success, positive_mass
from .config import PROCESS_STAGES, RunConfig
from .errors import CimError, GridLeak, InvalidArgument
from .grid import make_grid, moments, vacuum_state

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IsingProblem:
    J: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] < 1:
            raise InvalidArgument(f"J must be a square matrix, got shape {J.shape}")
        if not np.allclose(J, J.T, rtol=0, atol=1e-14):
            raise InvalidArgument("J must be symmetric")
        if np.any(np.diagonal(J) != 0):
            raise InvalidArgument("J must have a zero diagonal")
        J.flags.writeable = False
        object.__setattr__(self, "J", J)

    @property
    def n_pulse(self):
        return self.J.shape[0]


def antiferromagnetic_pair():
    return IsingProblem([[0.0, -1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class RoundTripParams:
    psa: channels.PsaParams
    T: float
    T_prime: float
    R: float

    def __post_init__(self):
        if not 0 < self.T <= 1 or not 0 < self.T_prime <= 1:
            raise InvalidArgument("T and T_prime must lie in (0, 1]")
        if self.R < 0:
            raise InvalidArgument("R must be non-negative")


def squeeze_from_gain(g_tot, T, T_prime):
    """S such that exp(S) * sqrt(T * T') = G_tot."""
    if not g_tot > 0:
        raise InvalidArgument(f"g_tot must be positive, got {g_tot}")
    return math.log(g_tot) - 0.5 * (math.log(T) + math.log(T_prime))


def estimate_amplitude(x_m, T):
    """Unbiased in-phase amplitude estimate from the measured port."""
    if not 0 < T < 1:
        raise InvalidArgument(f"amplitude estimate needs 0 < T < 1, got {T}")
    return x_m / math.sqrt(1.0 - T)


def feedback_displacements(x_tilde, problem, R):
    x_tilde = np.asarray(x_tilde, dtype=float)
    if x_tilde.shape != (problem.n_pulse,):
        raise InvalidArgument(f"expected {problem.n_pulse} estimates, got shape {x_tilde.shape}")
    return R * (problem.J @ x_tilde)


def _moment_row(states):
    rows = []
    for s in states:
        m = moments(s)
        rows.append([getattr(m, f) for f in MOMENT_FIELDS])
    return np.array(rows)


@dataclass
class RoundResult:
    states: list
    x_m: np.ndarray
    displacements: np.ndarray
    before: np.ndarray
    after: np.ndarray


def round_trip(states, params, problem, draws, *, loss_mode="averaged",
               process_order=PROCESS_STAGES, pending=None, order=None, psa_method="spectral"):
    """Apply one round trip to every pulse.

    ``draws`` is an ``(n_pulse, 2)`` array of uniforms.  The feedback stage
    uses ``pending`` displacements when given (delayed feedback or a
    feedback stage placed before the measurement), otherwise the ones
    computed from this round's outcomes.
    """
    n = problem.n_pulse
    if len(states) != n:
        raise InvalidArgument(f"{len(states)} states for {n} pulses")
    draws = np.asarray(draws, dtype=float).reshape(n, 2)
    kw = {} if order is None else {"order": order}
    states = list(states)
    before = _moment_row(states)
    after = None
    x_m = np.zeros(n)
    fresh = None
    for stage in process_order:
        if stage == "psa":
            states = [channels.psa_step(s, params.psa, method=psa_method, **kw) for s in states]
            after = _moment_row(states)
        elif stage == "loss":
            if loss_mode == "selective":
                states = [channels.background_loss_selective(s, params.T_prime, u, **kw)
                          for s, u in zip(states, draws[:, 0])]
            else:
                states = [channels.loss_channel(s, params.T_prime, **kw) for s in states]
        elif stage == "measure":
            out = []
            for i, s in enumerate(states):
                outcome, s = channels.homodyne_measure(s, params.T, draws[i, 1], **kw)
                x_m[i] = outcome.x_m
                out.append(s)
            states = out
            if params.R > 0:
                est = np.array([estimate_amplitude(v, params.T) for v in x_m])
                fresh = feedback_displacements(est, problem, params.R)
            else:
                fresh = np.zeros(n)
        elif stage == "feedback":
            d = pending if pending is not None else fresh
            if d is not None:
                states = [channels.displace(s, di, **kw) for s, di in zip(states, d)]
        else:
            raise InvalidArgument(f"unknown stage {stage!r}")
    if fresh is None:
        fresh = np.zeros(n)
    return RoundResult(states, x_m, fresh, before, after if after is not None else before)


@dataclass
class TrajectoryRecord:
    """Per-round series of one trajectory.

    ``moments_before`` / ``moments_after`` have shape ``(rounds, n_pulse, 5)``
    with columns ``MOMENT_FIELDS``; row N describes the state in front of /
    behind the PSA during round N.  ``positive_mass`` has ``rounds + 1`` rows:
    row N is the state after N complete round trips (row 0 is the initial
    vacuum).
    """

    seed: int
    x_m: np.ndarray
    moments_before: np.ndarray
    moments_after: np.ndarray
    positive_mass: np.ndarray
    squeeze: np.ndarray
    final_states: list
    snapshots: dict = field(default_factory=dict)

    @property
    def rounds(self):
        return self.x_m.shape[0]

    def success_probability(self):
        """P(N) for a two-pulse antiferromagnetic problem, N = 0..rounds."""
        q = self.positive_mass
        return pair_success(q[:, 0], q[:, 1])


def round_params(config, n):
    S = squeeze_from_gain(config.pump.gain(n), config.T, config.T_prime)
    # the amplifier cannot attenuate: gain settings below the coupler losses mean no pumping
    S = max(S, 0.0)
    return RoundTripParams(channels.PsaParams(S, config.L, config.n_substeps),
                           config.T, config.T_prime, config.R)


def run_trajectory(config, seed, mirror=False):
    """Evolve vacuum pulses for ``config.rounds`` round trips; deterministic in (config, seed).

    ``mirror`` replaces every uniform u by 1 - u, which for the symmetric
    problems studied here maps a trajectory onto its spin-flipped partner.
    """
    grid = make_grid(config.x_max, config.n_points)
    problem = IsingProblem(config.J)
    n = problem.n_pulse
    rng = np.random.default_rng(seed)
    states = [vacuum_state(grid)] * n
    rounds = config.rounds
    x_m = np.zeros((rounds, n))
    before = np.zeros((rounds, n, len(MOMENT_FIELDS)))
    after = np.zeros_like(before)
    q = np.zeros((rounds + 1, n))
    q[0] = [positive_mass(s) for s in states]
    squeeze = np.zeros(rounds)
    snap = set(config.snapshot_rounds)
    snapshots = {0: list(states)} if 0 in snap else {}
    pending = None
    with threadpool_limits(limits=1):
        for k in range(rounds):
            draws = rng.random((n, 2))
            if mirror:
                draws = 1.0 - draws
            params = round_params(config, k)
            squeeze[k] = params.psa.S
            try:
                res = round_trip(states, params, problem, draws, loss_mode=config.loss_mode,
                                 process_order=config.process_order,
                                 pending=pending if config.feedback_delay else None,
                                 order=config.interp_order, psa_method=config.psa_method)
            except GridLeak as exc:
                raise GridLeak(str(exc), round_index=k) from exc
            except CimError as exc:
                raise type(exc)(f"round {k}: {exc}") from exc
            states = res.states
            pending = res.displacements
            x_m[k] = res.x_m
            before[k] = res.before
            after[k] = res.after
            q[k + 1] = [positive_mass(s) for s in states]
            if log.isEnabledFor(logging.DEBUG):
                log.debug("seed=%d round=%d S=%.6f x_m=%s mean_x=%s var_x=%s", seed, k, params.psa.S,
                          np.array2string(res.x_m, precision=4),
                          np.array2string(res.before[:, 0], precision=4),
                          np.array2string(res.before[:, 1], precision=4))
            if k + 1 in snap:
                snapshots[k + 1] = list(states)
    return TrajectoryRecord(seed, x_m, before, after, q, squeeze, states, snapshots)


@dataclass
class EnsembleResult:
    records: list
    failures: list  # (seed, category, message)

    @property
    def n_requested(self):
        return len(self.records) + len(self.failures)

    @property
    def completed_fraction(self):
        return len(self.records) / max(self.n_requested, 1)


def _guarded(args):
    config, seed, mirror = args
    try:
        return run_trajectory(config, seed, mirror)
    except CimError as exc:
        return (seed, exc.category, str(exc))


def run_ensemble(config, n_traj=None, base_seed=None, workers=None, mirror=False, progress=None):
    """Run trajectories with seeds base_seed .. base_seed + n_traj - 1, in seed order."""
    n_traj = config.n_traj if n_traj is None else n_traj
    base_seed = config.base_seed if base_seed is None else base_seed
    workers = config.workers if workers is None else workers
    if n_traj < 1:
        raise InvalidArgument("n_traj must be >= 1")
    jobs = [(config, base_seed + k, mirror) for k in range(n_traj)]
    records, failures = [], []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_guarded, jobs, chunksize=max(1, n_traj // (4 * workers)))
            results = list(_report(results, progress))
    else:
        results = list(_report(map(_guarded, jobs), progress))
    for r in results:
        (records if isinstance(r, TrajectoryRecord) else failures).append(r)
    return EnsembleResult(records, failures)


def _report(results, progress):
    for i, r in enumerate(results):
        if progress is not None:
            progress(i + 1, r)
        yield r


def default_config(**changes):
    return RunConfig().replace(**changes)
