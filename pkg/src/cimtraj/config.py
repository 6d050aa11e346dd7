"""Run configuration: a flat JSON document mirroring the simulation parameter tables.

Example::

    {
      "G_tot": 1.05, "T": 0.99, "T_prime": 1.0, "R": 0.005, "L": 0.002,
      "rounds": 150, "n_traj": 200, "base_seed": 1
    }

Keys (all optional, defaults in ``RunConfig``):

    x_max, n_points, interp_order   grid and interpolation order
    G_tot                           constant net amplitude gain per round
    schedule                        {"kind": "constant"|"linear-ramp", "g0", "g_max", "ramp_rounds"}
                                    (overrides G_tot)
    T, T_prime, R, L                measurement/background retained power, feedback rate, two-photon loss
    n_substeps, psa_method          PSA integration settings
    J                               coupling matrix (default: antiferromagnetic pair)
    rounds, n_traj, base_seed       run length, ensemble size, first seed
    loss_mode                       "averaged" or "selective"
    feedback_delay                  use the previous round's measurements for feedback
    process_order                   permutation of ["psa", "loss", "measure", "feedback"]
    snapshot_rounds                 rounds after which full states are kept
    workers                         process count for ensembles
    out_dir                         output directory for the CLI
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError, InvalidArgument

PROCESS_STAGES = ("psa", "loss", "measure", "feedback")
LOSS_MODES = ("averaged", "selective")


@dataclass(frozen=True)
class PumpSchedule:
    """Net amplitude gain G_tot per round: constant, or a linear ramp from g0 to g_max."""

    kind: str = "constant"
    g0: float = 1.05
    g_max: float = 1.05
    ramp_rounds: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "linear-ramp"):
            raise InvalidArgument(f"unknown schedule kind {self.kind!r}")
        if not (self.g0 > 0 and self.g_max > 0):
            raise InvalidArgument("schedule gains must be positive")
        if self.ramp_rounds < 0 or (self.kind == "linear-ramp" and self.ramp_rounds == 0):
            raise InvalidArgument("a linear ramp needs ramp_rounds >= 1")

    def gain(self, n):
        """G_tot applied during round ``n`` (0-based)."""
        if self.kind == "constant":
            return self.g_max
        frac = min(n / self.ramp_rounds, 1.0)
        return self.g0 + (self.g_max - self.g0) * frac


# Ramps start where the amplifier switches on at T = 0.99, T' = 1 (G_tot = sqrt(T T') ~ 0.995);
# rounds spent below that only accumulate uncorrelated feedback noise.
SLOW_RAMP = PumpSchedule("linear-ramp", 0.995, 1.05, 400)
RAPID_RAMP = PumpSchedule("linear-ramp", 0.995, 1.05, 20)
CONSTANT_PUMP = PumpSchedule("constant", 1.05, 1.05, 0)


@dataclass(frozen=True)
class RunConfig:
    x_max: float = 16.0
    n_points: int = 257
    interp_order: int = 24
    G_tot: float = 1.05
    schedule: PumpSchedule = None
    T: float = 0.99
    T_prime: float = 1.0
    R: float = 0.005
    L: float = 0.002
    n_substeps: int = 4
    psa_method: str = "spectral"
    J: tuple = ((0.0, -1.0), (-1.0, 0.0))
    rounds: int = 150
    n_traj: int = 10
    base_seed: int = 0
    loss_mode: str = "averaged"
    feedback_delay: bool = False
    process_order: tuple = PROCESS_STAGES
    snapshot_rounds: tuple = ()
    workers: int = 1
    out_dir: str = "out"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        J = tuple(tuple(float(v) for v in row) for row in self.J)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "process_order", tuple(self.process_order))
        object.__setattr__(self, "snapshot_rounds", tuple(int(r) for r in self.snapshot_rounds))
        if isinstance(self.schedule, dict):
            object.__setattr__(self, "schedule", PumpSchedule(**self.schedule))
        if sorted(self.process_order) != sorted(PROCESS_STAGES):
            raise InvalidArgument(f"process_order must be a permutation of {PROCESS_STAGES}")
        if self.loss_mode not in LOSS_MODES:
            raise InvalidArgument(f"loss_mode must be one of {LOSS_MODES}")
        if not 0 < self.T <= 1 or not 0 < self.T_prime <= 1:
            raise InvalidArgument("T and T_prime must lie in (0, 1]")
        if self.R < 0 or self.L < 0:
            raise InvalidArgument("R and L must be non-negative")
        if self.R > 0 and self.T == 1:
            raise InvalidArgument("feedback needs a measurement: R > 0 requires T < 1")
        if self.rounds < 1 or self.n_traj < 1 or self.workers < 1:
            raise InvalidArgument("rounds, n_traj and workers must be >= 1")
        if not self.G_tot > 0:
            raise InvalidArgument("G_tot must be positive")

    @property
    def pump(self):
        return self.schedule or PumpSchedule("constant", self.G_tot, self.G_tot, 0)

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return RunConfig(**d)

    def to_dict(self):
        d = asdict(self)
        d.pop("extra")
        d["J"] = [list(r) for r in self.J]
        d["process_order"] = list(self.process_order)
        d["snapshot_rounds"] = list(self.snapshot_rounds)
        return d

    def physics_dict(self):
        """Everything that influences trajectory results (not output location or worker count)."""
        d = self.to_dict()
        for k in ("out_dir", "workers", "n_traj", "base_seed"):
            d.pop(k)
        return d

    def digest(self):
        blob = json.dumps(self.physics_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_KNOWN = {f.name for f in fields(RunConfig)} - {"extra"}


def config_from_dict(d, base=None):
    unknown = sorted(set(d) - _KNOWN)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    base = base or RunConfig()
    try:
        return base.replace(**d)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def parse_config(text, source="<config>", base=None):
    """Parse a JSON document; keys it sets override ``base`` (default ``RunConfig()``)."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(
            f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}\n    {' ' * (exc.colno - 1)}^"
        ) from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    try:
        return config_from_dict(d, base)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path, base=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path), base)
