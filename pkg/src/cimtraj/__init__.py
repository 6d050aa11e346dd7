"""Density-matrix trajectories of measurement-feedback coherent Ising machines.

Each optical pulse is a real density matrix on a uniform in-phase grid.  A
round trip applies phase-sensitive amplification with two-photon loss,
background loss, a weak homodyne measurement and feedback displacements
derived from the measured amplitudes.  ``cimtraj.fock`` re-implements every
channel in a truncated photon-number basis as an independent check.
"""

__version__ = "0.1.0"

from .channels import (
    MeasurementOutcome,
    PsaParams,
    apply_kraus,
    background_loss_selective,
    displace,
    homodyne_measure,
    kraus_completeness,
    loss_channel,
    measurement_density,
    psa_step,
)
from .config import PumpSchedule, RunConfig, load_config, parse_config
from .engine import (
    IsingProblem,
    RoundTripParams,
    antiferromagnetic_pair,
    round_trip,
    run_ensemble,
    run_trajectory,
    squeeze_from_gain,
)
from .errors import (
    CimError,
    ConfigError,
    DegenerateState,
    GridLeak,
    IntegrationUnstable,
    InvalidArgument,
    TruncationOverflow,
)
from .grid import (
    DensityMatrixX,
    Moments,
    XGrid,
    cat_state,
    coherent_state,
    make_grid,
    moments,
    squeezed_vacuum,
    vacuum_state,
)
from .kernels import BACKEND
