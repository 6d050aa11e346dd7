"""Exception types raised by the simulator."""


class CimError(Exception):
    """Base class for all simulator errors."""

    category = "error"


class InvalidArgument(CimError, ValueError):
    category = "invalid-argument"


class DegenerateState(CimError):
    """Trace vanished or became negative (impossible outcome or numerical collapse)."""

    category = "degenerate-state"


class GridLeak(CimError):
    """Significant probability mass left the representable support."""

    category = "grid-leak"

    def __init__(self, message, round_index=None):
        if round_index is not None:
            message = f"round {round_index}: {message}"
        super().__init__(message)
        self.round_index = round_index


class TruncationOverflow(CimError):
    """Fock-space state populates levels too close to the truncation."""

    category = "truncation-overflow"


class IntegrationUnstable(CimError):
    category = "integration-unstable"


class ConfigError(CimError):
    category = "config"
