"""Error taxonomy shared by all modules.

The CLI maps these onto process exit codes (see cli.EXIT_*): precondition
violations exit 2, numerical failures exit 3, budget overruns exit 4.
"""


class Stokes3dError(Exception):
    """Base class for all package errors."""


class PreconditionError(Stokes3dError):
    """An operation was called outside its contract (bad input, wrong regime)."""


class NumericalError(Stokes3dError):
    """A solver or integrator failed (nonconvergence, conditioning, drift)."""


class BudgetError(Stokes3dError):
    """A configured enumeration or iteration budget was exceeded."""
