"""Exception hierarchy shared by every stage of the pipeline."""


class GridStressError(Exception):
    """Base class for all errors raised by gridstress."""


class CaseFormatError(GridStressError, ValueError):
    """A case file could not be parsed.

    ``line`` is the 1-based line number of the offending row when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidNetworkError(GridStressError, ValueError):
    """A network (or an argument referring to it) violates a model invariant."""


class InfeasibleError(GridStressError):
    """The requested operating point cannot be computed."""


class DispatchError(InfeasibleError):
    """Load rebalancing pushed a generator outside its limits."""


class SingularNetworkError(InfeasibleError):
    """The reduced susceptance system is singular or injections are unbalanced."""


class IslandingError(InfeasibleError):
    """An outage or switching action would split the analyzed island."""


class NoContingenciesError(GridStressError):
    """No valid (non-islanding) outage columns are available for a reduction."""
