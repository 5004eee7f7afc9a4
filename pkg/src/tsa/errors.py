"""Exception types raised by the toolkit."""


class TSAError(Exception):
    """Base class for all toolkit errors."""


class CaseError(TSAError):
    """A case file is unreadable, malformed or physically inconsistent."""


class SimulationError(TSAError):
    """Integration could not produce a finite trajectory."""


class AnalysisError(TSAError):
    """Invalid input to a frame, grouping or stability operation."""
