"""Multi-machine transient stability analysis with individual, equivalent and inner-group machines."""

from .errors import AnalysisError, CaseError, SimulationError, TSAError

__version__ = "0.1.0"

__all__ = ["AnalysisError", "CaseError", "SimulationError", "TSAError", "__version__"]
