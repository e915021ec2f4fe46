"""Exception hierarchy shared by all modules."""


class MonotoneFlowError(Exception):
    """Base class for library errors."""


class InfeasibleSetError(MonotoneFlowError):
    """A polyhedron whose halfspaces have empty intersection."""


class DegenerateDirectionError(MonotoneFlowError):
    """A unit normal was requested at a point of the set itself."""


class DomainError(MonotoneFlowError):
    """A point lies outside the domain required by the operation."""


class DomainMismatchError(MonotoneFlowError):
    """Operands of a sum live on incompatible domains or dimensions."""


class UnsupportedOperatorError(MonotoneFlowError):
    """The requested operator or oracle is outside the catalog."""


class WitnessNotFoundError(MonotoneFlowError):
    """A finite search did not exhibit the requested witness.

    This signals a numerical shortfall, not the failure of the underlying
    mathematical statement.
    """


class IntegratorDiagnosticError(MonotoneFlowError):
    """A run-time bound of the regularized integration was violated."""

    def __init__(self, message, lam=None, index=None, margin=None):
        super().__init__(message)
        self.lam = lam
        self.index = index
        self.margin = margin


class BlowUpError(IntegratorDiagnosticError):
    """The state became non-finite."""


class MultiplierBoundError(MonotoneFlowError):
    """The extracted normal multiplier exceeds its a-priori bound."""

    def __init__(self, message, index=None, margin=None):
        super().__init__(message)
        self.index = index
        self.margin = margin


class OracleFailureError(MonotoneFlowError):
    """The event-driven friction oracle exceeded its event cap."""


class StartOutsideError(MonotoneFlowError):
    """The initial value already exceeds the sublevel threshold."""


class InconsistencyError(MonotoneFlowError):
    """Two quantities that must agree in kind (finite or not) disagree."""


class ConfigError(MonotoneFlowError):
    """Configuration failed validation."""

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path


class ScenarioError(MonotoneFlowError):
    """Inconsistent scenario data (dimensions, bounds, initial point)."""
