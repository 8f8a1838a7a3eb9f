"""Exception types raised by cqed_sim.

Validation problems derive from ``ValueError`` so callers that only care
about bad input can catch that; numerical breakdowns derive from
``NumericalError`` (a ``RuntimeError``).
"""


class CqedError(Exception):
    """Base class for all package errors."""


class ValidationError(CqedError, ValueError):
    pass


class NumericalError(CqedError, RuntimeError):
    pass


# circuit-model
class NonPositiveDefinite(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class InvalidSpec(ValidationError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        msg = "; ".join(str(d) for d in self.diagnostics) or "invalid circuit spec"
        super().__init__(msg)


# operator-algebra
class InvalidCutoff(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# hamiltonian-builder
class MissingFlux(ValidationError):
    pass


# subspace-reduction
class EigensolveFailure(NumericalError):
    pass


class IncompleteCover(ValidationError):
    pass


class GridEdge(ValidationError):
    pass


# spectral-analysis
class MissingLabel(ValidationError):
    pass


class NoBracket(ValidationError):
    pass


class AmbiguousLabel(UserWarning):
    """Best overlap for a label is below 0.5 (strong hybridization); reported, not raised."""


# time-evolution
class StepFailure(NumericalError):
    pass


class RangeExit(NumericalError):
    pass


# pulse-library
class NonMonotoneMap(ValidationError):
    pass


class ZeroAnharmonicity(ValidationError):
    pass


class BudgetExhausted(NumericalError):
    pass


# gate-metrics
class ZeroAnchor(NumericalError):
    pass


class UndefinedArg(NumericalError):
    pass


# cli-harness
class ConfigError(ValidationError):
    pass


class UnknownKey(ConfigError):
    pass


class MissingUnits(ConfigError):
    pass
