"""Exception hierarchy shared by all delayminer modules."""


class DelayMinerError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DelayMinerError):
    """Input file does not match the expected schema (missing column, bad JSON shape)."""


class LogValidationError(DelayMinerError):
    """An event log row or instance violates a log invariant."""


class ModelValidationError(DelayMinerError):
    """A simulation model violates a structural invariant."""


class SimulationError(DelayMinerError):
    """A simulation run cannot proceed (deadlock, exhausted event budget)."""


class OptimizationError(DelayMinerError):
    """The scale-factor optimization could not produce any usable trial."""
