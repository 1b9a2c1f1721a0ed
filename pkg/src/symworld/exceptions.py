"""Exception types shared across the package."""


class SymWorldError(Exception):
    """Base class for all package errors."""


class SchemaError(SymWorldError, ValueError):
    """Two objects were built against different feature schemas."""


class DomainError(SymWorldError, ValueError):
    """A feature value fell outside its declared domain."""


class ConfigError(SymWorldError, ValueError):
    """Invalid environment, agent or experiment configuration."""


class ContractError(SymWorldError, RuntimeError):
    """An operation was called in a state that forbids it."""


class InvariantViolation(SymWorldError, AssertionError):
    """An internal data-structure invariant no longer holds."""


class InsufficientDataError(SymWorldError, ValueError):
    """Not enough episodes to compute a metric."""
