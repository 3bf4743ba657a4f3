"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies rather than a bare ValueError.
"""


class DomainError(ValueError):
    """Arguments are outside the mathematical domain of an operation."""


class ConfigError(DomainError):
    """A configuration object or scenario file is structurally invalid."""


class RegimeError(DomainError):
    """A closed-form expression was requested outside its validity regime."""


class InvariantError(RuntimeError):
    """An internal self-check failed; results must not be trusted."""
