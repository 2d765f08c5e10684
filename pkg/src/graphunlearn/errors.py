"""Exception taxonomy shared across the package.

Configuration / parse problems map to CLI exit code 1, runtime failures
(missing edges, solver breakdowns, non-convergence) to exit code 2.
"""


class GraphUnlearnError(Exception):
    """Base class for all package errors."""


class ConfigError(GraphUnlearnError):
    """Invalid parameter, missing field, or domain violation."""


class ParseError(ConfigError):
    """Malformed input file; message carries file context and line number."""


class NotFoundError(GraphUnlearnError):
    """Request references an edge/node that does not exist (state unchanged)."""


class TrainingError(GraphUnlearnError):
    """Optimizer failed to reach the requested gradient tolerance."""


class SolveError(GraphUnlearnError):
    """SPD linear solve broke down; signals lambda/tolerance misconfiguration."""
