"""Exception taxonomy shared across the package.

ConfigurationError: the requested model/dataset geometry is impossible or
inconsistent (wrong channel counts, shape mismatches, invalid specs).
UsageError: an API was called out of contract (backward on a consumed tape,
bad CLI flags).
NumericsError: a NaN/Inf surfaced where finite values are guaranteed.
"""


class ConfigurationError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class NumericsError(RuntimeError):
    pass
