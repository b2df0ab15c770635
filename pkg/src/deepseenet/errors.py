"""Exception hierarchy shared by the library and the command line."""


class ConfigError(ValueError):
    """Missing or invalid configuration key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class DataError(ValueError):
    """Bad, missing or inconsistent input data."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
