class ConfigurationError(ValueError):
    """Invalid parameters or configuration values."""


class CoverageError(ValueError):
    """A requested point falls outside what a precomputed table covers."""
