class LevsimError(Exception):
    """Base class for all levsim errors."""


class ConfigError(LevsimError):
    pass


class DataError(LevsimError):
    pass


class EngineError(LevsimError, ValueError):
    """Invalid portfolio operation (overselling, overspending, bankrupt rebalance)."""
