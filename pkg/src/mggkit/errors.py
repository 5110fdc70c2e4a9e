"""Exception types shared across the package."""


class MapError(ValueError):
    """Raised for malformed or unusable map files."""


class GraphError(ValueError):
    """Raised when a guidance graph violates its invariants."""


class RepairError(RuntimeError):
    """Raised when edge-reversal repair hits its iteration cap."""
