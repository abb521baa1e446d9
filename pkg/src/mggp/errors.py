"""Exception types shared across the package."""


class MggpError(Exception):
    """Base class for all package-specific errors."""


class StructuralError(MggpError):
    """A tree, node locator or feature index is malformed or inconsistent."""


class DataError(MggpError):
    """A dataset cannot be ingested or is otherwise unusable."""


class DegenerateDataError(DataError):
    """The target values are constant, so a training fit is undefined."""
