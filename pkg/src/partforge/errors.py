"""Exception taxonomy shared by all partforge modules.

CLI exit codes: ConfigError -> 2, StateError -> 3, NumericError -> 4.
ParameterError is treated as a usage/config problem (exit 2).
"""


class PartforgeError(Exception):
    """Base class for all partforge errors."""


class ParameterError(PartforgeError, ValueError):
    """An argument violates a documented precondition."""


class GeometryError(PartforgeError):
    """Input geometry is empty, degenerate, or otherwise unusable."""


class DegenerateOutputError(GeometryError):
    """An operation produced no usable geometry (e.g. empty isosurface)."""


class NumericError(PartforgeError):
    """Non-finite values where finite ones are required."""


class StateError(PartforgeError):
    """A required artifact (checkpoint, frozen model) is missing or stale."""


class ConfigError(PartforgeError):
    """Configuration is invalid. `violations` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ManifestIOError(PartforgeError, OSError):
    """A dataset file is missing or corrupt. `path` names the offender."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(message if path is None else f"{message}: {path}")


class VersionError(PartforgeError):
    """Serialized artifact has an unsupported format version."""
