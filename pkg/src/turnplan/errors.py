"""Exception types raised across the package."""


class TurnplanError(Exception):
    """Base class for all package errors."""


class StlParseError(TurnplanError):
    def __init__(self, message, offset=None, record=None):
        self.offset = offset
        self.record = record
        where = []
        if record is not None:
            where.append(f"record {record}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class VoxelizationError(TurnplanError):
    """Inconsistent ray parity, i.e. the mesh is not watertight."""

    def __init__(self, message, ray=None):
        self.ray = ray
        super().__init__(message)


class FrameMismatchError(TurnplanError):
    """Two grids or rasters do not share origin, spacing and dims."""


class IntegrityError(TurnplanError):
    """The as-turned shape cuts into the turnable closure."""


class InfeasibleError(TurnplanError):
    """No subset of actions turns the stock down to the target."""

    def __init__(self, message, residual_mm3=None, bbox=None):
        self.residual_mm3 = residual_mm3
        self.bbox = bbox
        super().__init__(message)


class ConfigError(TurnplanError):
    """Config document violates the schema; ``path`` names the field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
