"""Exception types shared across the package."""


class TapError(Exception):
    """Base class for all package errors."""


class BoundsError(TapError, IndexError):
    def __init__(self, scale: str, op: str, index: int, limit: int, what: str = "index"):
        self.scale, self.op, self.index, self.limit = scale, op, index, limit
        super().__init__(f"{scale}/{op}: {what} {index} out of bounds (limit {limit})")


class DegenerateSplitError(TapError, ValueError):
    pass


class CapacityError(TapError):
    pass


class ShapeError(TapError, ValueError):
    pass


class NumericsError(TapError, ArithmeticError):
    pass


class DomainError(TapError, ValueError):
    pass


class ParseError(TapError, ValueError):
    def __init__(self, message: str, line_no: int | None = None, offset: int | None = None):
        self.line_no = line_no
        self.offset = offset
        loc = []
        if line_no is not None:
            loc.append(f"line {line_no}")
        if offset is not None:
            loc.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)


class VersionError(TapError):
    pass


class EnvError(TapError):
    pass


class ConfigError(TapError, ValueError):
    pass


class InsufficientGrid(TapError, ValueError):
    pass
