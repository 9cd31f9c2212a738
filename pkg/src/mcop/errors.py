"""Exception hierarchy with stable exit-code categories for the CLI.

Categories: 2 = configuration, 3 = file format / I-O, 4 = domain invariant.
"""


class McopError(Exception):
    exit_code = 1


class ConfigError(McopError):
    """Bad configuration value; the message names the offending key."""

    exit_code = 2


class FormatError(McopError):
    """Malformed or unsupported file content."""

    exit_code = 3


class InvariantError(McopError):
    """A domain invariant does not hold."""

    exit_code = 4


class PlyHeaderError(FormatError):
    def __init__(self, line_no, message):
        super().__init__(f"PLY header line {line_no}: {message}")
        self.line_no = line_no


class PlyEncodingError(FormatError):
    def __init__(self, line_no, encoding):
        super().__init__(f"PLY header line {line_no}: unsupported encoding {encoding!r}")
        self.line_no = line_no
        self.encoding = encoding


class PlyTruncatedError(FormatError):
    def __init__(self, offset, message):
        super().__init__(f"PLY body truncated at byte offset {offset}: {message}")
        self.offset = offset


class BadMagicError(FormatError):
    def __init__(self, expected, got):
        super().__init__(f"bad magic: expected {expected!r}, got {got!r}")


class VersionError(FormatError):
    def __init__(self, expected, got):
        super().__init__(f"unsupported container version {got} (expected {expected})")


class SizeMismatchError(FormatError):
    def __init__(self, expected, got):
        super().__init__(f"container size mismatch: header implies {expected} bytes, file has {got}")


class DegeneratePathError(InvariantError):
    pass


class SelfIntersectingOffsetError(InvariantError):
    def __init__(self, segment):
        super().__init__(f"offset polyline self-intersects near segment {segment} (not repaired)")
        self.segment = segment


class WindowBoundsError(InvariantError):
    pass


class EmptyBankError(InvariantError):
    pass


class EmptyCloudError(InvariantError):
    pass


class DimensionMismatchError(InvariantError):
    pass


class ZeroRotationSumError(InvariantError):
    def __init__(self, column):
        super().__init__(f"rotation column {column} sums to zero; cannot normalize")
        self.column = column


class RotationSumError(InvariantError):
    def __init__(self, column, deviation, tol):
        super().__init__(
            f"rotation column {column} sum deviates from pi by {deviation:.3e} (tolerance {tol:.1e})"
        )
        self.column = column
        self.deviation = deviation


class IncompletePatchError(InvariantError):
    pass
