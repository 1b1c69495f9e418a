"""Exception hierarchy shared across the package.

The CLI maps :class:`DataError` subclasses to exit code 2 and
:class:`ConfigError` to exit code 1.
"""


class ReidError(Exception):
    """Base class for every error raised deliberately by edgereid."""


class ConfigError(ReidError):
    pass


class DataError(ReidError):
    pass


class ImageDecodeError(DataError):
    pass


class SchemaViolation(DataError):
    def __init__(self, value: int, row: int, col: int, class_count: int):
        self.value = value
        self.row = row
        self.col = col
        super().__init__(
            f"label {value} at (row={row}, col={col}) is outside schema "
            f"with {class_count} classes"
        )


class SchemaMismatch(DataError):
    pass


class FilenameParseError(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"not a Market-1501 style filename: {name!r}")


class DimensionMismatch(DataError):
    def __init__(self, image_shape, mask_shape):
        self.image_shape = image_shape
        self.mask_shape = mask_shape
        super().__init__(
            f"image is {image_shape[1]}x{image_shape[0]} but mask is "
            f"{mask_shape[1]}x{mask_shape[0]} (width x height)"
        )


class NoPersonPixels(DataError):
    pass


class IncompatibleFeatures(DataError):
    pass


class BinCountMismatch(DataError):
    pass


class ProtocolError(DataError):
    """Raised while decoding a feature message."""


class BadMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class LengthMismatch(ProtocolError):
    pass


class MalformedMessage(ProtocolError):
    pass


class FieldOverflow(DataError):
    """A value does not fit its fixed-width wire field."""


class StoreCorrupted(DataError):
    pass
