"""Exception types shared across the package."""


class SfGruError(Exception):
    """Base class for all errors raised by sfgru."""


class ShapeError(SfGruError, ValueError):
    def __init__(self, what, expected, got):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected shape {expected}, got {got}")


class NumericalError(SfGruError, ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class SchemaError(SfGruError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class MissingModalityError(SfGruError, KeyError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"modality {key!r} is not available")

    def __str__(self):
        return self.args[0]


class InsufficientHistory(SfGruError):
    """Raised by window sampling when a track cannot supply the requested window.

    Callers treat this as a skip, not a failure.
    """

    def __init__(self, track_id, needed, available):
        self.track_id = track_id
        self.needed = needed
        self.available = available
        super().__init__(
            f"track {track_id!r}: needs {needed} frames of history, has {available}"
        )


class GeometryError(SfGruError, ValueError):
    """Degenerate or non-overlapping boxes."""
