"""Exception hierarchy shared across the pipeline."""


class VQ3DError(Exception):
    """Base class for all vq3dkit errors."""


class DomainError(VQ3DError):
    """An input violates the mathematical domain of an operation."""


class DirectionError(DomainError):
    """A pose with the wrong camera/world direction was passed where the
    other convention is required.  Convert explicitly first."""


class BehindCameraError(DomainError):
    """Attempted to project a point with non-positive camera-frame depth."""


class ParseError(VQ3DError):
    """A file could not be parsed.  Carries file name and offset context."""

    def __init__(self, message, *, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.offset = offset


class IntegrityError(VQ3DError):
    """A parsed model contains dangling cross-references."""


class IoError(VQ3DError):
    """Reading or writing model files failed at the OS level."""


class UnsupportedModel(VQ3DError):
    """Camera model cannot be converted to pinhole intrinsics."""


class FrameNameError(VQ3DError):
    """One or more image names do not match the frame-index pattern."""

    def __init__(self, names, pattern):
        self.names = list(names)
        self.pattern = pattern
        shown = ", ".join(self.names[:5])
        more = "" if len(self.names) <= 5 else f" (+{len(self.names) - 5} more)"
        super().__init__(
            f"image names not matching frame pattern {pattern!r}: {shown}{more}"
        )


class NoPoseError(VQ3DError):
    """No response-track frame has an estimated pose."""


class MissingDataError(VQ3DError):
    """Required input data (e.g. a depth sample) is absent."""


class UnregistrableError(VQ3DError):
    """A submap cannot be registered into the world system."""


class SchemaError(VQ3DError):
    """An input file does not conform to its documented schema."""
