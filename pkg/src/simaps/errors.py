"""Exception hierarchy shared by every stage of the pipeline."""


class SIMapsError(Exception):
    """Base class for all errors raised by this package."""


# -- dataset loading -------------------------------------------------------

class DatasetError(SIMapsError):
    pass


class MissingFile(DatasetError):
    pass


class DimensionMismatch(DatasetError):
    pass


class BadPose(DatasetError):
    pass


class UnknownClassId(DatasetError):
    pass


class BadIntrinsics(DatasetError):
    pass


class BadCatalog(DatasetError):
    pass


class BadDepth(DatasetError):
    pass


# -- mapping ---------------------------------------------------------------

class InvalidDepth(SIMapsError, ValueError):
    pass


class MixedFrameIds(SIMapsError, ValueError):
    pass


class UnknownClass(SIMapsError, KeyError):
    pass


class StuffClassRequested(SIMapsError, ValueError):
    pass


class EmptyGraph(SIMapsError, ValueError):
    pass


class ModularityDecreased(SIMapsError, AssertionError):
    """Raised when the monotonicity check of the Louvain loop fails."""


class LabelMismatch(SIMapsError, ValueError):
    pass


# -- serialization ---------------------------------------------------------

class FormatError(SIMapsError, ValueError):
    pass


class BadMagic(FormatError):
    pass


class Truncated(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


# -- navigation ------------------------------------------------------------

class NavError(SIMapsError):
    pass


class NotEnoughInstances(NavError):
    pass


class NoSuchInstance(NavError):
    pass


class EmptyView(NavError):
    pass


class Unreachable(NavError):
    pass


class ProgramError(SIMapsError):
    """A navigation program failed to parse; carries a 1-based position."""

    kind = "ProgramError"

    def __init__(self, message, line, col):
        super().__init__(f"{self.kind} at line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class DSLSyntaxError(ProgramError):
    kind = "SyntaxError"


class UnknownPrimitive(ProgramError):
    kind = "UnknownPrimitive"


class ArityError(ProgramError):
    kind = "ArityError"


class ArgTypeError(ProgramError):
    kind = "TypeError"


# -- synthetic scenes / evaluation / config --------------------------------

class PlacementInfeasible(SIMapsError):
    pass


class EmptyEpisodeSet(SIMapsError, ValueError):
    pass


class ConfigMismatch(SIMapsError, ValueError):
    pass


class UndefinedPQ(SIMapsError, ValueError):
    pass


class ConfigError(SIMapsError, ValueError):
    pass
