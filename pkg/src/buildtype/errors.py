"""Exception types shared across the package.

Most are thin ValueError subclasses so callers can catch either the
specific condition or plain ValueError.
"""


class BuildtypeError(ValueError):
    """Base class for all package errors."""


# --- raster / vector parsing ------------------------------------------------

class MissingHeaderKey(BuildtypeError):
    pass


class CountMismatch(BuildtypeError):
    pass


class NonNumericToken(BuildtypeError):
    pass


class InvalidHeaderValue(BuildtypeError):
    pass


class IndexOutOfRange(BuildtypeError):
    pass


class MalformedDocument(BuildtypeError):
    pass


class UnsupportedGeometryType(BuildtypeError):
    pass


class UnclosedRing(BuildtypeError):
    pass


class LengthMismatch(BuildtypeError):
    pass


# --- geometry ----------------------------------------------------------------

class DegenerateRing(BuildtypeError):
    pass


class NoCellsCovered(BuildtypeError):
    pass


# --- feature table -----------------------------------------------------------

class MissingLabel(BuildtypeError):
    pass


class DuplicateUid(BuildtypeError):
    pass


class TableFormatError(BuildtypeError):
    pass


class InsufficientRows(BuildtypeError):
    pass


class NonNumericFeature(BuildtypeError):
    pass


class UnknownKeepFeature(BuildtypeError):
    pass


class UnknownFeature(BuildtypeError):
    pass


class EmptyFitSet(BuildtypeError):
    pass


class ClassTooSmall(BuildtypeError):
    pass


# --- network / training ------------------------------------------------------

class InvalidLayerLadder(BuildtypeError):
    pass


class ShapeMismatch(BuildtypeError):
    pass


class NonFiniteGradient(BuildtypeError):
    pass


class SchemaMismatch(BuildtypeError):
    pass


class CorruptModel(BuildtypeError):
    pass


class EmptySplit(BuildtypeError):
    pass


class EmptySet(BuildtypeError):
    pass


class DivergedLoss(BuildtypeError):
    pass


# --- synthetic data ----------------------------------------------------------

class InfeasibleConfig(BuildtypeError):
    pass


class SceneOverflow(BuildtypeError):
    pass
