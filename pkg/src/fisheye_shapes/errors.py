"""Exception hierarchy shared by every module of the package."""


class FisheyeShapesError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FisheyeShapesError):
    """Invalid or inconsistent input data. Maps to CLI exit code 2."""


class NumericError(FisheyeShapesError):
    """A numerical procedure failed. Maps to CLI exit code 3."""


# camera
class FieldAngleExceeded(DataError):
    pass


class DegeneratePoint(DataError):
    pass


class Unrepresentable(NumericError):
    pass


class FitDiverged(NumericError):
    pass


# geometry / shapes / fitting / sampling
class DegenerateInput(DataError):
    pass


class InvalidContour(DataError):
    pass


class OutOfBounds(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class BothEmpty(DataError):
    pass


class NonConvexInput(DataError):
    pass


class CentroidOutside(DataError):
    pass


# detect_math
class NonFiniteInput(NumericError):
    pass


class AngleOutOfRange(DataError):
    pass


class CenterOutOfImage(DataError):
    pass


class AssignmentConflict(DataError):
    pass


# metrics
class EmptyGroundTruth(DataError):
    pass


# synth
class PlacementFailed(NumericError):
    pass


class ObjectBehindCamera(DataError):
    pass


# io
class ParseError(DataError):
    pass


class SchemaError(DataError):
    """Structural problem in an annotation file."""


class SchemaVersionMismatch(SchemaError):
    pass


class DuplicateImageId(SchemaError):
    pass
