"""Exception hierarchy. Every error carries a stable ``code`` string that
ends up in QC reports and CLI messages."""


class LungQCError(Exception):
    code = "ERROR"

    def __init__(self, message="", code=None):
        if code is not None:
            self.code = code
        super().__init__(message or self.code)


# -- DICOM parsing -----------------------------------------------------------

class DicomError(LungQCError):
    code = "MALFORMED"


class NotDicomError(DicomError):
    code = "NOT_DICOM"


class UnsupportedTransferSyntaxError(DicomError):
    code = "UNSUPPORTED_TRANSFER_SYNTAX"


class MalformedDicomError(DicomError):
    code = "MALFORMED"


# -- series assembly ---------------------------------------------------------

class SeriesError(LungQCError):
    """Series-level failure; ``code`` is a QC rejection reason."""
    code = "MALFORMED_SERIES"


# -- IO / export -------------------------------------------------------------

class ExportError(LungQCError):
    code = "IO_ERROR"


class DuplicateOutputError(ExportError):
    code = "DUPLICATE_OUTPUT"


# -- score tables ------------------------------------------------------------

class SchemaError(LungQCError):
    code = "SCHEMA_ERROR"


class LabelConflictError(SchemaError):
    code = "LABEL_CONFLICT"


class ScoreRangeError(SchemaError):
    code = "RANGE_ERROR"


# -- statistics --------------------------------------------------------------

class StatsError(LungQCError, ValueError):
    code = "STATS_ERROR"


class EmptyInputError(StatsError):
    code = "EMPTY_INPUT"


class DegenerateLabelsError(StatsError):
    code = "DEGENERATE_LABELS"


class DegenerateVarianceError(StatsError):
    code = "DEGENERATE_VARIANCE"


class LengthMismatchError(StatsError):
    code = "LENGTH_MISMATCH"
