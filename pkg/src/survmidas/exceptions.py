"""Exception types raised across the package."""


class SurvMidasError(Exception):
    """Base class for package errors."""


class SchemaError(SurvMidasError, ValueError):
    """Input table is missing required columns or has inconsistent layout."""


class ParseError(SurvMidasError, ValueError):
    """A cell could not be parsed as a number."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientFollowUpError(SurvMidasError, ValueError):
    """No unit is followed up to the horizon, so P(T~ >= t) > 0 fails."""


class DegenerateHorizonError(SurvMidasError, ValueError):
    """The marginal survival at the horizon is 0 or 1; ROC is undefined."""


class StratificationError(SurvMidasError, ValueError):
    pass


class CalibrationError(SurvMidasError, RuntimeError):
    pass


class ExtractionError(SurvMidasError, RuntimeError):
    """No admissible sub-dataset exists on the threshold grid."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
