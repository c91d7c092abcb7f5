"""Exception hierarchy for nudge_iv.

Everything raised on purpose derives from NudgeIvError so callers (and the
CLI) can separate domain failures from programming errors.
"""


class NudgeIvError(Exception):
    """Base class for all nudge_iv errors."""


# --- scenario validation ---------------------------------------------------

class SpecValidationError(NudgeIvError):
    """A scenario violates a structural invariant."""


class RangeViolation(SpecValidationError):
    """Link value leaves the support required by the threshold law."""


class RelevanceViolation(SpecValidationError):
    """Instrument does not move the treatment somewhere it must."""


class DegenerateConfounder(SpecValidationError):
    """Confounder law carries no probability mass."""


# --- simulation ------------------------------------------------------------

class EmptyPanel(NudgeIvError):
    """Zero-row panel requested or supplied."""


# --- exact oracle ----------------------------------------------------------

class ZeroDenominator(NudgeIvError):
    """Population ratio has a (numerically) zero denominator."""


class UndefinedTarget(NudgeIvError):
    """Conditioning event of the requested target has zero probability."""


# --- estimation ------------------------------------------------------------

class EstimationError(NudgeIvError):
    """Base class for sample-estimator failures."""


class MissingArm(EstimationError):
    """An instrument arm contains no observations."""


class EmptyStratum(EstimationError):
    """A covariate stratum is missing one of the instrument arms."""


class DegenerateFirstStage(EstimationError):
    """First-stage denominator below the numerical-zero floor."""


class InvalidScale(EstimationError):
    """Requested contrast scale incompatible with the estimated means."""


class NoSignChange(EstimationError):
    """Moment function keeps one sign over the observed outcome grid."""


class YGridTooLarge(EstimationError):
    """Distinct-outcome grid exceeds the scan cap."""


# --- inference -------------------------------------------------------------

class TooManyFailures(NudgeIvError):
    """More than the tolerated share of resampling replicates failed."""


# --- io --------------------------------------------------------------------

class ParseError(NudgeIvError):
    """Input file is not syntactically valid (position included)."""


class SchemaError(NudgeIvError):
    """Input parses but does not match the documented schema."""


class DomainError(NudgeIvError):
    """A parsed value is outside its domain (bad bit, non-finite number)."""
