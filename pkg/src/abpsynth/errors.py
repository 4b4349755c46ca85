"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """A file could not be parsed; the message names the offending location."""


class DegenerateInputError(ValidationError):
    """Input is structurally valid but degenerate (zero variance, all-zero signal)."""


class IllConditionedError(ValueError):
    """A linear system is numerically singular or too ill-conditioned to solve."""


class TrainingError(RuntimeError):
    """Training diverged or could not proceed; the message names the step."""


class EvaluationError(RuntimeError):
    """Too many per-segment synthesis failures to produce a trustworthy report."""
