"""Waveform and pressure-value error metrics, AAMI checking, BHS grading.

AAMI: mean signed error within +/-5 mmHg and sample standard deviation
within 8 mmHg, both bounds inclusive.  BHS: cumulative percentages of
absolute errors at the 5/10/15 mmHg thresholds (inclusive), graded A/B/C/D
against the 60/85/95, 50/75/90, 40/65/85 bands, best grade first.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, ValidationError
from .preprocess import denormalize

DENORM_MODES = ("reference-stats", "normalized")

_BHS_BANDS = (("A", 60.0, 85.0, 95.0), ("B", 50.0, 75.0, 90.0), ("C", 40.0, 65.0, 85.0))


@dataclass
class ErrorStats:
    mae: float
    rmse: float
    me: float   # mean signed error
    sd: float   # sample standard deviation of the signed error
    n: int

    def to_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "me": self.me,
                "sd": self.sd, "n": self.n}


@dataclass
class BhsResult:
    grade: str
    p5: float
    p10: float
    p15: float

    def to_dict(self) -> dict:
        return {"grade": self.grade, "p5": self.p5, "p10": self.p10, "p15": self.p15}


@dataclass
class EvalReport:
    waveform: ErrorStats
    sbp: ErrorStats
    dbp: ErrorStats
    aami_sbp_pass: bool
    aami_dbp_pass: bool
    bhs_sbp: BhsResult
    bhs_dbp: BhsResult
    denorm_mode: str
    model_digest: str = ""
    n_failed: int = 0

    def to_dict(self) -> dict:
        return {
            "waveform": self.waveform.to_dict(),
            "sbp": self.sbp.to_dict(),
            "dbp": self.dbp.to_dict(),
            "aami": {"sbp_pass": self.aami_sbp_pass, "dbp_pass": self.aami_dbp_pass},
            "bhs": {"sbp": self.bhs_sbp.to_dict(), "dbp": self.bhs_dbp.to_dict()},
            "denorm_mode": self.denorm_mode,
            "model_digest": self.model_digest,
            "n_failed": self.n_failed,
        }


def _check_lengths(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if len(y) == 0 or len(y) != len(yhat):
        raise ValidationError(
            f"need equal non-empty vectors, got lengths {len(y)} and {len(yhat)}"
        )
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _check_lengths(y, yhat)
    return float(np.mean(np.abs(yhat - y)))


def rmse(y, yhat) -> float:
    y, yhat = _check_lengths(y, yhat)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def _sample_sd(errors: np.ndarray) -> float:
    return float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0


def error_stats(signed_errors) -> ErrorStats:
    errors = np.asarray(signed_errors, dtype=float).ravel()
    if len(errors) == 0:
        raise ValidationError("error list must be non-empty")
    return ErrorStats(
        mae=float(np.mean(np.abs(errors))),
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        me=float(np.mean(errors)),
        sd=_sample_sd(errors),
        n=len(errors),
    )


def extract_sbp_dbp(abp_segment) -> tuple:
    """Systolic/diastolic pressures: the segment maximum and minimum."""
    seg = np.asarray(abp_segment, dtype=float)
    if seg.size == 0 or not np.all(np.isfinite(seg)):
        raise ValidationError("pressure segment must be non-empty and finite")
    return float(seg.max()), float(seg.min())


def aami_check(signed_errors) -> tuple:
    """(pass, mean error, sample sd); bounds 5 and 8 mmHg, inclusive."""
    errors = np.asarray(signed_errors, dtype=float).ravel()
    if len(errors) == 0:
        raise ValidationError("error list must be non-empty")
    me = float(np.mean(errors))
    sd = _sample_sd(errors)
    return (abs(me) <= 5.0 and sd <= 8.0), me, sd


def bhs_grade(absolute_errors) -> BhsResult:
    """Grade cumulative error percentages against the three letter bands."""
    errors = np.abs(np.asarray(absolute_errors, dtype=float).ravel())
    if len(errors) == 0:
        raise ValidationError("error list must be non-empty")
    p5, p10, p15 = (float(100.0 * np.mean(errors <= t)) for t in (5.0, 10.0, 15.0))
    grade = "D"
    for letter, need5, need10, need15 in _BHS_BANDS:
        if p5 >= need5 and p10 >= need10 and p15 >= need15:
            grade = letter
            break
    return BhsResult(grade=grade, p5=p5, p10=p10, p15=p15)


def evaluate_pipeline(synthesizer, pairs, denorm_mode: str = "reference-stats",
                      per_subject: bool = False, model_digest: str = "",
                      max_failure_fraction: float = 0.10) -> EvalReport:
    """Synthesize every test segment and aggregate the error statistics.

    ``synthesizer`` maps one normalized PPG segment to a normalized ABP
    segment.  In ``reference-stats`` mode both prediction and reference are
    denormalized with the reference segment's own statistics, so the report
    is in mmHg; ``normalized`` keeps z-units.  Per-segment synthesis
    failures are skipped, but more than ``max_failure_fraction`` of them
    aborts the evaluation.  ``per_subject`` averages the SBP/DBP errors
    within each subject before the AAMI/BHS statistics.
    """
    if denorm_mode not in DENORM_MODES:
        raise ValidationError(f"denorm_mode must be one of {DENORM_MODES}")
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("test set is empty")
    waveform_errors = []
    sbp_rows = []   # (subject, signed error)
    dbp_rows = []
    failures = []
    for i, pair in enumerate(pairs):
        try:
            pred = np.asarray(synthesizer(pair.ppg), dtype=float)
            if pred.shape != pair.abp.shape:
                raise ValidationError(
                    f"synthesizer returned shape {pred.shape}, expected {pair.abp.shape}"
                )
        except Exception as exc:  # noqa: BLE001 - failures are part of the report
            failures.append(f"segment {i} ({pair.source[0]}): {exc}")
            continue
        if denorm_mode == "reference-stats":
            ref = denormalize(pair.abp, pair.abp_stats)
            hat = denormalize(pred, pair.abp_stats)
        else:
            ref, hat = pair.abp, pred
        waveform_errors.append(hat - ref)
        sbp_ref, dbp_ref = extract_sbp_dbp(ref)
        sbp_hat, dbp_hat = extract_sbp_dbp(hat)
        sbp_rows.append((pair.source[0], sbp_hat - sbp_ref))
        dbp_rows.append((pair.source[0], dbp_hat - dbp_ref))
    if len(failures) > max_failure_fraction * len(pairs):
        raise EvaluationError(
            f"{len(failures)}/{len(pairs)} segments failed synthesis: "
            + "; ".join(failures[:5])
        )
    if not waveform_errors:
        raise EvaluationError("no segment was successfully synthesized")

    def collapse(rows):
        if not per_subject:
            return np.array([e for _, e in rows])
        by_subject: dict = {}
        for subject, e in rows:
            by_subject.setdefault(subject, []).append(e)
        return np.array([np.mean(v) for _, v in sorted(by_subject.items())])

    sbp_errors = collapse(sbp_rows)
    dbp_errors = collapse(dbp_rows)
    sbp_pass, _, _ = aami_check(sbp_errors)
    dbp_pass, _, _ = aami_check(dbp_errors)
    return EvalReport(
        waveform=error_stats(np.concatenate(waveform_errors)),
        sbp=error_stats(sbp_errors),
        dbp=error_stats(dbp_errors),
        aami_sbp_pass=bool(sbp_pass),
        aami_dbp_pass=bool(dbp_pass),
        bhs_sbp=bhs_grade(np.abs(sbp_errors)),
        bhs_dbp=bhs_grade(np.abs(dbp_errors)),
        denorm_mode=denorm_mode,
        model_digest=model_digest,
        n_failed=len(failures),
    )
