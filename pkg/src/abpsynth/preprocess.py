"""Signal conditioning pipeline: filter, screen, detrend, align, segment, normalize.

Each record passes through six steps: a zero-phase Butterworth low-pass
(default 10 Hz cutoff, order 4), automated artifact screening into
contiguous clean spans, baseline removal by zeroing the level-5 db4
approximation band, cross-correlation alignment of the two channels,
fixed-length windowing (non-overlapping by default), and per-segment,
per-channel z-score normalization.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from . import wavelet
from .dataio import Record, load_records, save_records
from .errors import DegenerateInputError, ValidationError

DEFAULT_SEGMENT_LEN = 250
DEFAULT_MAX_LAG = 125  # one second at 125 Hz


@dataclass
class FilterSpec:
    cutoff_hz: float = 10.0
    order: int = 4
    zero_phase: bool = True

    def validate(self, fs: float) -> None:
        if self.order < 1:
            raise ValidationError(f"filter order must be >= 1, got {self.order}")
        if not (0.0 < self.cutoff_hz < fs / 2.0):
            raise ValidationError(
                f"cutoff must lie in (0, fs/2) = (0, {fs / 2}), got {self.cutoff_hz}"
            )


@dataclass
class ScreenPolicy:
    """Automated surrogate for manual artifact rejection."""

    abp_min_mmhg: float = 20.0
    abp_max_mmhg: float = 260.0
    flatline_max_s: float = 2.0
    guard_s: float = 0.2          # margin excluded around each bad sample
    min_span_len: int = DEFAULT_SEGMENT_LEN


@dataclass
class SegmentPair:
    """One aligned, z-scored (PPG, ABP) segment with inversion statistics."""

    ppg: np.ndarray
    abp: np.ndarray
    ppg_stats: tuple        # (mu, sigma) in source units
    abp_stats: tuple        # (mu, sigma) in mmHg
    source: tuple = ("", 0)  # (subject_id, sample offset in the record)

    def validate(self) -> None:
        if len(self.ppg) != len(self.abp):
            raise ValidationError("segment channels must have identical length")
        for name, (_, sigma) in (("ppg", self.ppg_stats), ("abp", self.abp_stats)):
            if not sigma > 0:
                raise ValidationError(f"{name} sigma must be positive, got {sigma}")


def lowpass_filter(wave: np.ndarray, fs: float, spec: FilterSpec | None = None) -> np.ndarray:
    """Butterworth low-pass; forward-backward (squared magnitude, zero phase) by default."""
    wave = np.asarray(wave, dtype=float)
    spec = spec or FilterSpec()
    spec.validate(fs)
    min_len = 3 * (spec.order + 1)
    if len(wave) <= min_len:
        raise ValidationError(
            f"wave too short to filter: {len(wave)} samples, need > {min_len}"
        )
    b, a = sps.butter(spec.order, spec.cutoff_hz / (fs / 2.0), btype="low")
    if spec.zero_phase:
        return sps.filtfilt(b, a, wave)
    return sps.lfilter(b, a, wave)


def butterworth_magnitude(freq_hz, cutoff_hz: float, fs: float, order: int):
    """Analytic |H(f)| of the designed digital low-pass (prewarped bilinear form)."""
    ratio = np.tan(np.pi * np.asarray(freq_hz, dtype=float) / fs) / np.tan(np.pi * cutoff_hz / fs)
    return 1.0 / np.sqrt(1.0 + ratio ** (2 * order))


def _flatline_mask(x: np.ndarray, max_run: int) -> np.ndarray:
    mask = np.zeros(len(x), dtype=bool)
    if len(x) < 2:
        return mask
    same = np.concatenate([[False], np.diff(x) == 0.0])
    run = 0
    for i, flag in enumerate(same):
        run = run + 1 if flag else 0
        if run >= max_run:
            mask[i - run:i + 1] = True
    return mask


def screen_artifacts(record: Record, policy: ScreenPolicy | None = None):
    """Split a record into clean spans, rejecting obvious artifacts.

    Bad samples are non-finite values in either channel, ABP excursions
    outside the plausible pressure range, and flat-line runs longer than the
    policy limit; a guard margin around each is excluded too.  Returns
    ``(spans, log)`` where spans are ``(start, end)`` half-open index pairs
    at least ``min_span_len`` long, and the log names each rejection cause.
    """
    record.validate()
    policy = policy or ScreenPolicy()
    n = len(record)
    bad = ~np.isfinite(record.ppg) | ~np.isfinite(record.abp)
    log = []
    if bad.any():
        log.append(f"{int(bad.sum())} non-finite samples")
    out_of_range = (record.abp < policy.abp_min_mmhg) | (record.abp > policy.abp_max_mmhg)
    out_of_range &= np.isfinite(record.abp)
    if out_of_range.any():
        log.append(
            f"{int(out_of_range.sum())} ABP samples outside "
            f"[{policy.abp_min_mmhg}, {policy.abp_max_mmhg}] mmHg"
        )
    bad |= out_of_range
    max_run = max(2, int(round(policy.flatline_max_s * record.fs)))
    flat = _flatline_mask(record.ppg, max_run) | _flatline_mask(record.abp, max_run)
    if flat.any():
        log.append(f"{int(flat.sum())} samples in flat-line runs > {policy.flatline_max_s} s")
    bad |= flat
    guard = int(round(policy.guard_s * record.fs))
    if guard > 0 and bad.any():
        idx = np.flatnonzero(bad)
        for i in idx:
            bad[max(0, i - guard):min(n, i + guard + 1)] = True
    spans = []
    start = None
    for i in range(n + 1):
        good = i < n and not bad[i]
        if good and start is None:
            start = i
        elif not good and start is not None:
            if i - start >= policy.min_span_len:
                spans.append((start, i))
            else:
                log.append(f"span [{start}, {i}) shorter than {policy.min_span_len}, dropped")
            start = None
    return spans, log


def remove_baseline(wave: np.ndarray) -> np.ndarray:
    """Five-level db4 decomposition; zero the coarse approximation; reconstruct."""
    wave = np.asarray(wave, dtype=float)
    approx, details, lengths = wavelet.wavedec(wave, levels=5)
    return wavelet.waverec(np.zeros_like(approx), details, lengths)


def cross_correlation(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    """Zero-padded cross-correlation at one lag; positive lag means y trails x."""
    n = len(x)
    if lag >= 0:
        return float(np.dot(x[:n - lag], y[lag:])) if lag < n else 0.0
    return float(np.dot(x[-lag:], y[:n + lag])) if -lag < n else 0.0


def align_pair(ppg: np.ndarray, abp: np.ndarray, max_lag: int = DEFAULT_MAX_LAG):
    """Find the lag maximizing the cross-correlation and crop to the overlap.

    The returned lag is positive when the ABP channel trails the PPG; ties
    prefer smaller |lag|, then the negative one.  Both channels come back
    cropped to the region where the shifted signals overlap.
    """
    ppg = np.asarray(ppg, dtype=float)
    abp = np.asarray(abp, dtype=float)
    n = len(ppg)
    if len(abp) != n:
        raise ValidationError("align_pair requires equal-length inputs")
    if not (0 < max_lag < n / 2):
        raise ValidationError(f"max_lag must lie in (0, n/2), got {max_lag} for n={n}")
    if not np.any(ppg) or not np.any(abp):
        raise DegenerateInputError("cross-correlation of an all-zero signal is degenerate")
    best_key, best_lag = None, 0
    for lag in range(-max_lag, max_lag + 1):
        r = cross_correlation(ppg, abp, lag)
        key = (-r, abs(lag), lag)
        if best_key is None or key < best_key:
            best_key, best_lag = key, lag
    lo = max(0, -best_lag)
    hi = n - max(0, best_lag)
    return best_lag, (ppg[lo:hi], abp[lo + best_lag:hi + best_lag])


def segment(ppg: np.ndarray, abp: np.ndarray, seg_len: int = DEFAULT_SEGMENT_LEN,
            stride: int | None = None):
    """Consecutive fixed-length windows from offset 0; trailing partial dropped.

    ``stride=None`` means non-overlapping windows (stride equal to the
    segment length).  Returns ``(ppg_window, abp_window, offset)`` triples;
    an input shorter than one window yields an empty list.
    """
    ppg = np.asarray(ppg, dtype=float)
    abp = np.asarray(abp, dtype=float)
    if len(ppg) != len(abp):
        raise ValidationError("segment requires equal-length inputs")
    if seg_len < 2:
        raise ValidationError(f"seg_len must be >= 2, got {seg_len}")
    if stride is None:
        stride = seg_len
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    out = []
    for off in range(0, len(ppg) - seg_len + 1, stride):
        out.append((ppg[off:off + seg_len], abp[off:off + seg_len], off))
    return out


def zscore(ppg_seg: np.ndarray, abp_seg: np.ndarray, source=("", 0)) -> SegmentPair:
    """Normalize each channel by its own mean and population standard deviation."""
    ppg_seg = np.asarray(ppg_seg, dtype=float)
    abp_seg = np.asarray(abp_seg, dtype=float)
    if len(ppg_seg) != len(abp_seg):
        raise ValidationError("zscore requires equal-length channels")
    stats = []
    normed = []
    for name, seg in (("ppg", ppg_seg), ("abp", abp_seg)):
        mu = float(seg.mean())
        sigma = float(seg.std())
        if sigma == 0.0:
            raise DegenerateInputError(f"{name} segment has zero variance")
        stats.append((mu, sigma))
        normed.append((seg - mu) / sigma)
    return SegmentPair(ppg=normed[0], abp=normed[1],
                       ppg_stats=stats[0], abp_stats=stats[1], source=tuple(source))


def denormalize(wave: np.ndarray, stats) -> np.ndarray:
    """Invert z-scoring: wave * sigma + mu."""
    mu, sigma = stats
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    return np.asarray(wave, dtype=float) * sigma + mu


def preprocess_record(record: Record, filter_spec: FilterSpec | None = None,
                      policy: ScreenPolicy | None = None,
                      seg_len: int = DEFAULT_SEGMENT_LEN,
                      stride: int | None = None,
                      max_lag: int = DEFAULT_MAX_LAG):
    """Run the full six-step pipeline on one record.

    Screening positions are computed on the raw record (a non-finite sample
    would otherwise contaminate the whole filtered signal); every other step
    then runs in order on each kept span.  Returns ``(pairs, info)`` where
    info records the kept spans, per-span alignment lags, and the rejection
    log.
    """
    filter_spec = filter_spec or FilterSpec()
    policy = policy or ScreenPolicy(min_span_len=seg_len)
    spans, log = screen_artifacts(record, policy)
    pairs = []
    lags = []
    for start, end in spans:
        span_ppg = lowpass_filter(record.ppg[start:end], record.fs, filter_spec)
        span_abp = lowpass_filter(record.abp[start:end], record.fs, filter_spec)
        span_ppg = remove_baseline(span_ppg)
        span_abp = remove_baseline(span_abp)
        lag_limit = min(max_lag, (len(span_ppg) - 1) // 2)
        if lag_limit < 1:
            log.append(f"span [{start}, {end}) too short to align, dropped")
            continue
        lag, (span_ppg, span_abp) = align_pair(span_ppg, span_abp, lag_limit)
        lags.append(lag)
        for ppg_seg, abp_seg, off in segment(span_ppg, span_abp, seg_len, stride):
            try:
                pairs.append(zscore(ppg_seg, abp_seg,
                                    source=(record.subject_id, start + off)))
            except DegenerateInputError as exc:
                log.append(f"segment at offset {start + off}: {exc}")
    info = {"spans": spans, "lags": lags, "log": log}
    return pairs, info


# ---------------------------------------------------------------------------
# segment corpus persistence


def save_segments(pairs, out_dir, fs: float = 125.0) -> Path:
    """Persist normalized segments as one clb1 file each plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    records = []
    for i, pair in enumerate(pairs):
        pair.validate()
        name = f"seg-{i:05d}"
        records.append(Record(ppg=pair.ppg, abp=pair.abp, fs=fs, subject_id=name))
        entries.append({
            "file": f"{name}.clb1",
            "subject_id": pair.source[0],
            "offset": int(pair.source[1]),
            "ppg_mu": pair.ppg_stats[0], "ppg_sigma": pair.ppg_stats[1],
            "abp_mu": pair.abp_stats[0], "abp_sigma": pair.abp_stats[1],
        })
    save_records(records, out, "clb1")
    manifest = {"fs": fs, "n_segments": len(entries),
                "seg_len": len(pairs[0].ppg) if pairs else 0, "segments": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out / "manifest.json"


def load_segments(in_dir):
    """Load a segment corpus written by :func:`save_segments`."""
    folder = Path(in_dir)
    manifest_path = folder / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"no manifest.json under {folder}")
    manifest = json.loads(manifest_path.read_text())
    pairs = []
    for entry in manifest["segments"]:
        rec = load_records(folder / entry["file"], "clb1")[0]
        pairs.append(SegmentPair(
            ppg=rec.ppg, abp=rec.abp,
            ppg_stats=(entry["ppg_mu"], entry["ppg_sigma"]),
            abp_stats=(entry["abp_mu"], entry["abp_sigma"]),
            source=(entry["subject_id"], entry["offset"]),
        ))
    return pairs, manifest
