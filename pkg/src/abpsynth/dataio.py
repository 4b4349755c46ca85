"""Waveform record IO, synthetic corpus generation, and dataset splitting.

Two on-disk formats are supported:

* ``csv`` — two columns ``ppg,abp``, one sample per row, with a sidecar
  JSON manifest ``<stem>.json`` holding ``{"fs": ..., "subject_id": ...}``.
* ``clb1`` — compact binary: magic bytes ``CLB1``, little-endian u32
  sample count, u32 sampling rate in Hz, then ``count`` float32 PPG
  samples followed by ``count`` float32 ABP samples.  Bit-exact for any
  finite float32 payload.
"""

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectral
from .errors import DegenerateInputError, ParseError, ValidationError

FORMATS = ("csv", "clb1")
MAPPINGS = ("linear-dct", "identity", "harmonic-reshape")

# number of leading record-level DCT coefficients the linear-dct mapping acts on
LINEAR_MAP_KEEP = 100
# shortest record the generator accepts: two default-length segments
MIN_RECORD_LEN = 500

_CLB1_MAGIC = b"CLB1"


@dataclass
class Record:
    """One synchronized PPG+ABP recording."""

    ppg: np.ndarray
    abp: np.ndarray
    fs: float
    subject_id: str

    def __post_init__(self):
        self.ppg = np.asarray(self.ppg, dtype=float)
        self.abp = np.asarray(self.abp, dtype=float)
        self.validate()

    def validate(self) -> None:
        if self.ppg.ndim != 1 or self.abp.ndim != 1:
            raise ValidationError("ppg and abp must be 1-D sample vectors")
        if len(self.ppg) != len(self.abp):
            raise ValidationError(
                f"ppg/abp length mismatch for {self.subject_id!r}: "
                f"{len(self.ppg)} vs {len(self.abp)}"
            )
        if len(self.ppg) < 1:
            raise ValidationError(f"record {self.subject_id!r} is empty")
        if not self.fs > 0:
            raise ValidationError(f"sampling rate must be positive, got {self.fs}")

    def __len__(self) -> int:
        return len(self.ppg)


@dataclass
class SyntheticConfig:
    """Knobs for the desk-scale synthetic corpus generator."""

    n_records: int = 64
    record_len: int = 1000
    heart_rate_hz: float = 1.2
    noise_std: float = 0.02
    mapping: str = "linear-dct"
    seed: int = 0
    fs: float = 125.0

    def validate(self) -> None:
        if self.n_records < 1:
            raise ValidationError(f"n_records must be >= 1, got {self.n_records}")
        if self.record_len < MIN_RECORD_LEN:
            raise ValidationError(
                f"record_len must cover at least two segments "
                f"({MIN_RECORD_LEN} samples), got {self.record_len}"
            )
        if not (0.5 <= self.heart_rate_hz <= 3.0):
            raise ValidationError(
                f"heart_rate_hz must lie in [0.5, 3.0], got {self.heart_rate_hz}"
            )
        if self.noise_std < 0:
            raise ValidationError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.mapping not in MAPPINGS:
            raise ValidationError(
                f"unknown mapping {self.mapping!r}; choose from {MAPPINGS}"
            )
        if not self.fs > 0:
            raise ValidationError(f"fs must be positive, got {self.fs}")


@dataclass
class SplitRatios:
    """Train/validation/test fractions; must be non-negative and sum to 1."""

    train: float = 0.72
    val: float = 0.08
    test: float = 0.20

    def validate(self) -> None:
        for name, value in (("train", self.train), ("val", self.val), ("test", self.test)):
            if value < 0:
                raise ValidationError(f"split fraction {name} must be >= 0, got {value}")
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {total}")


# ---------------------------------------------------------------------------
# file formats


def _write_clb1(record: Record, path: Path) -> None:
    if not float(record.fs).is_integer():
        raise ValidationError(
            f"clb1 stores the sampling rate as an integer Hz; got fs={record.fs}"
        )
    n = len(record)
    payload = struct.pack("<4sII", _CLB1_MAGIC, n, int(record.fs))
    payload += record.ppg.astype("<f4").tobytes()
    payload += record.abp.astype("<f4").tobytes()
    path.write_bytes(payload)


def _read_clb1(path: Path) -> Record:
    blob = path.read_bytes()
    if len(blob) < 12:
        raise ParseError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, n, fs = struct.unpack_from("<4sII", blob, 0)
    if magic != _CLB1_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}, expected {_CLB1_MAGIC!r}")
    expected = 12 + 8 * n
    if len(blob) != expected:
        raise ParseError(
            f"{path}: expected {expected} bytes for {n} samples, found {len(blob)}"
        )
    ppg = np.frombuffer(blob, dtype="<f4", count=n, offset=12)
    abp = np.frombuffer(blob, dtype="<f4", count=n, offset=12 + 4 * n)
    return Record(ppg=ppg.astype(float), abp=abp.astype(float),
                  fs=float(fs), subject_id=path.stem)


def _write_csv(record: Record, path: Path) -> None:
    lines = ["ppg,abp"]
    for p, a in zip(record.ppg, record.abp):
        lines.append(f"{p:.9g},{a:.9g}")
    path.write_text("\n".join(lines) + "\n")
    sidecar = {"fs": record.fs, "subject_id": record.subject_id}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def _read_csv(path: Path) -> Record:
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header != ["ppg", "abp"]:
        raise ParseError(f"{path}:1: expected header 'ppg,abp', got {lines[0]!r}")
    ppg, abp = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(cells)}")
        try:
            ppg.append(float(cells[0]))
            abp.append(float(cells[1]))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    sidecar_path = path.with_suffix(".json")
    fs, subject_id = 125.0, path.stem
    if sidecar_path.exists():
        try:
            sidecar = json.loads(sidecar_path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{sidecar_path}: {exc}") from exc
        fs = float(sidecar.get("fs", fs))
        subject_id = str(sidecar.get("subject_id", subject_id))
    return Record(ppg=np.array(ppg), abp=np.array(abp), fs=fs, subject_id=subject_id)


def save_records(records, path, fmt: str = "clb1") -> list:
    """Write records under a directory (one file per record); returns the paths.

    Record ``subject_id`` values become file stems and must therefore be
    unique and filesystem-safe.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; choose from {FORMATS}")
    out_dir = Path(path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    stems = [r.subject_id for r in records]
    if len(set(stems)) != len(stems):
        raise ValidationError("subject_id values must be unique within a saved corpus")
    paths = []
    for record in records:
        record.validate()
        target = out_dir / f"{record.subject_id}.{fmt}"
        if fmt == "clb1":
            _write_clb1(record, target)
        else:
            _write_csv(record, target)
        paths.append(target)
    return paths


def load_records(path, fmt: str = "clb1") -> list:
    """Load one record file, or every ``*.{fmt}`` file in a directory (sorted)."""
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; choose from {FORMATS}")
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such path: {p}")
    reader = _read_clb1 if fmt == "clb1" else _read_csv
    if p.is_file():
        return [reader(p)]
    files = sorted(p.glob(f"*.{fmt}"))
    if not files:
        raise ValidationError(f"no *.{fmt} files under {p}")
    return [reader(f) for f in files]


# ---------------------------------------------------------------------------
# synthetic corpus


def leading_dct_map(record_len: int, keep: int = LINEAR_MAP_KEEP) -> np.ndarray:
    """The fixed full-rank map the linear-dct mode applies to leading DCT bins.

    Smoothly varying diagonal gains plus a weak two-off-diagonal band; the
    DC row/column is the identity so physiological offsets pass through.
    Diagonally dominant, hence full rank.
    """
    k = min(keep, record_len)
    idx = np.arange(k, dtype=float)
    gains = 1.0 + 0.25 * np.sin(2.0 * np.pi * idx / k)
    m = np.diag(gains)
    for off in (1, 2):
        band = 0.03 * np.cos(np.pi * idx[:-off] / k)
        m += np.diag(band, k=off)
        m += np.diag(band, k=-off)
    m[0, :] = 0.0
    m[:, 0] = 0.0
    m[0, 0] = 1.0
    return m


# harmonics per pulse train; fixed so every record shares one spectral
# profile (randomized counts make the per-segment scale ratios drift, which
# blurs the exactly-linear structure the linear-dct mapping plants)
PULSE_HARMONICS = 3


def _pulse_train(rng, config: SyntheticConfig) -> np.ndarray:
    t = np.arange(config.record_len) / config.fs
    phases = rng.uniform(0.0, 2.0 * np.pi, PULSE_HARMONICS)
    wave = np.zeros_like(t)
    for k in range(PULSE_HARMONICS):
        wave += 0.5 ** k * np.sin(2.0 * np.pi * config.heart_rate_hz * (k + 1) * t + phases[k])
    return wave


def generate_synthetic_pair(config: SyntheticConfig) -> list:
    """Generate a deterministic synthetic PPG+ABP corpus.

    PPG is a quasi-periodic pulse train (three harmonics of the configured
    heart rate, random phases per record) riding on a DC offset, plus
    Gaussian noise.  ABP derives from the finished PPG via the configured
    mapping:

    * ``identity`` — same shape rescaled to exactly [80, 120] mmHg;
    * ``linear-dct`` — :func:`leading_dct_map` applied to the leading
      record-level DCT coefficients, higher bins zeroed;
    * ``harmonic-reshape`` — a fixed mild quadratic waveshaper.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    mapping_matrix = leading_dct_map(config.record_len)
    k = mapping_matrix.shape[0]
    records = []
    for i in range(config.n_records):
        pulse = _pulse_train(rng, config)
        ppg = 100.0 + 25.0 * pulse
        if config.noise_std > 0:
            ppg = ppg + rng.normal(0.0, config.noise_std, config.record_len)
        if config.mapping == "identity":
            lo, hi = ppg.min(), ppg.max()
            if hi == lo:
                raise DegenerateInputError("flat PPG cannot be rescaled to a pressure range")
            abp = 80.0 + 40.0 * (ppg - lo) / (hi - lo)
        elif config.mapping == "linear-dct":
            coeffs = spectral.dct2(ppg)
            mapped = np.zeros_like(coeffs)
            mapped[:k] = mapping_matrix @ coeffs[:k]
            abp = spectral.idct(mapped)
        else:  # harmonic-reshape
            q = (ppg - 100.0) / 25.0
            abp = 100.0 + 25.0 * (q + 0.3 * q * q)
        records.append(Record(ppg=ppg, abp=abp, fs=config.fs,
                              subject_id=f"synth-{i:04d}"))
    return records


# ---------------------------------------------------------------------------
# splitting


def split_dataset(items, ratios: SplitRatios, seed: int):
    """Deterministic shuffled partition; floor-rounded sizes, remainder to train."""
    ratios.validate()
    items = list(items)
    n = len(items)
    if n == 0:
        raise ValidationError("cannot split an empty dataset")
    n_train = math.floor(n * ratios.train)
    n_val = math.floor(n * ratios.val)
    n_test = math.floor(n * ratios.test)
    n_train += n - (n_train + n_val + n_test)
    order = np.random.default_rng(seed).permutation(n)
    train = [items[i] for i in order[:n_train]]
    val = [items[i] for i in order[n_train:n_train + n_val]]
    test = [items[i] for i in order[n_train + n_val:]]
    return train, val, test
