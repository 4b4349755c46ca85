"""Command-line front end for the synthesis pipeline.

Subcommands: synth-data, preprocess, train-fd, train-tx, evaluate, grade,
param-count, plot.  Every command is deterministic given its flags and
seed.  Exit codes: 0 success, 2 validation/usage error, 3 empty output
corpus, 4 training failure, 5 parameter-count golden mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio, evaluation, fdreg, nn, preprocess, spectral
from .errors import (
    DegenerateInputError,
    EvaluationError,
    IllConditionedError,
    TrainingError,
    ValidationError,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EMPTY = 3
EXIT_TRAINING = 4
EXIT_GOLDEN = 5

# reference per-layer parameter counts for the default architecture
GOLDEN_LAYER_COUNTS = (
    ("Input (e)", 0),
    ("Input (d)", 0),
    ("Dense (e)", 128),
    ("Dense (d)", 128),
    ("Pos. Enc. (e)", 0),
    ("Pos. Enc. (d)", 0),
    ("Tx Block 1 (e)", 74944),
    ("Tx Block 1 (d)", 74944),
    ("Tx Block 2 (e)", 74944),
    ("Tx Block 2 (d)", 74944),
    ("Tx Block 3 (e)", 74944),
    ("Tx Block 3 (d)", 74944),
    ("MultiHead Attention", 66368),
    ("Dense 1", 4160),
    ("Dense 2", 65),
)
GOLDEN_TOTAL = 520513


@dataclass
class RunConfig:
    """One document holding every knob a run needs; cross-validated up front."""

    seed: int = 0
    seg_len: int = preprocess.DEFAULT_SEGMENT_LEN
    stride: int | None = None
    max_lag: int = preprocess.DEFAULT_MAX_LAG
    filter: preprocess.FilterSpec = field(default_factory=preprocess.FilterSpec)
    spectral: spectral.SpectralConfig = field(default_factory=spectral.SpectralConfig)
    transformer: nn.TransformerConfig = field(default_factory=nn.TransformerConfig)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    lambda_grid: list = field(default_factory=lambda: list(fdreg.DEFAULT_LAMBDA_GRID))
    split: dataio.SplitRatios = field(default_factory=dataio.SplitRatios)
    split_level: str = "record"
    split_seed: int = 0
    denorm_mode: str = "reference-stats"

    def validate(self) -> None:
        if not (self.seg_len == self.spectral.q == self.transformer.seq_len):
            raise ValidationError(
                "inconsistent lengths: segment length, coefficient container size, "
                f"and model seq_len must agree (got {self.seg_len}, "
                f"{self.spectral.q}, {self.transformer.seq_len})"
            )
        if self.split_level not in ("record", "segment"):
            raise ValidationError(f"split_level must be record|segment, got {self.split_level!r}")
        if self.denorm_mode not in evaluation.DENORM_MODES:
            raise ValidationError(f"denorm_mode must be one of {evaluation.DENORM_MODES}")
        self.split.validate()
        self.spectral.validate()
        self.transformer.validate()
        self.train.validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        doc = json.loads(Path(path).read_text())
        cfg = cls()
        simple = ("seed", "seg_len", "stride", "max_lag", "lambda_grid",
                  "split_level", "split_seed", "denorm_mode")
        for key in simple:
            if key in doc:
                setattr(cfg, key, doc[key])
        nested = ("filter", "spectral", "transformer", "train", "split")
        for key in nested:
            if key in doc:
                setattr(cfg, key, dataclasses.replace(getattr(cfg, key), **doc[key]))
        unknown = set(doc) - set(simple) - set(nested)
        if unknown:
            raise ValidationError(f"unknown config keys in {path}: {sorted(unknown)}")
        return cfg


def _base_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def _apply(obj, args, mapping) -> None:
    # flag overrides: only flags the user actually passed (default None)
    for attr, flag in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(obj, attr, value)


def _split_pairs(pairs, cfg: RunConfig):
    """Record-level splitting partitions subjects; segment-level partitions pairs."""
    if cfg.split_level == "segment":
        return dataio.split_dataset(pairs, cfg.split, cfg.split_seed)
    subjects = sorted({p.source[0] for p in pairs})
    train_s, val_s, test_s = dataio.split_dataset(subjects, cfg.split, cfg.split_seed)
    groups = (set(train_s), set(val_s), set(test_s))
    return tuple([p for p in pairs if p.source[0] in g] for g in groups)


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth_data(args) -> int:
    cfg = _base_config(args)
    synth = dataio.SyntheticConfig(seed=cfg.seed)
    _apply(synth, args, {"n_records": "n", "record_len": "record_len",
                         "heart_rate_hz": "heart_rate", "noise_std": "noise",
                         "mapping": "mapping", "fs": "fs"})
    synth.validate()
    records = dataio.generate_synthetic_pair(synth)
    out = Path(args.out)
    dataio.save_records(records, out, args.format)
    manifest = {"n_records": synth.n_records, "record_len": synth.record_len,
                "heart_rate_hz": synth.heart_rate_hz, "noise_std": synth.noise_std,
                "mapping": synth.mapping, "seed": synth.seed, "fs": synth.fs,
                "format": args.format}
    (out / "corpus.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(records)} records ({synth.mapping}) to {out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _base_config(args)
    _apply(cfg, args, {"seg_len": "seg_len", "stride": "stride", "max_lag": "max_lag"})
    _apply(cfg.filter, args, {"cutoff_hz": "cutoff", "order": "order"})
    if args.no_zero_phase:
        cfg.filter.zero_phase = False
    cfg.spectral.q = cfg.seg_len
    cfg.transformer.seq_len = cfg.seg_len
    cfg.validate()
    records = dataio.load_records(args.data, args.format)
    all_pairs = []
    fs = records[0].fs
    for record in records:
        pairs, info = preprocess_one(record, cfg)
        all_pairs.extend(pairs)
        excluded = f", {len(info['log'])} notes" if info["log"] else ""
        print(f"{record.subject_id}: {len(pairs)} segments "
              f"(lags {info['lags']}{excluded})")
    if not all_pairs:
        print("error: preprocessing produced an empty segment corpus", file=sys.stderr)
        return EXIT_EMPTY
    preprocess.save_segments(all_pairs, args.out, fs=fs)
    print(f"total: {len(all_pairs)} segments from {len(records)} records -> {args.out}")
    return EXIT_OK


def preprocess_one(record, cfg: RunConfig):
    policy = preprocess.ScreenPolicy(min_span_len=cfg.seg_len)
    return preprocess.preprocess_record(
        record, filter_spec=cfg.filter, policy=policy, seg_len=cfg.seg_len,
        stride=cfg.stride, max_lag=cfg.max_lag)


def _load_split(args, cfg: RunConfig):
    _apply(cfg, args, {"split_level": "split_level", "split_seed": "split_seed"})
    if getattr(args, "split", None):
        parts = [float(v) for v in args.split.split(",")]
        if len(parts) != 3:
            raise ValidationError(f"--split needs three comma-separated fractions, got {args.split!r}")
        cfg.split = dataio.SplitRatios(*parts)
    pairs, manifest = preprocess.load_segments(args.segments)
    if manifest["seg_len"] != cfg.seg_len:
        cfg.seg_len = manifest["seg_len"]
        cfg.spectral.q = manifest["seg_len"]
        cfg.transformer.seq_len = manifest["seg_len"]
    cfg.validate()
    return _split_pairs(pairs, cfg)


def cmd_train_fd(args) -> int:
    cfg = _base_config(args)
    _apply(cfg.spectral, args, {"q_x": "q_x", "q_y": "q_y"})
    if args.grid:
        cfg.lambda_grid = [float(v) for v in args.grid.split(",")]
    train_pairs, val_pairs, _ = _load_split(args, cfg)
    if not train_pairs or not val_pairs:
        print("error: empty train or validation partition", file=sys.stderr)
        return EXIT_EMPTY
    try:
        model, report = fdreg.sweep_lambda(train_pairs, val_pairs, cfg.lambda_grid,
                                           config=cfg.spectral, kind=args.kind)
    except IllConditionedError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    fdreg.save_model(model, args.model_out)
    if args.report_out:
        Path(args.report_out).write_text(
            json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"chosen lambda {report.chosen_lambda:g}; "
          f"validation MAE {min(m for m in report.val_mae if m is not None):.4f} mmHg; "
          f"model -> {args.model_out}")
    return EXIT_OK


def cmd_train_tx(args) -> int:
    cfg = _base_config(args)
    _apply(cfg.transformer, args, {"d_model": "d_model", "num_heads": "heads",
                                   "key_dim_per_head": "key_dim", "ff_dim": "ff_dim",
                                   "num_blocks_per_side": "blocks", "dropout": "dropout"})
    _apply(cfg.train, args, {"epochs": "epochs", "batch_size": "batch_size",
                             "learning_rate": "lr", "loss": "loss",
                             "max_steps": "max_steps"})
    cfg.train.seed = cfg.seed
    train_pairs, val_pairs, _ = _load_split(args, cfg)
    if not train_pairs:
        print("error: empty training partition", file=sys.stderr)
        return EXIT_EMPTY
    model = nn.build_model(cfg.transformer, seed=cfg.seed)
    try:
        history = nn.train(model, train_pairs, cfg.train, val_pairs=val_pairs)
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    bin_path, meta_path = nn.save_weights(model, args.out)
    history_path = Path(args.out).with_suffix(".history.json")
    history_path.write_text(json.dumps(history.to_dict(), sort_keys=True) + "\n")
    val_note = f", val {history.epoch_val[-1]:.4f}" if history.epoch_val else ""
    print(f"trained {len(history.step_losses)} steps; "
          f"final epoch loss {history.epoch_train[-1]:.4f}{val_note}; "
          f"weights -> {bin_path} / {meta_path}")
    return EXIT_OK


def _load_any_model(path):
    """Return (synthesizer, digest, label) for an fd JSON or weight sidecar."""
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such model file: {p}")
    doc = json.loads(p.read_text())
    if "kind" in doc:
        model = fdreg.load_model(p)
        return (lambda seg: fdreg.synthesize_abp_fd(model, seg),
                _digest(p), f"fd-{model.kind}")
    if "layers" in doc:
        model = nn.load_weights(p)
        return (lambda seg: nn.forward(model, seg, "infer"),
                _digest(p.with_suffix(".bin")), "transformer")
    raise ValidationError(f"{p}: not a recognized model file")


def cmd_evaluate(args) -> int:
    cfg = _base_config(args)
    if args.denorm:
        cfg.denorm_mode = args.denorm
    test_sel = {"train": 0, "val": 1, "test": 2}[args.partition]
    partitions = _load_split(args, cfg)
    test_pairs = partitions[test_sel]
    if not test_pairs:
        print("error: selected partition is empty", file=sys.stderr)
        return EXIT_EMPTY
    synthesizer, digest, label = _load_any_model(args.model)
    report = evaluation.evaluate_pipeline(
        synthesizer, test_pairs, denorm_mode=cfg.denorm_mode,
        per_subject=args.per_subject, model_digest=f"{label}:{digest}")
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"waveform MAE {report.waveform.mae:.4f} | "
          f"SBP MAE {report.sbp.mae:.4f} (AAMI {'pass' if report.aami_sbp_pass else 'fail'}, "
          f"BHS {report.bhs_sbp.grade}) | "
          f"DBP MAE {report.dbp.mae:.4f} (AAMI {'pass' if report.aami_dbp_pass else 'fail'}, "
          f"BHS {report.bhs_dbp.grade}) -> {args.out}")
    if args.plot:
        plot_dir = Path(args.plot_dir or Path(args.out).parent)
        _write_overlays(synthesizer, test_pairs[:args.plot], cfg.denorm_mode, plot_dir)
        print(f"wrote {min(args.plot, len(test_pairs))} overlay plots to {plot_dir}")
    return EXIT_OK


def _write_overlays(synthesizer, pairs, denorm_mode, out_dir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir.mkdir(parents=True, exist_ok=True)
    for i, pair in enumerate(pairs):
        pred = synthesizer(pair.ppg)
        if denorm_mode == "reference-stats":
            ref = preprocess.denormalize(pair.abp, pair.abp_stats)
            hat = preprocess.denormalize(pred, pair.abp_stats)
            unit = "mmHg"
        else:
            ref, hat = pair.abp, pred
            unit = "z-units"
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(ref, label="reference ABP", lw=1.2)
        ax.plot(hat, label="synthesized ABP", lw=1.2, ls="--")
        ax.set_xlabel("sample")
        ax.set_ylabel(f"pressure ({unit})")
        ax.set_title(f"{pair.source[0]} @ {pair.source[1]}")
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / f"overlay_{i:03d}.svg")
        plt.close(fig)
        rows = ["reference,synthesized"]
        rows += [f"{r:.9g},{h:.9g}" for r, h in zip(ref, hat)]
        (out_dir / f"overlay_{i:03d}.csv").write_text("\n".join(rows) + "\n")


def cmd_grade(args) -> int:
    path = Path(args.errors)
    if not path.exists():
        raise ValidationError(f"no such errors file: {path}")
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        sbp = np.asarray(doc["sbp_errors"], dtype=float)
        dbp = np.asarray(doc["dbp_errors"], dtype=float)
    else:
        rows = path.read_text().splitlines()
        header = [c.strip() for c in rows[0].split(",")]
        if header != ["sbp_error", "dbp_error"]:
            raise ValidationError(
                f"{path}:1: expected header 'sbp_error,dbp_error', got {rows[0]!r}")
        data = np.array([[float(c) for c in r.split(",")] for r in rows[1:] if r.strip()])
        sbp, dbp = data[:, 0], data[:, 1]
    out = {}
    for name, errors in (("sbp", sbp), ("dbp", dbp)):
        ok, me, sd = evaluation.aami_check(errors)
        out[name] = {"aami_pass": bool(ok), "me": me, "sd": sd,
                     "bhs": evaluation.bhs_grade(np.abs(errors)).to_dict()}
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_param_count(args) -> int:
    cfg = _base_config(args)
    _apply(cfg.transformer, args, {"d_model": "d_model", "num_heads": "heads",
                                   "key_dim_per_head": "key_dim", "ff_dim": "ff_dim",
                                   "num_blocks_per_side": "blocks",
                                   "seq_len": "seq_len"})
    cfg.transformer.validate()
    model = nn.build_model(cfg.transformer, seed=cfg.seed)
    rows = nn.count_params(model)
    width = max(len(name) for name, _ in rows)
    for name, count in rows:
        print(f"{name:<{width}}  {count:>8}")
    total = nn.total_params(model)
    print(f"{'Total':<{width}}  {total:>8}")
    if args.check_golden:
        mismatches = [f"{name}: expected {want}, got {got}"
                      for (name, want), (_, got) in zip(GOLDEN_LAYER_COUNTS, rows)
                      if want != got]
        if len(rows) != len(GOLDEN_LAYER_COUNTS):
            mismatches.append(
                f"row count: expected {len(GOLDEN_LAYER_COUNTS)}, got {len(rows)}")
        if total != GOLDEN_TOTAL:
            mismatches.append(f"total: expected {GOLDEN_TOTAL}, got {total}")
        if mismatches:
            for line in mismatches:
                print(f"golden mismatch -- {line}", file=sys.stderr)
            return EXIT_GOLDEN
        print("all golden counts match")
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = dataio.load_records(args.data, args.format)[:args.n]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        t = np.arange(len(record)) / record.fs
        fig, axes = plt.subplots(2, 1, figsize=(8, 4), sharex=True)
        axes[0].plot(t, record.ppg, lw=0.8)
        axes[0].set_ylabel("PPG (a.u.)")
        axes[1].plot(t, record.abp, lw=0.8, color="tab:red")
        axes[1].set_ylabel("ABP (mmHg)")
        axes[1].set_xlabel("time (s)")
        fig.suptitle(record.subject_id)
        fig.tight_layout()
        fig.savefig(out_dir / f"{record.subject_id}.svg")
        plt.close(fig)
    print(f"wrote {len(records)} record plots to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(sub, config=True, seed=True):
    if config:
        sub.add_argument("--config", help="JSON run-config file; flags override it")
    if seed:
        sub.add_argument("--seed", type=int, default=None)


def _add_split_flags(sub):
    sub.add_argument("--split", default=None,
                     help="train,val,test fractions (default 0.72,0.08,0.2)")
    sub.add_argument("--split-level", dest="split_level",
                     choices=("record", "segment"), default=None)
    sub.add_argument("--split-seed", dest="split_seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abpsynth",
        description="Synthesize arterial blood pressure waveforms from PPG segments.")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("synth-data", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="number of records")
    p.add_argument("--record-len", dest="record_len", type=int, default=None)
    p.add_argument("--heart-rate", dest="heart_rate", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--mapping", choices=dataio.MAPPINGS, default=None)
    p.add_argument("--fs", type=float, default=None)
    p.add_argument("--format", choices=dataio.FORMATS, default="clb1")
    p.set_defaults(func=cmd_synth_data)

    p = commands.add_parser("preprocess", help="records -> normalized segment corpus")
    _add_common(p)
    p.add_argument("--data", required=True, help="record file or directory")
    p.add_argument("--out", required=True, help="segment corpus directory")
    p.add_argument("--format", choices=dataio.FORMATS, default="clb1")
    p.add_argument("--seg-len", dest="seg_len", type=int, default=None)
    p.add_argument("--stride", type=int, default=None,
                   help="window stride; defaults to non-overlapping")
    p.add_argument("--max-lag", dest="max_lag", type=int, default=None)
    p.add_argument("--cutoff", type=float, default=None, help="low-pass cutoff in Hz")
    p.add_argument("--order", type=int, default=None, help="filter order")
    p.add_argument("--no-zero-phase", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = commands.add_parser("train-fd", help="fit the coefficient-space regression")
    _add_common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--model-out", dest="model_out", required=True)
    p.add_argument("--report-out", dest="report_out", default=None)
    p.add_argument("--kind", choices=("linear", "kernel-rbf"), default="linear")
    p.add_argument("--grid", default=None, help="comma-separated lambda values")
    p.add_argument("--q-x", dest="q_x", type=int, default=None)
    p.add_argument("--q-y", dest="q_y", type=int, default=None)
    _add_split_flags(p)
    p.set_defaults(func=cmd_train_fd)

    p = commands.add_parser("train-tx", help="train the sequence translation model")
    _add_common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True, help="weight file prefix")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--loss", choices=("mae", "mse"), default=None)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--d-model", dest="d_model", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--key-dim", dest="key_dim", type=int, default=None)
    p.add_argument("--ff-dim", dest="ff_dim", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    _add_split_flags(p)
    p.set_defaults(func=cmd_train_tx)

    p = commands.add_parser("evaluate", help="run a model over a partition and grade it")
    _add_common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    p.add_argument("--denorm", choices=evaluation.DENORM_MODES, default=None)
    p.add_argument("--per-subject", dest="per_subject", action="store_true")
    p.add_argument("--plot", type=int, default=0, help="emit this many overlay plots")
    p.add_argument("--plot-dir", dest="plot_dir", default=None)
    _add_split_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("grade", help="AAMI/BHS verdicts for an error list")
    p.add_argument("--errors", required=True,
                   help="CSV with sbp_error,dbp_error columns, or JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_grade)

    p = commands.add_parser("param-count", help="print the per-layer parameter table")
    _add_common(p)
    p.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    p.add_argument("--d-model", dest="d_model", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--key-dim", dest="key_dim", type=int, default=None)
    p.add_argument("--ff-dim", dest="ff_dim", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--check-golden", dest="check_golden", action="store_true",
                   help="exit 5 unless every count matches the reference table")
    p.set_defaults(func=cmd_param_count)

    p = commands.add_parser("plot", help="plot raw records to SVG")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--format", choices=dataio.FORMATS, default="clb1")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingError, IllConditionedError) as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
