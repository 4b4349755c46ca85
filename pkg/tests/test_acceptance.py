"""Acceptance gate: structural goldens, oracle equivalence, and synthetic
end-to-end properties, each with its stated tolerance and runtime budget.

Run with ``pytest -v -s tests/test_acceptance.py`` to see one line per
criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from abpsynth import cli, dataio, evaluation, fdreg, nn, preprocess, spectral


def _report(num: int, ok: bool, elapsed: float, budget: float, detail: str):
    verdict = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"[{verdict}] criterion {num:02d} ({elapsed:.2f}s / budget {budget:.0f}s): {detail}")
    assert ok, f"criterion {num}: {detail}"
    assert elapsed < budget, f"criterion {num}: exceeded {budget}s budget"


def test_c01_architecture_parameter_goldens():
    start = time.time()
    model = nn.build_model(nn.TransformerConfig(), seed=0)
    rows = dict(nn.count_params(model))
    expected = {
        "Input (e)": 0, "Input (d)": 0,
        "Dense (e)": 128, "Dense (d)": 128,
        "Pos. Enc. (e)": 0, "Pos. Enc. (d)": 0,
        "Tx Block 1 (e)": 74944, "Tx Block 1 (d)": 74944,
        "Tx Block 2 (e)": 74944, "Tx Block 2 (d)": 74944,
        "Tx Block 3 (e)": 74944, "Tx Block 3 (d)": 74944,
        "MultiHead Attention": 66368, "Dense 1": 4160, "Dense 2": 65,
    }
    total = nn.total_params(model)
    ok = rows == expected and total == 520513
    _report(1, ok, time.time() - start, 1.0,
            f"per-layer counts match, total {total}")


def test_c02_dct_round_trip_and_naive_oracle():
    start = time.time()
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1000, 250))
    round_trip = float(np.max(np.abs(spectral.idct(spectral.dct2(x)) - x)))

    v = rng.normal(size=250)
    naive = np.zeros(250)
    for k in range(250):
        acc = 0.0
        for m in range(250):
            acc += v[m] * math.cos(math.pi / 250 * (m + 0.5) * k)
        alpha = math.sqrt(1.0 / 250) if k == 0 else math.sqrt(2.0 / 250)
        naive[k] = alpha * acc
    oracle = float(np.max(np.abs(spectral.dct2(v) - naive)))
    ok = round_trip < 1e-9 and oracle < 1e-9
    _report(2, ok, time.time() - start, 10.0,
            f"round trip {round_trip:.2e}, naive-oracle gap {oracle:.2e}")


def test_c03_ridge_correctness():
    start = time.time()
    rng = np.random.default_rng(3)

    x = rng.normal(size=(300, 40))
    y = rng.normal(size=(300, 40))
    w = fdreg.fit_ridge(x, y, 1.0).weights
    residual = np.linalg.norm((x.T @ x + np.eye(40)) @ w - x.T @ y, "fro")
    normal_ok = residual <= 1e-8 * np.linalg.norm(x.T @ y, "fro")

    xs = rng.normal(size=(20, 8))
    ys = rng.normal(size=(20, 8))
    closed = fdreg.fit_ridge(xs, ys, 1.0).weights
    gram = xs.T @ xs + np.eye(8)
    rhs = xs.T @ ys
    step = 1.0 / np.linalg.eigvalsh(gram).max()
    w_gd = np.zeros((8, 8))
    for _ in range(200000):
        grad = gram @ w_gd - rhs
        if np.linalg.norm(grad) <= 1e-13 * np.linalg.norm(rhs):
            break
        w_gd -= step * grad
    descent_ok = np.max(np.abs(closed - w_gd)) < 1e-6

    w_true = rng.normal(size=(50, 50))
    xp = rng.normal(size=(500, 50))
    recovered = fdreg.fit_ridge(xp, xp @ w_true, 1e-8).weights
    rel = np.linalg.norm(recovered - w_true, "fro") / np.linalg.norm(w_true, "fro")
    planted_ok = rel < 1e-6

    ok = normal_ok and descent_ok and planted_ok
    _report(3, ok, time.time() - start, 30.0,
            f"normal-eq residual ok={normal_ok}, descent oracle ok={descent_ok}, "
            f"planted-map recovery rel={rel:.2e}")


def test_c04_gradient_check():
    start = time.time()
    model = nn.build_model(nn.reduced_config(), seed=3)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 8))
    target = rng.normal(size=(2, 8))
    worst = nn.grad_check(model, x, target, epsilon=1e-5)
    ok = worst < 1e-4
    _report(4, ok, time.time() - start, 120.0,
            f"max relative gradient error {worst:.2e}")


def test_c05_optimization_sanity():
    start = time.time()
    rng = np.random.default_rng(11)
    t = np.arange(8) / 8.0
    pairs = []
    for i in range(32):
        phase = rng.uniform(0, 2 * np.pi)
        ppg = (np.sin(2 * np.pi * 2 * t + phase)
               + 0.4 * np.sin(2 * np.pi * 4 * t + 2 * phase))
        abp = 0.8 * ppg + 0.1 * ppg ** 2
        ppg = (ppg - ppg.mean()) / ppg.std()
        abp = (abp - abp.mean()) / abp.std()
        pairs.append(preprocess.SegmentPair(ppg=ppg, abp=abp, ppg_stats=(0, 1),
                                            abp_stats=(0, 1), source=(f"s{i}", 0)))
    model = nn.build_model(nn.reduced_config(), seed=0)
    history = nn.train(model, pairs,
                       nn.TrainConfig(epochs=500, batch_size=32,
                                      learning_rate=2e-3, loss="mse", seed=0,
                                      max_steps=500))
    losses = np.array(history.step_losses)
    windows = losses.reshape(-1, 50).mean(axis=1)
    monotone = bool(np.all(np.diff(windows) < 0.0))
    x = np.stack([p.ppg for p in pairs])
    y = np.stack([p.abp for p in pairs])
    train_mae = nn.loss(nn.forward(model, x, "infer"), y, "mae")
    ok = len(losses) == 500 and monotone and train_mae < 0.05
    _report(5, ok, time.time() - start, 300.0,
            f"train MAE {train_mae:.4f} after 500 steps, "
            f"50-step windows monotone={monotone}")


def test_c06_end_to_end_frequency_domain():
    start = time.time()
    records = dataio.generate_synthetic_pair(
        dataio.SyntheticConfig(n_records=256, record_len=1000, noise_std=0.0,
                               mapping="linear-dct", seed=42))
    pairs = []
    for record in records:
        ps, _ = preprocess.preprocess_record(record)
        pairs.extend(ps)
    subjects = sorted({p.source[0] for p in pairs})
    train_s, val_s, test_s = dataio.split_dataset(subjects, dataio.SplitRatios(),
                                                  seed=7)
    groups = (set(train_s), set(val_s), set(test_s))
    train = [p for p in pairs if p.source[0] in groups[0]]
    val = [p for p in pairs if p.source[0] in groups[1]]
    test = [p for p in pairs if p.source[0] in groups[2]]
    model, sweep = fdreg.sweep_lambda(train, val)
    grid_min_ok = sweep.chosen_lambda == min(fdreg.DEFAULT_LAMBDA_GRID) == 1e-3
    report = evaluation.evaluate_pipeline(
        lambda seg: fdreg.synthesize_abp_fd(model, seg), test,
        denorm_mode="normalized")
    ok = grid_min_ok and report.waveform.mae < 0.05
    _report(6, ok, time.time() - start, 120.0,
            f"held-out normalized waveform MAE {report.waveform.mae:.4f}, "
            f"chosen lambda {sweep.chosen_lambda:g}")


def test_c07_segmentation_golden():
    start = time.time()
    rng = np.random.default_rng(7)
    total = 0
    per_record_ok = True
    for _ in range(100):
        wave = rng.normal(size=1000)
        windows = preprocess.segment(wave, wave, seg_len=250)
        per_record_ok &= len(windows) == 4
        total += len(windows)
    ok = per_record_ok and total == 400
    _report(7, ok, time.time() - start, 1.0,
            f"100 thousand-sample records -> {total} non-overlapping segments")


def test_c08_grading_goldens():
    start = time.time()
    a = evaluation.bhs_grade([5.0] * 12 + [10.0] * 5 + [15.0] * 2 + [16.0])
    b = evaluation.bhs_grade([5.0] * 10 + [10.0] * 5 + [15.0] * 3 + [16.0] * 2)
    c = evaluation.bhs_grade([5.0] * 8 + [10.0] * 5 + [15.0] * 4 + [16.0] * 3)
    bands_ok = (
        (a.grade, a.p5, a.p10, a.p15) == ("A", 60.0, 85.0, 95.0)
        and (b.grade, b.p5, b.p10, b.p15) == ("B", 50.0, 75.0, 90.0)
        and (c.grade, c.p5, c.p10, c.p15) == ("C", 40.0, 65.0, 85.0)
    )
    passed, me, sd = evaluation.aami_check([-3.0, 5.0, 13.0])
    aami_ok = passed and me == 5.0 and sd == 8.0
    ok = bands_ok and aami_ok
    _report(8, ok, time.time() - start, 1.0,
            f"BHS bands at exact boundaries -> {a.grade}/{b.grade}/{c.grade}, "
            f"AAMI inclusive at me={me}, sd={sd}")


def test_c09_alignment_oracle():
    start = time.time()
    rng = np.random.default_rng(9)

    def brute_force_lag(x, y, max_lag):
        best, best_lag = None, 0
        for m in range(-max_lag, max_lag + 1):
            r = 0.0
            for i in range(len(x)):
                j = i + m
                if 0 <= j < len(y):
                    r += x[i] * y[j]
            key = (-r, abs(m), m)
            if best is None or key < best:
                best, best_lag = key, m
        return best_lag

    recovered = 0
    oracle_ok = True
    for _ in range(100):
        lag_true = int(rng.integers(-40, 41))
        base = rng.normal(size=400)
        ppg = base[60:340]
        abp = base[60 - lag_true:340 - lag_true]
        lag, _ = preprocess.align_pair(ppg, abp, max_lag=40)
        recovered += lag == lag_true
        oracle_ok &= lag == brute_force_lag(ppg, abp, 40)
    ok = recovered == 100 and oracle_ok
    _report(9, ok, time.time() - start, 5.0,
            f"{recovered}/100 planted lags recovered, exhaustive oracle agrees")


def test_c10_cli_determinism(tmp_path):
    start = time.time()
    identical = True
    for sub in ("one", "two"):
        root = tmp_path / sub
        data = root / "data"
        segs = root / "segs"
        assert cli.main(["synth-data", "--out", str(data), "--n", "16",
                         "--seed", "7", "--mapping", "linear-dct"]) == 0
        assert cli.main(["preprocess", "--data", str(data), "--out", str(segs)]) == 0
        assert cli.main(["train-fd", "--segments", str(segs), "--seed", "0",
                         "--model-out", str(root / "fd.json")]) == 0
        assert cli.main(["train-tx", "--segments", str(segs), "--seed", "5",
                         "--out", str(root / "tx"), "--epochs", "1",
                         "--batch-size", "16", "--max-steps", "3",
                         "--d-model", "8", "--heads", "2", "--key-dim", "4",
                         "--ff-dim", "8", "--blocks", "1"]) == 0

    def artifact_bytes(root):
        files = sorted(p for p in root.rglob("*") if p.is_file())
        return {p.relative_to(root): p.read_bytes() for p in files}

    first = artifact_bytes(tmp_path / "one")
    second = artifact_bytes(tmp_path / "two")
    identical = first.keys() == second.keys() and all(
        first[k] == second[k] for k in first)
    ok = identical
    _report(10, ok, time.time() - start, 600.0,
            f"{len(first)} artifacts byte-identical across two seeded runs")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
