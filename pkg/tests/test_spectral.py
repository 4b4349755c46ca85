"""Transform-pair correctness against naive summation oracles."""

import math

import numpy as np
import pytest

from abpsynth import spectral
from abpsynth.errors import DegenerateInputError, ValidationError


def naive_dct2(x):
    """Direct double-loop cosine summation with orthonormal scaling."""
    n = len(x)
    out = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for m in range(n):
            acc += x[m] * math.cos(math.pi / n * (m + 0.5) * k)
        alpha = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        out[k] = alpha * acc
    return out


def naive_idct(coeffs):
    """Direct double-loop synthesis with the per-coefficient alpha weights."""
    n = len(coeffs)
    out = np.zeros(n)
    for m in range(n):
        acc = 0.0
        for k in range(n):
            alpha = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
            acc += alpha * coeffs[k] * math.cos(math.pi / n * (m + 0.5) * k)
        out[m] = acc
    return out


class TestDct2:
    def test_constant_signal(self):
        out = spectral.dct2(np.ones(4))
        np.testing.assert_allclose(out, [2.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_matches_naive_summation(self):
        x = np.random.default_rng(1).normal(size=250)
        np.testing.assert_allclose(spectral.dct2(x), naive_dct2(x), atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(2, 100))
        lhs = spectral.dct2(2.0 * a + 3.0 * b)
        rhs = 2.0 * spectral.dct2(a) + 3.0 * spectral.dct2(b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_parseval(self):
        x = np.random.default_rng(3).normal(size=250)
        assert abs(np.linalg.norm(spectral.dct2(x)) - np.linalg.norm(x)) < 1e-9

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            spectral.dct2(np.array([]))


class TestIdct:
    def test_constant_inverse(self):
        np.testing.assert_allclose(spectral.idct(np.array([2.0, 0, 0, 0])),
                                   np.ones(4), atol=1e-12)

    def test_round_trip_random_vectors(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(1000, 250))
        err = np.max(np.abs(spectral.idct(spectral.dct2(x)) - x))
        assert err < 1e-9

    def test_matches_naive_synthesis(self):
        coeffs = np.random.default_rng(5).normal(size=200)
        np.testing.assert_allclose(spectral.idct(coeffs), naive_idct(coeffs), atol=1e-9)

    def test_round_trip_all_lengths(self):
        rng = np.random.default_rng(6)
        for n in range(1, 513):
            x = rng.normal(size=n)
            assert np.max(np.abs(spectral.idct(spectral.dct2(x)) - x)) < 1e-9

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            spectral.idct(np.array([]))


class TestTruncatePad:
    def test_full_keep_is_identity(self):
        x = np.random.default_rng(7).normal(size=64)
        sv = spectral.truncate_pad(x, keep=64, out_len=64)
        np.testing.assert_array_equal(sv.coeffs, x)
        sv.validate()

    def test_tail_is_exactly_zero(self):
        x = np.random.default_rng(8).normal(size=250)
        sv = spectral.truncate_pad(x, keep=50, out_len=250)
        assert np.all(sv.coeffs[50:] == 0.0)
        assert sv.kept == 50 and sv.original_len == 250

    def test_energy_retention_matches_direct_ratio(self):
        x = np.random.default_rng(9).normal(size=250)
        sv = spectral.truncate_pad(x, keep=50, out_len=250)
        kept_ratio = np.sum(sv.coeffs ** 2) / np.sum(x ** 2)
        direct = sum(v * v for v in x[:50]) / sum(v * v for v in x)
        assert abs(kept_ratio - direct) < 1e-12

    def test_keep_beyond_input_rejected(self):
        with pytest.raises(ValidationError):
            spectral.truncate_pad(np.ones(10), keep=11, out_len=20)


class TestChooseKeep:
    def test_pure_dc(self):
        coeffs = np.zeros(100)
        coeffs[0] = 3.0
        assert spectral.choose_keep(coeffs, 0.999) == 1

    def test_fraction_one_is_last_nonzero(self):
        coeffs = np.zeros(100)
        coeffs[[0, 3, 41]] = 1.0
        assert spectral.choose_keep(coeffs, 1.0) == 42

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            coeffs = rng.normal(size=80)
            frac = rng.uniform(0.05, 0.999)
            total = np.sum(coeffs ** 2)
            acc, expect = 0.0, None
            for i, v in enumerate(coeffs):
                acc += v * v
                if acc >= frac * total:
                    expect = i + 1
                    break
            assert spectral.choose_keep(coeffs, frac) == expect

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            spectral.choose_keep(np.zeros(10), 0.5)


class TestEnergyConcentration:
    def test_synthetic_pulses_compress_well(self):
        # quasi-periodic pulse segments should need few coefficients for 99%
        from abpsynth import dataio, preprocess

        records = dataio.generate_synthetic_pair(
            dataio.SyntheticConfig(n_records=8, noise_std=0.0, mapping="identity",
                                   seed=21))
        for record in records:
            pairs, _ = preprocess.preprocess_record(record)
            for pair in pairs:
                keep = spectral.choose_keep(spectral.dct2(pair.ppg), 0.99)
                assert keep <= 60
