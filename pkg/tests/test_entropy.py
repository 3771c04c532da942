import math

import numpy as np
import pytest

from mtjrng.bitcore import BitString
from mtjrng.entropy import (
    PERMUTATION_STATISTICS,
    assess,
    chi_square_independence,
    extractable_bits,
    markov_estimate,
    mcv_estimate,
    parse_report,
    permutation_test,
)


def mcv_formula(p_hat: float, length: int) -> float:
    p_u = min(1.0, p_hat + 2.576 * math.sqrt(p_hat * (1.0 - p_hat) / (length - 1)))
    return -math.log2(p_u)


class TestExtractableBits:
    def test_reference_budget(self):
        assert extractable_bits(217_504_350, 0.778584) == 169_345_406

    def test_trivial_cases(self):
        assert extractable_bits(1000, 1.0) == 1000
        assert extractable_bits(1000, 0.0) == 0

    def test_rejects_bad_h(self):
        with pytest.raises(ValueError):
            extractable_bits(10, 1.5)


class TestMcvEstimate:
    def test_all_zeros_is_zero(self):
        assert mcv_estimate(np.zeros(10**6, dtype=np.uint8)) == 0.0

    def test_balanced_million(self):
        bits = np.tile(np.array([0, 1], dtype=np.uint8), 500_000)
        expected = mcv_formula(0.5, 10**6)
        assert mcv_estimate(bits) == pytest.approx(expected, abs=1e-12)
        assert mcv_estimate(bits) == pytest.approx(0.99629, abs=1e-4)

    def test_three_quarters_bias(self):
        bits = np.concatenate([np.ones(7500, dtype=np.uint8), np.zeros(2500, dtype=np.uint8)])
        assert mcv_estimate(bits) == pytest.approx(mcv_formula(0.75, 10**4), abs=1e-12)

    def test_rejects_short(self):
        with pytest.raises(ValueError):
            mcv_estimate(np.array([1], dtype=np.uint8))

    def test_in_unit_interval(self, make_source):
        for p in (0.5, 0.7, 0.95):
            h = mcv_estimate(make_source(50_000, p_one=p, seed=900 + int(p * 100)))
            assert 0.0 <= h <= 1.0

    def test_monotone_in_bias_and_near_analytic(self, make_source):
        estimates = []
        for i, p in enumerate((0.5, 0.6, 0.7, 0.8)):
            bits = make_source(10**6, p_one=p, seed=400 + i)
            h = mcv_estimate(bits)
            assert abs(h - mcv_formula(p, 10**6)) <= 0.02
            estimates.append(h)
        assert all(a > b for a, b in zip(estimates, estimates[1:]))


class TestMarkovEstimate:
    def test_alternating_sequence_near_zero(self):
        bits = np.tile(np.array([0, 1], dtype=np.uint8), 500_000)
        assert markov_estimate(bits) < 0.01

    def test_iid_balanced_high(self, make_source):
        bits = make_source(10**7, p_one=0.5, markov=0.0, seed=41)
        assert markov_estimate(bits) >= 0.99

    def test_correlated_source_below_mcv(self, make_source):
        bits = make_source(10**6, p_one=0.5, markov=0.2, seed=42)
        assert markov_estimate(bits) < mcv_estimate(bits)

    def test_constant_sequence_is_zero(self):
        assert markov_estimate(np.zeros(1000, dtype=np.uint8)) == 0.0

    def test_matches_transition_mass_on_known_chain(self, make_source):
        # analytic most-likely 128-step path for p=0.5, flip f: stays in one
        # state with per-step probability f + (1-f)/2
        f = 0.3
        bits = make_source(10**6, p_one=0.5, markov=f, seed=43)
        stay = f + (1.0 - f) * 0.5
        expected = (1.0 + 127.0 * (-math.log2(stay))) / 128.0
        assert markov_estimate(bits) == pytest.approx(expected, abs=0.01)


class TestChiSquareIndependence:
    def test_iid_passes(self, make_source):
        res = chi_square_independence(make_source(10**6, seed=50))
        assert res.passed
        assert res.tuple_length >= 2
        assert res.statistic < res.critical_value

    def test_correlated_fails(self, make_source):
        res = chi_square_independence(make_source(10**6, markov=0.3, seed=51))
        assert not res.passed
        assert res.statistic > 10 * res.critical_value

    def test_all_zeros_fails(self):
        res = chi_square_independence(np.zeros(10**6, dtype=np.uint8))
        assert not res.passed
        assert res.statistic == math.inf

    def test_rejects_short_input(self):
        with pytest.raises(ValueError, match="at least"):
            chi_square_independence(np.ones(100, dtype=np.uint8))


class TestPermutationTest:
    def test_iid_strings_mostly_pass(self, make_source):
        # the two-sided 0.05% tail rule at 100 shuffles fails an IID string
        # with probability ~2/101 per statistic; 15 strings at fixed seeds
        passes = sum(
            permutation_test(
                make_source(80_000, seed=600 + i), n_shuffles=100, rng_seed=i
            ).passed
            for i in range(15)
        )
        assert passes >= 12

    def test_strong_drift_fails_excursion(self, make_source):
        bits = make_source(200_000, drift=20.0, drift_period=50_000.0, seed=61)
        res = permutation_test(bits, n_shuffles=100, rng_seed=1)
        assert not res.passed
        assert not res.statistic_passed("excursion")

    def test_markov_correlation_fails(self, make_source):
        bits = make_source(200_000, markov=0.3, seed=62)
        res = permutation_test(bits, n_shuffles=100, rng_seed=2)
        assert not res.passed

    def test_constant_string_fails(self):
        res = permutation_test(np.ones(10_000, dtype=np.uint8), n_shuffles=100, rng_seed=3)
        assert not res.passed
        assert all(c1 == 100 for _, c1 in res.counters.values())

    def test_counters_cover_all_statistics(self, make_source):
        res = permutation_test(make_source(20_000, seed=63), n_shuffles=100, rng_seed=4)
        assert set(res.counters) == set(PERMUTATION_STATISTICS)
        assert all(0 <= c0 + c1 <= 100 for c0, c1 in res.counters.values())

    def test_deterministic_given_seed(self, make_source):
        bits = make_source(30_000, markov=0.1, seed=64)
        a = permutation_test(bits, n_shuffles=100, rng_seed=5)
        b = permutation_test(bits, n_shuffles=100, rng_seed=5)
        assert a == b

    def test_rejects_too_few_shuffles(self):
        with pytest.raises(ValueError):
            permutation_test(np.ones(1000, dtype=np.uint8), n_shuffles=50)


class TestAssess:
    def test_iid_source_verdict_and_h(self, make_source):
        bits = make_source(10**6, seed=70)
        report = assess(bits, n_shuffles=100, rng_seed=6)
        assert report.iid_verdict == "iid"
        assert report.h_min_per_bit == pytest.approx(mcv_estimate(bits))
        assert report.k_extractable == extractable_bits(10**6, report.h_min_per_bit)

    def test_correlated_source_uses_minimum(self, make_source):
        bits = make_source(10**6, p_one=0.55, markov=0.2, seed=71)
        report = assess(bits, n_shuffles=100, rng_seed=7)
        assert report.iid_verdict == "non_iid"
        expected = min(mcv_estimate(bits), markov_estimate(bits))
        assert report.h_min_per_bit == pytest.approx(expected)

    def test_never_overestimates_known_sources(self, make_source):
        # sources with analytically known min-entropy rates
        cases = [
            (dict(p_one=0.6, seed=72), -math.log2(0.6)),
            (dict(p_one=0.5, markov=0.2, seed=73), -math.log2(0.2 + 0.8 * 0.5)),
            (dict(p_one=0.55, markov=0.2, seed=74), -math.log2(0.2 + 0.8 * 0.55)),
        ]
        for kwargs, h_true in cases:
            report = assess(make_source(10**6, **kwargs), n_shuffles=100, rng_seed=8)
            assert report.h_min_per_bit <= h_true + 0.02

    def test_deterministic_reports(self, make_source):
        bits = make_source(10**6, markov=0.15, seed=75)
        a = assess(bits, n_shuffles=100, rng_seed=9)
        b = assess(bits, n_shuffles=100, rng_seed=9)
        assert a == b

    def test_warns_below_recommended_length(self, make_source):
        with pytest.warns(UserWarning, match="recommended"):
            assess(make_source(20_000, seed=76), n_shuffles=100, rng_seed=10)

    def test_report_text_roundtrip(self, make_source):
        report = assess(make_source(10**6, markov=0.1, seed=77), n_shuffles=100, rng_seed=11)
        parsed = parse_report(report.to_text())
        assert parsed.n_bits == report.n_bits
        assert parsed.h_min_per_bit == report.h_min_per_bit
        assert parsed.k_extractable == report.k_extractable
        assert parsed.iid_verdict == report.iid_verdict

    def test_parse_rejects_missing_fields(self):
        with pytest.raises(ValueError, match="missing"):
            parse_report("n_bits: 10\n")
