import math
from dataclasses import replace

import numpy as np
import pytest

from mtjrng.mtj_sim import (
    CycleConfig,
    CycleSimulator,
    DeviceParams,
    NoiseModel,
    bit_from_samples,
    calibrate,
    generate_raw,
    mtj_voltage,
    perturb_voltage_for_probability,
    read_resistance,
    switching_probability,
)


class TestParams:
    def test_device_validation(self):
        with pytest.raises(ValueError):
            DeviceParams(r_parallel=5000, r_antiparallel=3000)
        with pytest.raises(ValueError):
            DeviceParams(delta=-1)

    def test_tmr_default_is_200_percent(self):
        assert DeviceParams().tmr == pytest.approx(2.0)

    def test_cycle_defaults_give_16_samples(self):
        cfg = CycleConfig()
        assert cfg.samples_per_cycle == 16
        assert cfg.read_start_index == 4
        assert cfg.n_read_samples == 12

    def test_cycle_validation(self):
        with pytest.raises(ValueError, match="integer"):
            CycleConfig(cycle_period=8.3)
        with pytest.raises(ValueError, match="fit inside"):
            CycleConfig(w_reset=4.0, w_perturb=5.0)

    def test_noise_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(markov_flip=1.0)
        with pytest.raises(ValueError):
            NoiseModel(read_noise_sd=-0.1)


class TestSwitchingProbability:
    def test_calibrated_half(self, calibrated_params):
        cfg = CycleConfig()
        p = switching_probability(cfg.v_perturb, cfg.w_perturb, calibrated_params)
        assert abs(p - 0.5) <= 1e-9

    def test_vanishes_for_short_pulse(self, calibrated_params):
        assert switching_probability(652.0, 1e-12, calibrated_params) < 1e-9

    def test_rejects_nonpositive_width(self, calibrated_params):
        with pytest.raises(ValueError):
            switching_probability(652.0, 0.0, calibrated_params)

    def test_monotone_in_v_and_t(self, calibrated_params):
        rng = np.random.default_rng(5)
        v = rng.uniform(0.0, 1200.0, 10_000)
        t = rng.uniform(0.01, 4.0, 10_000)
        dv = rng.uniform(0.0, 200.0, 10_000)
        dt = rng.uniform(0.0, 2.0, 10_000)
        base = switching_probability(v, t, calibrated_params)
        assert np.all(switching_probability(v + dv, t, calibrated_params) >= base)
        assert np.all(switching_probability(v, t + dt, calibrated_params) >= base)

    def test_doubled_width_never_decreases(self, calibrated_params):
        for v in (100.0, 500.0, 652.0, 900.0):
            assert switching_probability(v, 2.0, calibrated_params) >= (
                switching_probability(v, 1.0, calibrated_params)
            )

    def test_inverse_matches_forward(self, calibrated_params):
        for p in (0.1, 0.5, 0.55, 0.9):
            v = perturb_voltage_for_probability(p, 1.0, calibrated_params)
            assert switching_probability(v, 1.0, calibrated_params) == pytest.approx(p, abs=1e-12)


class TestCalibrate:
    def test_idempotent(self, calibrated_params):
        again = calibrate(calibrated_params, CycleConfig())
        assert abs(again.v_critical - calibrated_params.v_critical) < 1e-9

    def test_no_root_rejected(self):
        with pytest.raises(ValueError, match="calibrat"):
            calibrate(DeviceParams(), CycleConfig(v_perturb=0.0))


class TestDivider:
    def test_symmetric_point(self):
        assert read_resistance(25.0, 50.0, 3000.0) == pytest.approx(3000.0)

    def test_derived_inversion(self):
        # v solving v/(50-v)*3000 = 6000 is 50*6000/9000
        v = 50.0 * 6000.0 / 9000.0
        assert read_resistance(v, 50.0, 3000.0) == pytest.approx(6000.0, abs=1e-9)

    def test_equal_divider_voltage(self):
        assert mtj_voltage(3000.0, 50.0, 3000.0) == pytest.approx(25.0)

    def test_derived_voltage(self):
        assert mtj_voltage(7500.0, 50.0, 3000.0) == pytest.approx(50.0 * 7500.0 / 10500.0)

    def test_open_circuit_limit(self):
        assert mtj_voltage(1e15, 50.0, 3000.0) == pytest.approx(50.0, abs=1e-6)

    def test_roundtrip(self):
        for r in (2500.0, 4000.0, 7500.0):
            v = mtj_voltage(r, 50.0, 3000.0)
            assert read_resistance(v, 50.0, 3000.0) == pytest.approx(r, abs=1e-9)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            read_resistance(50.0, 50.0, 3000.0)
        with pytest.raises(ValueError):
            read_resistance(-1.0, 50.0, 3000.0)
        with pytest.raises(ValueError):
            mtj_voltage(0.0, 50.0, 3000.0)


class TestGenerateCycle:
    def test_sample_count(self, calibrated_params):
        sim = CycleSimulator(CycleConfig(), calibrated_params, rng=1)
        samples, bit = sim.generate_cycle()
        assert samples.size == 16
        assert bit in (0, 1)

    def test_switching_suppressed_gives_parallel_reads(self, calibrated_params):
        cfg = CycleConfig(v_perturb=1.0)  # P_sw ~ e^-40, effectively 0
        sim = CycleSimulator(cfg, calibrated_params, rng=1)
        for _ in range(5):
            samples, bit = sim.generate_cycle()
            assert bit == 0
            r = read_resistance(samples[cfg.read_start_index :], cfg.v_offset, cfg.r_series)
            assert np.allclose(r, calibrated_params.r_parallel)

    def test_certain_switching_gives_antiparallel_reads(self, calibrated_params):
        cfg = CycleConfig(v_perturb=2000.0)  # P_sw = 1 to double precision
        sim = CycleSimulator(cfg, calibrated_params, rng=1)
        for _ in range(5):
            samples, bit = sim.generate_cycle()
            assert bit == 1
            r = read_resistance(samples[cfg.read_start_index :], cfg.v_offset, cfg.r_series)
            assert np.allclose(r, calibrated_params.r_antiparallel)

    def test_bit_ignores_pulse_phase_samples(self, calibrated_params):
        cfg = CycleConfig()
        sim = CycleSimulator(cfg, calibrated_params, NoiseModel(read_noise_sd=0.5), rng=9)
        for _ in range(20):
            samples, _ = sim.generate_cycle()
            bit = bit_from_samples(samples, cfg)
            mangled = samples.copy()
            mangled[: cfg.read_start_index] = np.array([1e6, -1e6, 0.0, 42.0])
            assert bit_from_samples(mangled, cfg) == bit

    def test_bit_does_depend_on_read_samples(self, calibrated_params):
        cfg = CycleConfig(v_perturb=1.0)
        sim = CycleSimulator(cfg, calibrated_params, rng=2)
        samples, _ = sim.generate_cycle()
        flipped = samples.copy()
        flipped[cfg.read_start_index :] = cfg.v_offset - 1e-6  # near-open divider
        assert bit_from_samples(samples, cfg) == 0
        assert bit_from_samples(flipped, cfg) == 1


class TestGenerateRaw:
    def test_rejects_zero_bits(self, calibrated_params):
        with pytest.raises(ValueError):
            generate_raw(0, CycleConfig(), calibrated_params)

    def test_deterministic(self, calibrated_params):
        a = generate_raw(50_000, CycleConfig(), calibrated_params, NoiseModel(0.5, 1.0, 100.0, 0.1), 77)
        b = generate_raw(50_000, CycleConfig(), calibrated_params, NoiseModel(0.5, 1.0, 100.0, 0.1), 77)
        assert a == b

    def test_calibrated_balance_one_million(self, calibrated_params):
        bits = generate_raw(10**6, CycleConfig(), calibrated_params, NoiseModel(), 123)
        assert abs(bits.count_ones() / 10**6 - 0.5) <= 0.002

    def test_lag1_autocorrelation_matches_markov_flip(self, make_source):
        # previous-bit replacement with probability f gives lag-1
        # autocorrelation exactly f for an otherwise IID source
        bits = make_source(10**6, p_one=0.5, markov=0.2, seed=31).to_array()
        rho = np.corrcoef(bits[:-1], bits[1:])[0, 1]
        assert abs(rho - 0.2) <= 0.005

    def test_markov_replacement_preserves_marginal(self, make_source):
        bits = make_source(10**6, p_one=0.55, markov=0.3, seed=32)
        # stationary marginal stays p; correlated bits inflate the variance
        # by (1+f)/(1-f), still << 0.004 at this length
        assert abs(bits.count_ones() / 10**6 - 0.55) <= 0.004

    def test_bias_follows_target_probability(self, make_source):
        bits = make_source(200_000, p_one=0.7, seed=33)
        assert abs(bits.count_ones() / 200_000 - 0.7) <= 0.005

    def test_read_noise_does_not_flip_bits_at_default_margins(self, calibrated_params):
        quiet = generate_raw(20_000, CycleConfig(), calibrated_params, NoiseModel(), 55)
        noisy = generate_raw(
            20_000, CycleConfig(), calibrated_params, NoiseModel(read_noise_sd=1.0), 55
        )
        # same switching draws, 20-sigma threshold margin: identical bits
        assert quiet == noisy

    def test_drift_modulates_bias(self, calibrated_params):
        cfg = CycleConfig()
        noise = NoiseModel(drift_amplitude=20.0, drift_period=10_000.0)
        bits = generate_raw(10_000, cfg, calibrated_params, noise, 8).to_array()
        # first half-period drives v_perturb up => ones-heavy; second half down
        assert bits[:5_000].mean() > 0.65
        assert bits[5_000:].mean() < 0.35

    def test_markov_forward_fill_matches_sequential_reference(self, calibrated_params, monkeypatch):
        # independent oracle: replay the exact batch draw order (switch
        # uniforms, then replacement uniforms) and apply the previous-bit
        # rule sequentially in pure python, including the cross-batch carry
        from mtjrng import mtj_sim

        batch = 256
        n = 1000
        flip = 0.4
        seed = 13
        cfg = CycleConfig()
        p_sw = switching_probability(cfg.v_perturb, cfg.w_perturb, calibrated_params)

        rng = np.random.default_rng(seed)
        expected = []
        prev = None
        for start in range(0, n, batch):
            count = min(batch, n - start)
            u_switch = rng.random(count)
            u_markov = rng.random(count)
            for i in range(count):
                b = 1 if u_switch[i] < p_sw else 0
                if prev is not None and u_markov[i] < flip:
                    b = prev
                expected.append(b)
                prev = b

        monkeypatch.setattr(mtj_sim, "_BATCH_CYCLES", batch)
        got = generate_raw(n, cfg, calibrated_params, NoiseModel(markov_flip=flip), seed)
        assert got.to_array().tolist() == expected
