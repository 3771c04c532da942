"""Shared fixtures: a calibrated device and a configurable source factory."""

from dataclasses import replace

import pytest

from mtjrng.mtj_sim import (
    CycleConfig,
    DeviceParams,
    NoiseModel,
    calibrate,
    generate_raw,
    perturb_voltage_for_probability,
)


@pytest.fixture(scope="session")
def calibrated_params():
    return calibrate(DeviceParams(), CycleConfig())


@pytest.fixture(scope="session")
def make_source(calibrated_params):
    """Factory for simulated sources with a prescribed bias / correlation."""

    def factory(
        n_bits,
        p_one=0.5,
        markov=0.0,
        drift=0.0,
        drift_period=1000.0,
        read_noise=0.0,
        seed=0,
    ):
        cycle = CycleConfig()
        if p_one != 0.5:
            v = perturb_voltage_for_probability(p_one, cycle.w_perturb, calibrated_params)
            cycle = replace(cycle, v_perturb=v)
        noise = NoiseModel(
            read_noise_sd=read_noise,
            drift_amplitude=drift,
            drift_period=drift_period,
            markov_flip=markov,
        )
        return generate_raw(n_bits, cycle, calibrated_params, noise, seed)

    return factory
