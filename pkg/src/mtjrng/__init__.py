"""Randomness pipeline for a simulated MTJ true-random-number generator.

Simulate a weakly random spintronic bit source, lower-bound its
min-entropy, extract provably uniform bits via FFT-accelerated Toeplitz
hashing, and validate the output with a block-based statistical test
suite.
"""

from .bitcore import BitString, Distribution, min_entropy, statistical_distance, xor
from .entropy import EntropyReport, assess, extractable_bits
from .extractor import (
    ExtractorParams,
    ToeplitzSeed,
    extract,
    output_length,
    toeplitz_direct,
    toeplitz_fft,
)
from .mtj_sim import CycleConfig, DeviceParams, NoiseModel, calibrate, generate_raw
from .stattests import SuiteReport, proportion_threshold, pvalue_uniformity, run_suite

__version__ = "0.1.0"

__all__ = [
    "BitString",
    "Distribution",
    "statistical_distance",
    "min_entropy",
    "xor",
    "DeviceParams",
    "CycleConfig",
    "NoiseModel",
    "calibrate",
    "generate_raw",
    "EntropyReport",
    "assess",
    "extractable_bits",
    "ExtractorParams",
    "ToeplitzSeed",
    "output_length",
    "toeplitz_direct",
    "toeplitz_fft",
    "extract",
    "SuiteReport",
    "proportion_threshold",
    "pvalue_uniformity",
    "run_suite",
    "__version__",
]
