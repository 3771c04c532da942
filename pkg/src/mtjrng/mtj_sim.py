"""Stochastic simulator of a spin-transfer-torque MTJ random-bit generator.

Each generation cycle applies a reset pulse (device forced to the
low-resistance parallel state), a perturb pulse (device switches to the
anti-parallel state with a voltage- and width-dependent probability), and a
read phase in which the device sits in a resistive divider under a small DC
offset.  The read samples are thresholded on mean resistance to produce one
bit per cycle.

Switching follows the macrospin thermal-activation model

    P_sw(V, t) = 1 - exp(-(t / tau0) * exp(-delta * (1 - V / V_c)))

which is monotone in both pulse amplitude and width; ``calibrate`` tunes
``V_c`` so the configured perturb pulse switches with probability 1/2.

Non-idealities are injected through ``NoiseModel``: additive Gaussian read
noise, a slow sinusoidal drift of the perturb amplitude, and a Markov
previous-bit replacement that correlates successive bits.  These produce a
weakly random source with analytically known marginal bias and lag-1
correlation, which the entropy estimators downstream are validated against.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .bitcore import BitString

__all__ = [
    "DeviceParams",
    "CycleConfig",
    "NoiseModel",
    "switching_probability",
    "perturb_voltage_for_probability",
    "calibrate",
    "read_resistance",
    "mtj_voltage",
    "bit_from_samples",
    "CycleSimulator",
    "generate_raw",
]

# Cycles per vectorized batch in generate_raw.  Fixed so that the
# seed -> bitstream mapping never depends on the host.
_BATCH_CYCLES = 1 << 20

# Noisy read voltages are clipped into the open divider interval before
# inversion; the divider cannot produce v <= 0 or v >= v_offset noiselessly.
_DIVIDER_CLIP = 1e-9


@dataclass(frozen=True)
class DeviceParams:
    """Electrical constants of the simulated junction.

    Resistances in ohms, voltages in mV, attempt time ``tau0`` in ns,
    thermal stability factor ``delta`` dimensionless.
    """

    r_parallel: float = 2500.0
    r_antiparallel: float = 7500.0
    v_critical: float = 800.0
    delta: float = 40.0
    tau0: float = 1.0

    def __post_init__(self):
        if not 0 < self.r_parallel < self.r_antiparallel:
            raise ValueError(
                "need r_antiparallel > r_parallel > 0, got "
                f"{self.r_antiparallel} and {self.r_parallel}"
            )
        if self.v_critical <= 0 or self.delta <= 0 or self.tau0 <= 0:
            raise ValueError("v_critical, delta and tau0 must be positive")

    @property
    def tmr(self) -> float:
        """Tunnelling magneto-resistance ratio (R_AP - R_P) / R_P."""
        return (self.r_antiparallel - self.r_parallel) / self.r_parallel


@dataclass(frozen=True)
class CycleConfig:
    """Pulse timing and read-out configuration for one generation cycle.

    Voltages in mV, widths and period in microseconds, sample rate in
    samples per second, resistances in ohms.
    """

    v_reset: float = -900.0
    w_reset: float = 1.0
    v_perturb: float = 652.0
    w_perturb: float = 1.0
    cycle_period: float = 8.0
    sample_rate: float = 2e6
    v_offset: float = 50.0
    r_series: float = 3000.0
    r_threshold: float = 4000.0

    def __post_init__(self):
        if self.w_reset + self.w_perturb >= self.cycle_period:
            raise ValueError("reset + perturb widths must fit inside the cycle period")
        if self.v_offset <= 0 or self.r_series <= 0 or self.r_threshold <= 0:
            raise ValueError("v_offset, r_series and r_threshold must be positive")
        n = self.cycle_period * 1e-6 * self.sample_rate
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(
                f"cycle_period x sample_rate = {n} must be a positive integer"
            )

    @property
    def samples_per_cycle(self) -> int:
        return round(self.cycle_period * 1e-6 * self.sample_rate)

    @property
    def read_start_index(self) -> int:
        """First sample index in the read phase (sequence III).

        Sample i is taken at t = i / sample_rate; the read phase starts
        once both pulses have elapsed.  Selection is positional, so the
        output bit can only depend on read-phase samples.
        """
        t_pulses_s = (self.w_reset + self.w_perturb) * 1e-6
        return math.ceil(t_pulses_s * self.sample_rate - 1e-9)

    @property
    def n_read_samples(self) -> int:
        return self.samples_per_cycle - self.read_start_index


@dataclass(frozen=True)
class NoiseModel:
    """Injected non-idealities.

    ``read_noise_sd`` is additive Gaussian noise (mV) on each read-phase
    voltage sample; ``drift_amplitude`` (mV) modulates the perturb
    amplitude sinusoidally with period ``drift_period`` cycles;
    ``markov_flip`` is the probability that a cycle's bit is replaced by
    the previous cycle's bit.
    """

    read_noise_sd: float = 0.0
    drift_amplitude: float = 0.0
    drift_period: float = 1000.0
    markov_flip: float = 0.0

    def __post_init__(self):
        if min(self.read_noise_sd, self.drift_amplitude, self.drift_period) < 0:
            raise ValueError("noise parameters must be non-negative")
        if not 0 <= self.markov_flip < 1:
            raise ValueError(f"markov_flip must lie in [0, 1), got {self.markov_flip}")
        if self.drift_amplitude > 0 and self.drift_period == 0:
            raise ValueError("drift_amplitude > 0 requires a positive drift_period")


def switching_probability(v, t, params: DeviceParams):
    """Probability that a perturb pulse of amplitude ``v`` (mV) and width
    ``t`` (us) switches the junction out of the parallel state.

    Thermal-activation form, monotone non-decreasing in both arguments.
    Accepts scalars or numpy arrays for ``v``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("pulse width must be positive")
    attempts = (t * 1e3) / params.tau0  # us -> ns
    rate = np.exp(-params.delta * (1.0 - np.asarray(v, dtype=float) / params.v_critical))
    p = -np.expm1(-attempts * rate)
    if p.ndim == 0:
        return float(p)
    return p


def perturb_voltage_for_probability(p: float, t: float, params: DeviceParams) -> float:
    """Pulse amplitude (mV) at which ``switching_probability`` equals ``p``.

    Closed-form inverse of the activation model; handy for configuring a
    source with a prescribed one-bit bias.
    """
    if not 0 < p < 1:
        raise ValueError(f"target probability must lie in (0, 1), got {p}")
    if t <= 0:
        raise ValueError("pulse width must be positive")
    attempts = (t * 1e3) / params.tau0
    return params.v_critical * (1.0 + math.log(-math.log1p(-p) / attempts) / params.delta)


def calibrate(params: DeviceParams, config: CycleConfig) -> DeviceParams:
    """Return a copy of ``params`` with ``v_critical`` tuned by bisection so
    the configured perturb pulse switches with probability 0.5 (within 1e-9).
    """
    target = 0.5
    if config.v_perturb <= 0:
        raise ValueError(
            "cannot calibrate: switching probability at "
            f"v_perturb={config.v_perturb} mV never reaches {target}"
        )

    def p_at(vc: float) -> float:
        return switching_probability(
            config.v_perturb, config.w_perturb, replace(params, v_critical=vc)
        )

    # P_sw is strictly decreasing in v_critical: ~1 at vc = v_perturb,
    # ->0 as vc -> infinity.
    lo = config.v_perturb
    hi = config.v_perturb * 2.0
    for _ in range(200):
        if p_at(hi) < target:
            break
        hi *= 2.0
    else:
        raise ValueError("calibration bracket search failed to find an upper edge")
    if p_at(lo) < target:
        raise ValueError("no 50% switching point inside the calibration bracket")

    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if p_at(mid) >= target:
            lo = mid
        else:
            hi = mid
        if abs(p_at(mid) - target) <= 1e-12:
            break
    vc = 0.5 * (lo + hi)
    if abs(p_at(vc) - target) > 1e-9:
        raise ValueError("bisection failed to reach the 50% switching point")
    return replace(params, v_critical=vc)


def read_resistance(v_mtj, v_offset: float, r_series: float):
    """Junction resistance inferred from the divider read-out voltage.

    R = v_mtj / (v_offset - v_mtj) * r_series.  Valid only for
    0 < v_mtj < v_offset; the divider cannot produce anything else
    noiselessly.  Accepts scalars or numpy arrays.
    """
    v = np.asarray(v_mtj, dtype=float)
    if np.any(v <= 0) or np.any(v >= v_offset):
        raise ValueError(
            f"read voltage must lie strictly between 0 and v_offset={v_offset} mV"
        )
    r = v / (v_offset - v) * r_series
    if r.ndim == 0:
        return float(r)
    return r


def mtj_voltage(r_mtj, v_offset: float, r_series: float):
    """Divider voltage (mV) across a junction of resistance ``r_mtj``."""
    r = np.asarray(r_mtj, dtype=float)
    if np.any(r <= 0):
        raise ValueError("resistance must be positive")
    v = v_offset * r / (r + r_series)
    if v.ndim == 0:
        return float(v)
    return v


def bit_from_samples(samples: np.ndarray, config: CycleConfig) -> int:
    """Threshold one cycle's voltage trace into a bit.

    Only read-phase (sequence III) samples are used: they are inverted
    through the divider equation, averaged, and compared against
    ``r_threshold``.  Values outside the divider's open interval are
    clipped before inversion so noisy traces remain decodable.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size != config.samples_per_cycle:
        raise ValueError(
            f"expected {config.samples_per_cycle} samples, got {samples.size}"
        )
    read = samples[config.read_start_index :]
    clipped = np.clip(read, _DIVIDER_CLIP, config.v_offset - _DIVIDER_CLIP)
    mean_r = read_resistance(clipped, config.v_offset, config.r_series).mean()
    return int(mean_r > config.r_threshold)


def _drift_offset(cycle_index, noise: NoiseModel):
    if noise.drift_amplitude == 0.0:
        return np.zeros_like(np.asarray(cycle_index, dtype=float))
    phase = 2.0 * np.pi * np.asarray(cycle_index, dtype=float) / noise.drift_period
    return noise.drift_amplitude * np.sin(phase)


class CycleSimulator:
    """Stateful cycle-by-cycle generator exposing full voltage traces.

    Holds the previous output bit (for Markov replacement) and the running
    cycle index (for drift phase).  One instance is single-threaded; run
    independent instances with distinct seeds for parallel generation.
    """

    def __init__(
        self,
        config: CycleConfig,
        params: DeviceParams,
        noise: NoiseModel = NoiseModel(),
        rng: np.random.Generator | int | None = None,
    ):
        self.config = config
        self.params = params
        self.noise = noise
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.cycle_index = 0
        self.previous_bit: int | None = None

    def generate_cycle(self) -> tuple[np.ndarray, int]:
        """Run one reset/perturb/read cycle.

        Returns the full voltage trace (``samples_per_cycle`` values, mV)
        and the output bit.  The bit is derived from the read-phase samples
        only, then possibly replaced by the previous bit per the Markov
        noise setting.
        """
        cfg, par, noise = self.config, self.params, self.noise

        v_eff = cfg.v_perturb + float(_drift_offset(self.cycle_index, noise))
        p_sw = switching_probability(max(v_eff, 0.0), cfg.w_perturb, par) if v_eff > 0 else 0.0
        switched = self.rng.random() < p_sw
        r_state = par.r_antiparallel if switched else par.r_parallel

        n = cfg.samples_per_cycle
        times_us = np.arange(n) / cfg.sample_rate * 1e6
        samples = np.empty(n, dtype=float)
        in_reset = times_us < cfg.w_reset
        in_perturb = (~in_reset) & (times_us < cfg.w_reset + cfg.w_perturb)
        divider = r_state / (r_state + cfg.r_series)
        # Pulse-phase samples show the driven trace; reset drives the
        # parallel state regardless of the eventual read-out state.
        reset_divider = par.r_parallel / (par.r_parallel + cfg.r_series)
        samples[in_reset] = (cfg.v_offset + cfg.v_reset) * reset_divider
        samples[in_perturb] = (cfg.v_offset + v_eff) * divider
        read = ~(in_reset | in_perturb)
        samples[read] = cfg.v_offset * divider
        if noise.read_noise_sd > 0:
            samples += self.rng.normal(0.0, noise.read_noise_sd, size=n)

        bit = bit_from_samples(samples, cfg)
        if noise.markov_flip > 0 and self.previous_bit is not None:
            if self.rng.random() < noise.markov_flip:
                bit = self.previous_bit
        self.previous_bit = bit
        self.cycle_index += 1
        return samples, bit


def generate_raw(
    n_bits: int,
    config: CycleConfig,
    params: DeviceParams,
    noise: NoiseModel = NoiseModel(),
    rng_seed: int | None = 0,
) -> BitString:
    """Generate ``n_bits`` raw bits, one per simulated cycle.

    Deterministic for a given ``rng_seed``.  Cycles are processed in fixed
    vectorized batches, so the stream for a seed is stable across hosts but
    differs from the draw-by-draw order of :class:`CycleSimulator`; both
    paths sample the same process.
    """
    if n_bits < 1:
        raise ValueError(f"n_bits must be >= 1, got {n_bits}")
    rng = np.random.default_rng(rng_seed)
    cfg, par = config, params

    v_read_p = mtj_voltage(par.r_parallel, cfg.v_offset, cfg.r_series)
    v_read_ap = mtj_voltage(par.r_antiparallel, cfg.v_offset, cfg.r_series)
    n_read = cfg.n_read_samples

    out = np.empty(n_bits, dtype=np.uint8)
    carry = np.uint8(0)
    have_carry = False
    for start in range(0, n_bits, _BATCH_CYCLES):
        count = min(_BATCH_CYCLES, n_bits - start)
        idx = np.arange(start, start + count)
        v_eff = cfg.v_perturb + _drift_offset(idx, noise)
        p_sw = np.where(
            v_eff > 0,
            switching_probability(np.maximum(v_eff, 1e-300), cfg.w_perturb, par),
            0.0,
        )
        switched = rng.random(count) < p_sw

        if noise.read_noise_sd > 0:
            v_clean = np.where(switched, v_read_ap, v_read_p)
            v = v_clean[:, None] + rng.normal(
                0.0, noise.read_noise_sd, size=(count, n_read)
            )
            np.clip(v, _DIVIDER_CLIP, cfg.v_offset - _DIVIDER_CLIP, out=v)
            mean_r = read_resistance(v, cfg.v_offset, cfg.r_series).mean(axis=1)
            bits = (mean_r > cfg.r_threshold).astype(np.uint8)
        else:
            r_state = np.where(switched, par.r_antiparallel, par.r_parallel)
            bits = (r_state > cfg.r_threshold).astype(np.uint8)

        if noise.markov_flip > 0:
            replaced = rng.random(count) < noise.markov_flip
            if have_carry:
                bits = np.concatenate(([carry], bits))
                replaced = np.concatenate(([False], replaced))
            else:
                replaced[0] = False  # first bit ever has no predecessor
            # Forward-fill: each replaced position inherits the nearest
            # earlier kept bit.
            keep_pos = np.where(replaced, 0, np.arange(bits.size))
            np.maximum.accumulate(keep_pos, out=keep_pos)
            bits = bits[keep_pos]
            if have_carry:
                bits = bits[1:]
        out[start : start + count] = bits
        carry = bits[-1]
        have_carry = True

    return BitString.from_array(out)
