"""Command-line pipeline: simulate -> estimate -> extract -> test.

Subcommands operate on packed bit files (8 bits/byte, LSB-first, length
recorded in a ``<file>.meta`` sidecar) or ASCII '0'/'1' files.  Extracted
output carries its own embedded provenance header.  Exit codes: 0 success,
1 stage failure, 2 invalid configuration.
"""

import argparse
import hashlib
import math
import secrets
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import entropy as entropy_mod
from . import extractor as extractor_mod
from . import mtj_sim, stattests
from .bitcore import BitString

__all__ = ["PipelineConfig", "ConfigError", "main"]


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


@dataclass
class PipelineConfig:
    """Flat key-value configuration covering every pipeline stage.

    Physical units match the simulator types: voltages mV, widths and
    period microseconds, resistances ohms, sample rate samples/s.
    """

    # device
    r_parallel: float = 2500.0
    r_antiparallel: float = 7500.0
    v_critical: float = 800.0
    delta: float = 40.0
    tau0: float = 1.0
    # cycle
    v_reset: float = -900.0
    w_reset: float = 1.0
    v_perturb: float = 652.0
    w_perturb: float = 1.0
    cycle_period: float = 8.0
    sample_rate: float = 2e6
    v_offset: float = 50.0
    r_series: float = 3000.0
    r_threshold: float = 4000.0
    # noise
    read_noise_sd: float = 0.0
    drift_amplitude: float = 0.0
    drift_period: float = 1000.0
    markov_flip: float = 0.0
    # generation
    n_bits: int = 1_000_000
    rng_seed: int | None = None
    calibrate: bool = True
    target_one_probability: float | None = None
    # entropy
    permutation_shuffles: int = 10_000
    permutation_seed: int | None = None
    # extraction
    epsilon: str = "1e-10"
    seed_file: str | None = None
    extractor_seed: int | None = None
    # testing
    block_length: int = 1_000_000
    alpha: float = 0.01
    # io
    format: str = "packed"

    _BOOL_KEYS = ("calibrate",)
    _INT_KEYS = ("n_bits", "permutation_shuffles", "block_length")
    _OPT_INT_KEYS = ("rng_seed", "permutation_seed", "extractor_seed")
    _STR_KEYS = ("epsilon", "format")
    _OPT_STR_KEYS = ("seed_file",)
    _OPT_FLOAT_KEYS = ("target_one_probability",)

    @classmethod
    def known_keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        cfg = cls()
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            cfg._set(key.strip(), value.strip(), where=f"{path}:{lineno}")
        return cfg

    def _set(self, key: str, value: str, where: str = "<cli>") -> None:
        if key not in self.known_keys():
            raise ConfigError(f"{where}: unknown config key {key!r}")
        try:
            if key in self._BOOL_KEYS:
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ValueError("expected a boolean")
                parsed = value.lower() in ("true", "1")
            elif key in self._INT_KEYS:
                parsed = int(value)
            elif key in self._OPT_INT_KEYS:
                parsed = None if value.lower() == "none" else int(value)
            elif key in self._STR_KEYS:
                parsed = value
            elif key in self._OPT_STR_KEYS:
                parsed = None if value.lower() in ("none", "") else value
            elif key in self._OPT_FLOAT_KEYS:
                parsed = None if value.lower() == "none" else float(value)
            else:
                parsed = float(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {value!r} ({exc})") from None
        setattr(self, key, parsed)

    def resolved(self) -> "PipelineConfig":
        """Fill in any auto-generated seeds so the echoed config is complete."""
        cfg = replace(self)
        if cfg.rng_seed is None:
            cfg.rng_seed = secrets.randbits(63)
        if cfg.permutation_seed is None:
            cfg.permutation_seed = secrets.randbits(63)
        try:
            extractor_mod._as_epsilon(cfg.epsilon)
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"bad epsilon {cfg.epsilon!r}: {exc}") from None
        if cfg.format not in ("packed", "ascii"):
            raise ConfigError(f"format must be 'packed' or 'ascii', got {cfg.format!r}")
        if cfg.n_bits < 1:
            raise ConfigError(f"n_bits must be >= 1, got {cfg.n_bits}")
        return cfg

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def device_params(self) -> mtj_sim.DeviceParams:
        return mtj_sim.DeviceParams(
            self.r_parallel, self.r_antiparallel, self.v_critical, self.delta, self.tau0
        )

    def cycle_config(self) -> mtj_sim.CycleConfig:
        return mtj_sim.CycleConfig(
            self.v_reset, self.w_reset, self.v_perturb, self.w_perturb,
            self.cycle_period, self.sample_rate, self.v_offset,
            self.r_series, self.r_threshold,
        )

    def noise_model(self) -> mtj_sim.NoiseModel:
        return mtj_sim.NoiseModel(
            self.read_noise_sd, self.drift_amplitude, self.drift_period, self.markov_flip
        )


# -- bit file I/O ------------------------------------------------------


def _meta_path(path) -> Path:
    return Path(str(path) + ".meta")


def write_bits(path, bits: BitString, fmt: str = "packed", extra: dict | None = None) -> None:
    path = Path(path)
    payload = bits.to_packed() if fmt == "packed" else bits.to01().encode("ascii")
    path.write_bytes(payload)
    meta = {
        "bits": str(len(bits)),
        "format": fmt,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    meta.update(extra or {})
    _meta_path(path).write_text("".join(f"{k}: {v}\n" for k, v in meta.items()))


def read_meta(path) -> dict[str, str]:
    meta: dict[str, str] = {}
    for line in _meta_path(path).read_text().splitlines():
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    return meta


def read_bits(path, fmt: str | None = None) -> BitString:
    """Read a bit file: extracted (embedded header), sidecar-described, or
    ASCII/packed by explicit format."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(len(extractor_mod._FILE_MAGIC))
    if magic == extractor_mod._FILE_MAGIC:
        return extractor_mod.read_extracted_file(path).bits

    payload = path.read_bytes()
    if _meta_path(path).exists():
        meta = read_meta(path)
        n = int(meta["bits"])
        file_fmt = meta.get("format", "packed")
        recorded = meta.get("payload_sha256")
        if recorded and hashlib.sha256(payload).hexdigest() != recorded:
            raise ValueError(f"{path}: payload digest does not match metadata")
        if file_fmt == "ascii":
            text = payload.decode("ascii")
            if len(text.strip()) != n:
                raise ValueError(f"{path}: ascii length != recorded bit count {n}")
            return BitString.from01(text)
        if len(payload) != (n + 7) // 8:
            raise ValueError(
                f"{path}: {len(payload)} bytes inconsistent with recorded {n} bits"
            )
        return BitString.from_packed(payload, n)

    if fmt == "ascii":
        return BitString.from01(payload.decode("ascii"))
    if fmt == "packed":
        return BitString.from_packed(payload, len(payload) * 8)
    raise ValueError(
        f"{path}: no sidecar metadata; pass --format to read a bare bit file"
    )


# -- subcommands -------------------------------------------------------


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for key, attr in (
        ("n_bits", "bits"),
        ("rng_seed", "rng_seed"),
        ("epsilon", "epsilon"),
        ("block_length", "block_length"),
        ("alpha", "alpha"),
        ("seed_file", "seed_file"),
        ("format", "format"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            cfg._set(key, str(value))
    return cfg.resolved()


def _simulation_inputs(cfg: PipelineConfig):
    params = cfg.device_params()
    cycle = cfg.cycle_config()
    if cfg.calibrate:
        params = mtj_sim.calibrate(params, cycle)
    if cfg.target_one_probability is not None:
        v = mtj_sim.perturb_voltage_for_probability(
            cfg.target_one_probability, cfg.w_perturb, params
        )
        cycle = replace(cycle, v_perturb=v)
    return cycle, params, cfg.noise_model()


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    cycle, params, noise = _simulation_inputs(cfg)
    if args.dry_run:
        print(cfg.to_text(), end="")
        print(f"# calibrated v_critical = {params.v_critical!r}")
        print(f"# effective v_perturb = {cycle.v_perturb!r}")
        return 0
    bits = mtj_sim.generate_raw(cfg.n_bits, cycle, params, noise, cfg.rng_seed)
    write_bits(
        args.out, bits, cfg.format,
        extra={"config_sha256": cfg.sha256(), "rng_seed": str(cfg.rng_seed)},
    )
    print(f"wrote {len(bits)} bits to {args.out} ({cfg.format}); rng_seed={cfg.rng_seed}")
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    bits = read_bits(args.infile, getattr(args, "format", None))
    report = entropy_mod.assess(
        bits, n_shuffles=cfg.permutation_shuffles, rng_seed=cfg.permutation_seed
    )
    Path(args.out).write_text(report.to_text())
    print(report.to_text(), end="")
    if report.k_extractable == 0:
        print("insufficient entropy: nothing extractable from this source", file=sys.stderr)
        return 1
    return 0


def _resolve_seed(cfg: PipelineConfig, r: int) -> tuple[BitString, str]:
    if cfg.seed_file:
        payload = Path(cfg.seed_file).read_bytes()
        if len(payload) * 8 < r:
            raise ValueError(
                f"seed file {cfg.seed_file} holds {len(payload) * 8} bits, need {r}"
            )
        return BitString.from_packed(payload, r), "seed-file"
    if cfg.extractor_seed is not None:
        print(
            "warning: deriving the extractor seed from a PRNG; output is NOT "
            "provably secure (testing only)", file=sys.stderr,
        )
        rng = np.random.default_rng(cfg.extractor_seed)
        return BitString.random(r, rng), f"prng (seed {cfg.extractor_seed}, non-provable)"
    print(
        "warning: drawing the extractor seed from OS entropy; provable security "
        "then rests on the OS source", file=sys.stderr,
    )
    return BitString.from_packed(secrets.token_bytes((r + 7) // 8), r), "os-entropy (non-provable)"


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    bits = read_bits(args.infile, getattr(args, "format", None))
    report = entropy_mod.parse_report(Path(args.report).read_text())
    if report.n_bits != len(bits):
        raise ValueError(
            f"report covers {report.n_bits} bits but input has {len(bits)}"
        )
    if report.k_extractable < 1:
        raise ValueError("insufficient entropy: report says nothing is extractable")
    params = extractor_mod.ExtractorParams.for_source(
        len(bits), report.k_extractable, cfg.epsilon
    )
    seed, seed_source = _resolve_seed(cfg, params.r)
    t0 = time.perf_counter()
    result = extractor_mod.extract(bits, seed, params, seed_source=seed_source)
    elapsed = time.perf_counter() - t0
    extractor_mod.write_extracted_file(args.out, result)
    throughput = params.n / elapsed if elapsed > 0 else math.inf
    print(
        f"n={params.n} k={params.k} m={params.m} epsilon={params.epsilon_text} "
        f"seed_bits={params.r}"
    )
    print(f"extraction took {elapsed:.3f} s ({throughput / 1e6:.4f} Mbit/s input throughput)")
    return 0


def cmd_test(args) -> int:
    cfg = _load_config(args)
    bits = read_bits(args.infile, getattr(args, "format", None))
    report = stattests.run_suite(bits, cfg.block_length, cfg.alpha)
    out_text = report.render_table() + "\n\n" + report.to_text()
    Path(args.out).write_text(out_text)
    print(report.render_table())
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    cycle, params, noise = _simulation_inputs(cfg)
    if args.dry_run:
        print(cfg.to_text(), end="")
        print(f"# calibrated v_critical = {params.v_critical!r}")
        print(f"# effective v_perturb = {cycle.v_perturb!r}")
        return 0

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw_path = out_dir / "raw.bits"
    report_path = out_dir / "entropy_report.txt"
    extracted_path = out_dir / "extracted.bits"

    print(f"[1/4] simulating {cfg.n_bits} bits (rng_seed={cfg.rng_seed})")
    raw = mtj_sim.generate_raw(cfg.n_bits, cycle, params, noise, cfg.rng_seed)
    write_bits(raw_path, raw, cfg.format,
               extra={"config_sha256": cfg.sha256(), "rng_seed": str(cfg.rng_seed)})

    print(f"[2/4] estimating entropy ({cfg.permutation_shuffles} shuffles)")
    report = entropy_mod.assess(
        raw, n_shuffles=cfg.permutation_shuffles, rng_seed=cfg.permutation_seed
    )
    report_path.write_text(report.to_text())
    print(f"  h_min_per_bit={report.h_min_per_bit:.6f} "
          f"k={report.k_extractable} verdict={report.iid_verdict}")
    if report.k_extractable < 1:
        print("halting: insufficient entropy to extract anything", file=sys.stderr)
        return 1

    print(f"[3/4] extracting at epsilon={cfg.epsilon}")
    try:
        xparams = extractor_mod.ExtractorParams.for_source(
            len(raw), report.k_extractable, cfg.epsilon
        )
    except ValueError as exc:
        print(f"halting at extraction: {exc}", file=sys.stderr)
        return 1
    seed, seed_source = _resolve_seed(cfg, xparams.r)
    t0 = time.perf_counter()
    result = extractor_mod.extract(raw, seed, xparams, seed_source=seed_source)
    elapsed = time.perf_counter() - t0
    extractor_mod.write_extracted_file(extracted_path, result)
    print(f"  n={xparams.n} k={xparams.k} m={xparams.m} "
          f"({xparams.n / max(elapsed, 1e-9) / 1e6:.3f} Mbit/s input throughput)")

    print(f"[4/4] statistical tests at {cfg.block_length}-bit blocks, alpha={cfg.alpha}")
    suites = {}
    for label, data in (("raw", raw), ("extracted", result.bits)):
        suite = stattests.run_suite(data, cfg.block_length, cfg.alpha)
        suites[label] = suite
        (out_dir / f"{label}_suite.txt").write_text(
            suite.render_table() + "\n\n" + suite.to_text()
        )

    summary = [
        f"n = {xparams.n}",
        f"k = {xparams.k}",
        f"m = {xparams.m}",
        f"epsilon = {xparams.epsilon_text}",
        f"iid_verdict = {report.iid_verdict}",
        f"raw suite: {'PASS' if suites['raw'].overall_pass else 'FAIL'}",
        f"extracted suite: {'PASS' if suites['extracted'].overall_pass else 'FAIL'}",
    ]
    for label in ("raw", "extracted"):
        failed = [r.test_name for r in suites[label].results if not r.passed]
        summary.append(f"{label} failing tests: {', '.join(failed) if failed else 'none'}")
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return 0


def _add_common(parser, *, bits=False, dry_run=False, fmt=False):
    parser.add_argument("--config", help="flat key=value config file")
    if bits:
        parser.add_argument("--bits", type=int, help="number of bits to simulate")
        parser.add_argument("--rng-seed", type=int, dest="rng_seed", help="simulator seed")
    if fmt:
        parser.add_argument("--format", choices=("packed", "ascii"),
                            help="bit file format (default packed)")
    if dry_run:
        parser.add_argument("--dry-run", action="store_true",
                            help="print the resolved configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtjrng",
        description="simulated MTJ randomness pipeline: simulate, estimate, extract, test",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate raw bits from the simulated device")
    _add_common(p, bits=True, dry_run=True, fmt=True)
    p.add_argument("--out", required=True, help="output bit file")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("estimate", help="lower-bound the min-entropy of a bit file")
    _add_common(p, fmt=True)
    p.add_argument("infile", help="raw bit file")
    p.add_argument("--out", required=True, help="entropy report path")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("extract", help="Toeplitz-extract uniform bits")
    _add_common(p, fmt=True)
    p.add_argument("infile", help="raw bit file")
    p.add_argument("--report", required=True, help="entropy report from 'estimate'")
    p.add_argument("--epsilon", help="security parameter (exact decimal)")
    p.add_argument("--seed-file", dest="seed_file", help="packed seed bits (>= n+m-1)")
    p.add_argument("--out", required=True, help="extracted output file")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("test", help="run the statistical test suite on a bit file")
    _add_common(p, fmt=True)
    p.add_argument("infile", help="bit file (raw or extracted)")
    p.add_argument("--block-length", type=int, dest="block_length")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True, help="suite report path")
    p.set_defaults(handler=cmd_test)

    p = sub.add_parser("pipeline", help="run all four stages end to end")
    _add_common(p, bits=True, dry_run=True, fmt=True)
    p.add_argument("--epsilon", help="security parameter (exact decimal)")
    p.add_argument("--block-length", type=int, dest="block_length")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed-file", dest="seed_file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
