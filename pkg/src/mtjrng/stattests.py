"""Block-based statistical testing of bitstreams.

Implements eight of the classic randomness tests (frequency, block
frequency, cumulative sums, runs, longest run of ones, spectral, serial,
approximate entropy) with the two-level methodology: the input is split
into fixed-length blocks, every test produces one P-value per block, and a
test passes only if

1. the P-values are consistent with uniformity (P-value_T >= 1e-4), and
2. the fraction of blocks with P >= alpha clears the three-sigma
   confidence band (1-alpha) - 3*sqrt(alpha(1-alpha)/n_blocks).

Tests that emit several P-value streams per block (cumulative sums,
serial) are evaluated per stream and report the minimum values.  The runs
test is recorded as failed-by-prerequisite when the frequency test fails,
and approximate entropy likewise when serial fails.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import rfft
from scipy.special import erfc, gammaincc, ndtr

from .bitcore import BitString

__all__ = [
    "StatisticRun",
    "TestResult",
    "SuiteReport",
    "proportion_threshold",
    "pvalue_uniformity",
    "frequency_test",
    "block_frequency_test",
    "cumulative_sums_test",
    "runs_test",
    "longest_run_test",
    "spectral_test",
    "serial_test",
    "approximate_entropy_test",
    "run_test",
    "run_suite",
    "TEST_NAMES",
]

TEST_NAMES = (
    "frequency",
    "block_frequency",
    "cumulative_sums",
    "runs",
    "longest_run",
    "fft",
    "serial",
    "approximate_entropy",
)

# Per-block significance and the uniformity floor for P-value_T.
DEFAULT_ALPHA = 0.01
UNIFORMITY_FLOOR = 1e-4

_UNIFORMITY_BINS = 10
_RECOMMENDED_BLOCKS = 55


def proportion_threshold(alpha: float, n_blocks: int) -> float:
    """Lower edge of the pass-proportion confidence band.

    With expected pass rate p = 1 - alpha, the acceptable proportion is
    p - 3*sqrt(p_hat(1-p_hat)/n) evaluated at p_hat = 1 - alpha.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n_blocks < 2:
        raise ValueError(f"need at least 2 blocks, got {n_blocks}")
    p_hat = 1.0 - alpha
    return p_hat - 3.0 * math.sqrt(p_hat * (1.0 - p_hat) / n_blocks)


def pvalue_uniformity(pvalues, warn: bool = True) -> float:
    """Goodness-of-fit P-value_T for the uniformity of a set of P-values.

    Chi-square over ten equal bins of [0, 1]; values below 1e-4 indicate
    the per-block P-values are not uniform.
    """
    p = np.asarray(pvalues, dtype=np.float64)
    if p.size == 0:
        raise ValueError("need at least one P-value")
    if warn and p.size < _RECOMMENDED_BLOCKS:
        warnings.warn(
            f"uniformity check on {p.size} P-values; >= {_RECOMMENDED_BLOCKS} recommended",
            stacklevel=2,
        )
    counts, _ = np.histogram(p, bins=_UNIFORMITY_BINS, range=(0.0, 1.0))
    expected = p.size / _UNIFORMITY_BINS
    chi_sq = float(((counts - expected) ** 2 / expected).sum())
    return float(gammaincc((_UNIFORMITY_BINS - 1) / 2.0, chi_sq / 2.0))


# -- individual tests (operate on uint8 arrays of 0/1) ----------------


def _require(arr: np.ndarray, minimum: int, name: str) -> int:
    n = arr.size
    if n < minimum:
        raise ValueError(f"{name} test needs at least {minimum} bits, got {n}")
    return n


def frequency_test(arr: np.ndarray) -> float:
    """Monobit test: P = erfc(|#1 - #0| / sqrt(2 n))."""
    n = _require(arr, 10, "frequency")
    s = 2 * int(arr.sum(dtype=np.int64)) - n
    return float(erfc(abs(s) / math.sqrt(n) / math.sqrt(2.0)))


def block_frequency_test(arr: np.ndarray, m_block: int = 128) -> float:
    n = _require(arr, 2 * m_block, "block_frequency")
    n_sub = n // m_block
    pi = arr[: n_sub * m_block].reshape(n_sub, m_block).mean(axis=1)
    chi_sq = 4.0 * m_block * float(((pi - 0.5) ** 2).sum())
    return float(gammaincc(n_sub / 2.0, chi_sq / 2.0))


def _cusum_pvalue(z: int, n: int) -> float:
    sq = math.sqrt(n)
    k = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    term1 = float((ndtr((4 * k + 1) * z / sq) - ndtr((4 * k - 1) * z / sq)).sum())
    k = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    term2 = float((ndtr((4 * k + 3) * z / sq) - ndtr((4 * k + 1) * z / sq)).sum())
    return 1.0 - term1 + term2


def cumulative_sums_test(arr: np.ndarray) -> dict[str, float]:
    """Maximum-excursion test of the +/-1 random walk, both directions."""
    n = _require(arr, 10, "cumulative_sums")
    steps = 2 * arr.astype(np.int64) - 1
    z_fwd = int(np.abs(np.cumsum(steps)).max())
    z_bwd = int(np.abs(np.cumsum(steps[::-1])).max())
    return {
        "forward": min(max(_cusum_pvalue(z_fwd, n), 0.0), 1.0),
        "backward": min(max(_cusum_pvalue(z_bwd, n), 0.0), 1.0),
    }


def runs_test(arr: np.ndarray) -> float:
    """Total-runs test; returns 0 when the frequency prerequisite fails."""
    n = _require(arr, 10, "runs")
    pi = float(arr.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(np.diff(arr)))
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    return float(erfc(num / den))


_LONGEST_RUN_CONFIGS = (
    # (min n, M, class boundaries (low, high), class probabilities)
    (750_000, 10_000, (10, 16), (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, (4, 9), (0.1174, 0.2430, 0.2493, 0.1770, 0.1088, 0.1047)),
    (128, 8, (1, 4), (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_ones_run(block: np.ndarray) -> int:
    padded = np.empty(block.size + 2, dtype=np.int8)
    padded[0] = padded[-1] = 0
    padded[1:-1] = block
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    if starts.size == 0:
        return 0
    ends = np.flatnonzero(d == -1)
    return int((ends - starts).max())


def longest_run_test(arr: np.ndarray) -> float:
    n = _require(arr, 128, "longest_run")
    for min_n, m_block, (lo, hi), pis in _LONGEST_RUN_CONFIGS:
        if n >= min_n:
            break
    n_sub = n // m_block
    blocks = arr[: n_sub * m_block].reshape(n_sub, m_block)
    longest = np.fromiter(
        (_longest_ones_run(b) for b in blocks), dtype=np.int64, count=n_sub
    )
    classes = np.clip(longest, lo, hi) - lo
    v = np.bincount(classes, minlength=len(pis)).astype(np.float64)
    expected = n_sub * np.asarray(pis)
    chi_sq = float(((v - expected) ** 2 / expected).sum())
    return float(gammaincc((len(pis) - 1) / 2.0, chi_sq / 2.0))


def spectral_test(arr: np.ndarray) -> float:
    """Discrete Fourier transform test for periodic features."""
    n = _require(arr, 10, "fft")
    spectrum = rfft((2.0 * arr - 1.0).astype(np.float64))
    moduli = np.abs(spectrum[: n // 2])
    threshold = math.sqrt(math.log(1.0 / 0.05) * n)
    n1 = int(np.count_nonzero(moduli < threshold))
    n0 = 0.95 * n / 2.0
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return float(erfc(abs(d) / math.sqrt(2.0)))


def _window_counts(arr: np.ndarray, m: int) -> np.ndarray:
    """Counts of all overlapping m-bit windows, wrapping around the end."""
    n = arr.size
    ext = np.concatenate([arr, arr[: m - 1]]).astype(np.int64) if m > 1 else arr.astype(np.int64)
    w = np.zeros(n, dtype=np.int64)
    for j in range(m):
        w = (w << 1) | ext[j : j + n]
    return np.bincount(w, minlength=1 << m)


def _psi_sq(arr: np.ndarray, m: int) -> float:
    if m == 0:
        return 0.0
    counts = _window_counts(arr, m).astype(np.float64)
    n = arr.size
    return float((1 << m) / n * (counts**2).sum() - n)


def serial_test(arr: np.ndarray, m: int = 16) -> dict[str, float]:
    """Overlapping m-tuple frequency test; two difference statistics.

    Choose m well below log2(n) - 2; the hard floor only rejects inputs
    shorter than the tuple space itself.
    """
    if m < 2:
        raise ValueError("serial test needs m >= 2")
    _require(arr, 1 << m, "serial")
    psi_m = _psi_sq(arr, m)
    psi_m1 = _psi_sq(arr, m - 1)
    psi_m2 = _psi_sq(arr, m - 2)
    delta1 = psi_m - psi_m1
    delta2 = psi_m - 2.0 * psi_m1 + psi_m2
    return {
        "delta1": float(gammaincc(2 ** (m - 2), delta1 / 2.0)),
        "delta2": float(gammaincc(2 ** (m - 3), delta2 / 2.0)),
    }


def approximate_entropy_test(arr: np.ndarray, m: int = 10) -> float:
    if m < 1:
        raise ValueError("approximate entropy needs m >= 1")
    n = _require(arr, 1 << m, "approximate_entropy")

    def phi(mm: int) -> float:
        counts = _window_counts(arr, mm)
        c = counts[counts > 0] / n
        return float((c * np.log(c)).sum())

    ap_en = phi(m) - phi(m + 1)
    chi_sq = 2.0 * n * (math.log(2.0) - ap_en)
    return float(gammaincc(2 ** (m - 1), chi_sq / 2.0))


def _block_pvalues(arr: np.ndarray, serial_m: int, apen_m: int, block_freq_m: int):
    """All statistic streams for one block, keyed (test, stream)."""
    out: dict[str, dict[str, float]] = {}
    out["frequency"] = {"": frequency_test(arr)}
    out["block_frequency"] = {"": block_frequency_test(arr, block_freq_m)}
    out["cumulative_sums"] = cumulative_sums_test(arr)
    out["runs"] = {"": runs_test(arr)}
    out["longest_run"] = {"": longest_run_test(arr)}
    out["fft"] = {"": spectral_test(arr)}
    out["serial"] = serial_test(arr, serial_m)
    out["approximate_entropy"] = {"": approximate_entropy_test(arr, apen_m)}
    return out


def run_test(name: str, block, **params) -> float:
    """Run one test on a single block; returns the minimum P-value across
    the test's statistic streams (most tests have exactly one)."""
    arr = block.to_array() if isinstance(block, BitString) else np.asarray(block, dtype=np.uint8)
    dispatch = {
        "frequency": lambda: frequency_test(arr),
        "block_frequency": lambda: block_frequency_test(arr, **params),
        "cumulative_sums": lambda: cumulative_sums_test(arr),
        "runs": lambda: runs_test(arr),
        "longest_run": lambda: longest_run_test(arr),
        "fft": lambda: spectral_test(arr),
        "serial": lambda: serial_test(arr, **params),
        "approximate_entropy": lambda: approximate_entropy_test(arr, **params),
    }
    if name not in dispatch:
        raise ValueError(f"unknown test {name!r}; known: {', '.join(TEST_NAMES)}")
    result = dispatch[name]()
    if isinstance(result, dict):
        return min(result.values())
    return result


@dataclass(frozen=True)
class StatisticRun:
    """One P-value stream: a statistic evaluated on every block."""

    name: str
    pvalues: tuple[float, ...]
    proportion: float
    pvalue_t: float


@dataclass(frozen=True)
class TestResult:
    """Aggregated verdict for one test.

    For multi-statistic tests the proportion and P-value_T columns hold
    the minimum across streams.  A skipped test (failed prerequisite)
    carries no values and counts as failed.
    """

    test_name: str
    runs: tuple[StatisticRun, ...]
    proportion: float | None
    pvalue_t: float | None
    passed: bool
    skipped: bool = False
    note: str = ""

    @property
    def per_block_pvalues(self) -> tuple[float, ...]:
        """Per-block minimum across this test's statistic streams."""
        if not self.runs:
            return ()
        return tuple(min(col) for col in zip(*(r.pvalues for r in self.runs)))


@dataclass(frozen=True)
class SuiteReport:
    block_length: int
    n_blocks: int
    alpha: float
    threshold: float
    results: tuple[TestResult, ...]
    overall_pass: bool

    def result(self, test_name: str) -> TestResult:
        for r in self.results:
            if r.test_name == test_name:
                return r
        raise KeyError(test_name)

    def render_table(self) -> str:
        """Aligned table: test, P-value (uniformity), proportion, verdict."""

        def floor4(v: float | None) -> str:
            if v is None:
                return "-"
            return f"{math.floor(v * 10_000) / 10_000:.4f}"

        rows = [("Statistical test", "P-value", "Proportion", "Result")]
        for r in self.results:
            verdict = "Success" if r.passed else ("Skipped" if r.skipped else "Failure")
            rows.append((r.test_name, floor4(r.pvalue_t), floor4(r.proportion), verdict))
        widths = [max(len(row[c]) for row in rows) for c in range(4)]
        lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)) for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append("")
        lines.append(
            f"blocks: {self.n_blocks} x {self.block_length} bits, alpha: {self.alpha}, "
            f"proportion threshold: {self.threshold:.6f}"
        )
        lines.append(f"overall: {'PASS' if self.overall_pass else 'FAIL'}"
                     " (skipped tests count as failed)")
        return "\n".join(lines)

    def to_text(self) -> str:
        """Machine-readable dump: one line per statistic stream."""
        lines = [
            f"block_length: {self.block_length}",
            f"n_blocks: {self.n_blocks}",
            f"alpha: {self.alpha!r}",
            f"threshold: {self.threshold!r}",
            f"overall_pass: {self.overall_pass}",
        ]
        for r in self.results:
            status = "skipped" if r.skipped else ("pass" if r.passed else "fail")
            lines.append(f"test: {r.test_name} status={status}")
            for run in r.runs:
                stream = run.name or "main"
                lines.append(
                    f"  stream: {stream} proportion={run.proportion!r} "
                    f"pvalue_t={run.pvalue_t!r}"
                )
                lines.append("  pvalues: " + " ".join(repr(p) for p in run.pvalues))
        return "\n".join(lines) + "\n"


def run_suite(
    bits: BitString,
    block_length: int = 1_000_000,
    alpha: float = DEFAULT_ALPHA,
    serial_m: int = 16,
    apen_m: int = 10,
    block_freq_m: int = 128,
) -> SuiteReport:
    """Partition ``bits`` into blocks, run every test, aggregate verdicts.

    The remainder after the last full block is discarded.  Fewer than 55
    blocks triggers a reduced-confidence warning; fewer than 2 is an
    error.  Identical input always yields an identical report.
    """
    if block_length < 1:
        raise ValueError(f"block length must be positive, got {block_length}")
    n_blocks = len(bits) // block_length
    if n_blocks < 2:
        raise ValueError(
            f"need at least 2 blocks of {block_length} bits, have {len(bits)} bits"
        )
    if n_blocks < _RECOMMENDED_BLOCKS:
        warnings.warn(
            f"only {n_blocks} blocks; proportion and uniformity verdicts have "
            f"reduced confidence below {_RECOMMENDED_BLOCKS}",
            stacklevel=2,
        )

    streams: dict[str, dict[str, list[float]]] = {t: {} for t in TEST_NAMES}
    for b in range(n_blocks):
        arr = bits[b * block_length : (b + 1) * block_length].to_array()
        per_block = _block_pvalues(arr, serial_m, apen_m, block_freq_m)
        for test, values in per_block.items():
            for stream, p in values.items():
                streams[test].setdefault(stream, []).append(p)

    threshold = proportion_threshold(alpha, n_blocks)

    def aggregate(test: str) -> TestResult:
        stat_runs = []
        for stream, ps in streams[test].items():
            proportion = sum(p >= alpha for p in ps) / n_blocks
            p_t = pvalue_uniformity(ps, warn=False)
            stat_runs.append(StatisticRun(stream, tuple(ps), proportion, p_t))
        proportion = min(r.proportion for r in stat_runs)
        p_t = min(r.pvalue_t for r in stat_runs)
        passed = p_t >= UNIFORMITY_FLOOR and proportion >= threshold
        return TestResult(test, tuple(stat_runs), proportion, p_t, passed)

    results = {test: aggregate(test) for test in TEST_NAMES}

    # Prerequisite conventions: runs requires frequency, approximate
    # entropy requires serial; a failed prerequisite records the dependent
    # test as skipped-failed.
    for dependent, prerequisite in (("runs", "frequency"), ("approximate_entropy", "serial")):
        if not results[prerequisite].passed:
            results[dependent] = TestResult(
                dependent,
                (),
                None,
                None,
                passed=False,
                skipped=True,
                note=f"skipped: {prerequisite} prerequisite failed",
            )

    ordered = tuple(results[t] for t in TEST_NAMES)
    overall = all(r.passed for r in ordered)
    return SuiteReport(block_length, n_blocks, alpha, threshold, ordered, overall)
