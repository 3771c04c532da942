"""Min-entropy lower bounds and IID screening for raw generator output.

The estimators follow the standard conservative recipe: each one returns a
per-bit min-entropy in [0, 1] with a 99% upper confidence bound on the
dominant probability, and the reported entropy is the minimum over the
estimators that apply.  Two independence screens (a tuple chi-square test
and a shuffling-based rank test) decide whether the source may be treated
as IID; when it may not, the Markov estimator joins the minimum.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as _chi2_dist

from .bitcore import BitString

__all__ = [
    "EntropyReport",
    "ChiSquareResult",
    "PermutationResult",
    "extractable_bits",
    "mcv_estimate",
    "markov_estimate",
    "chi_square_independence",
    "permutation_test",
    "assess",
    "parse_report",
]

# Z-score of the one-sided 99% confidence bound used by the estimators.
_Z99 = 2.576
# Chain length convention for the Markov estimator.
_MARKOV_STEPS = 128
# Significance level of the chi-square independence screen.
_CHI_SIGNIFICANCE = 0.001
# Fraction of the shuffle population counted as the extreme tail.
_PERM_TAIL = 0.0005

PERMUTATION_STATISTICS = (
    "excursion",
    "directional_runs",
    "longest_directional_run",
    "average_collision",
)


def _log2(x: float) -> float:
    return math.log2(x) if x > 0.0 else -math.inf


def extractable_bits(n_bits: int, h_min_per_bit: float) -> int:
    """Number of extractable bits: floor(n_bits * h_min_per_bit)."""
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    if not 0.0 <= h_min_per_bit <= 1.0:
        raise ValueError(f"per-bit min-entropy must lie in [0, 1], got {h_min_per_bit}")
    return math.floor(n_bits * h_min_per_bit)


def _as_bits(bits: BitString | np.ndarray) -> np.ndarray:
    if isinstance(bits, BitString):
        return bits.to_array()
    return np.asarray(bits, dtype=np.uint8)


def mcv_estimate(bits: BitString | np.ndarray) -> float:
    """Most-common-value estimate of per-bit min-entropy.

    Uses the 99% upper confidence bound on the frequency of the most
    common symbol: ``p_u = min(1, p_hat + 2.576 * sqrt(p_hat(1-p_hat)/(L-1)))``
    and returns ``-log2(p_u)``.
    """
    arr = _as_bits(bits)
    L = arr.size
    if L < 2:
        raise ValueError("need at least 2 bits")
    ones = int(arr.sum(dtype=np.int64))
    p_hat = max(ones, L - ones) / L
    p_u = min(1.0, p_hat + _Z99 * math.sqrt(p_hat * (1.0 - p_hat) / (L - 1)))
    return -math.log2(p_u)


def markov_estimate(bits: BitString | np.ndarray) -> float:
    """Markov estimate of per-bit min-entropy for a binary source.

    Estimates the first-order transition matrix from counts, finds the most
    probable 128-step sequence among the six extremal candidates (constant
    runs, alternations, and single-switch paths), and returns
    ``min(-log2(p_max) / 128, 1)``.
    """
    arr = _as_bits(bits)
    L = arr.size
    if L < 2:
        raise ValueError("need at least 2 bits")
    ones = int(arr.sum(dtype=np.int64))
    p1 = ones / L
    p0 = 1.0 - p1

    a = arr[:-1].astype(np.int64)
    b = arr[1:].astype(np.int64)
    n1x = int(a.sum())
    n0x = a.size - n1x
    n11 = int((a & b).sum())
    n01 = int(b.sum()) - n11
    p11 = n11 / n1x if n1x else 0.0
    p10 = 1.0 - p11 if n1x else 0.0
    p01 = n01 / n0x if n0x else 0.0
    p00 = 1.0 - p01 if n0x else 0.0

    s = _MARKOV_STEPS
    candidates = [
        _log2(p0) + (s - 1) * _log2(p00),
        _log2(p0) + (s // 2) * _log2(p01) + (s // 2 - 1) * _log2(p10),
        _log2(p0) + _log2(p01) + (s - 2) * _log2(p11),
        _log2(p1) + _log2(p10) + (s - 2) * _log2(p00),
        _log2(p1) + (s // 2) * _log2(p10) + (s // 2 - 1) * _log2(p01),
        _log2(p1) + (s - 1) * _log2(p11),
    ]
    log_p_max = max(candidates)
    if log_p_max == -math.inf:
        return 1.0
    return min(-log_p_max / s, 1.0)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    critical_value: float
    degrees_of_freedom: int
    tuple_length: int
    passed: bool


def chi_square_independence(
    bits: BitString | np.ndarray, min_length: int = 10_000
) -> ChiSquareResult:
    """Chi-square independence screen on non-overlapping bit tuples.

    The tuple length m is the largest value <= 11 for which the least
    likely tuple is still expected at least 5 times.  Observed tuple counts
    are compared against the product-of-marginals expectation; the screen
    passes iff the statistic stays below the 0.001-significance critical
    value at 2^m - 2 degrees of freedom.  Degenerate inputs (a constant
    sequence, or too little data for any m >= 2) fail outright.
    """
    arr = _as_bits(bits)
    L = arr.size
    if L < min_length:
        raise ValueError(f"need at least {min_length} bits, got {L}")
    p1 = float(arr.mean())
    p0 = 1.0 - p1
    p_min = min(p0, p1)

    m = 0
    for cand in range(2, 12):
        if (L // cand) * p_min**cand >= 5.0:
            m = cand
    if m < 2:
        return ChiSquareResult(math.inf, 0.0, 0, 0, False)

    n_tuples = L // m
    trimmed = arr[: n_tuples * m].reshape(n_tuples, m)
    weights = (1 << np.arange(m - 1, -1, -1)).astype(np.int64)
    values = trimmed @ weights
    observed = np.bincount(values, minlength=1 << m).astype(np.float64)

    ones_per_value = np.bitwise_count(np.arange(1 << m, dtype=np.uint64)).astype(np.int64)
    expected = n_tuples * p1**ones_per_value * p0 ** (m - ones_per_value)
    statistic = float(((observed - expected) ** 2 / expected).sum())

    df = (1 << m) - 2
    critical = float(_chi2_dist.ppf(1.0 - _CHI_SIGNIFICANCE, df))
    return ChiSquareResult(statistic, critical, df, m, statistic <= critical)


# -- permutation-test statistics -------------------------------------


def _conversion_sums(arr: np.ndarray) -> np.ndarray:
    """Non-overlapping 8-bit blocks reduced to their number of ones."""
    n8 = arr.size // 8
    return arr[: n8 * 8].reshape(n8, 8).sum(axis=1, dtype=np.int64)


def _conversion_bytes(arr: np.ndarray) -> np.ndarray:
    """Non-overlapping 8-bit blocks interpreted as integers 0..255."""
    n8 = arr.size // 8
    return np.packbits(arr[: n8 * 8]).astype(np.int64)


def _excursion(arr: np.ndarray) -> float:
    cum = np.cumsum(arr, dtype=np.float64)
    steps = np.arange(1, arr.size + 1, dtype=np.float64)
    return float(np.abs(cum - steps * arr.mean()).max())


def _directional_signs(values: np.ndarray) -> np.ndarray:
    return np.where(values[1:] > values[:-1], 1, -1)


def _directional_runs(values: np.ndarray) -> float:
    s = _directional_signs(values)
    return float(1 + np.count_nonzero(s[1:] != s[:-1]))


def _longest_directional_run(values: np.ndarray) -> float:
    s = _directional_signs(values)
    boundaries = np.flatnonzero(s[1:] != s[:-1])
    edges = np.concatenate(([-1], boundaries, [s.size - 1]))
    return float(np.diff(edges).max())


def _average_collision(values: np.ndarray) -> float:
    seen = set()
    total = 0
    n_segments = 0
    count = 0
    for v in values.tolist():
        count += 1
        if v in seen:
            total += count
            n_segments += 1
            count = 0
            seen.clear()
        else:
            seen.add(v)
    return total / n_segments if n_segments else 0.0


def _permutation_statistics(arr: np.ndarray) -> dict[str, float]:
    sums = _conversion_sums(arr)
    return {
        "excursion": _excursion(arr),
        "directional_runs": _directional_runs(sums),
        "longest_directional_run": _longest_directional_run(sums),
        "average_collision": _average_collision(_conversion_bytes(arr)),
    }


@dataclass(frozen=True)
class PermutationResult:
    """Rank counters per statistic: (greater, equal) shuffle counts."""

    counters: dict[str, tuple[int, int]]
    n_shuffles: int
    passed: bool

    def statistic_passed(self, name: str) -> bool:
        c0, c1 = self.counters[name]
        tail = _PERM_TAIL * self.n_shuffles
        if c1 == self.n_shuffles:
            return False  # every shuffle ties: rank carries no information
        return (c0 + c1) > tail and c0 < self.n_shuffles - tail


def permutation_test(
    bits: BitString | np.ndarray,
    n_shuffles: int = 10_000,
    rng_seed: int | None = 0,
) -> PermutationResult:
    """Shuffling-based IID screen.

    Computes excursion, directional-run, and collision statistics on the
    original sequence and on ``n_shuffles`` uniformly shuffled copies.  For
    each statistic, counter C0 counts shuffles with a strictly greater
    value and C1 counts exact ties; the screen fails if the original lands
    in either extreme 0.05% tail (C0 + C1 <= 0.0005 * n or
    C0 >= n - 0.0005 * n), or if the ranks are degenerate (all ties, as for
    a constant sequence).

    Per-shuffle RNG streams are derived from ``rng_seed`` independently of
    execution order, so results do not depend on any parallel scheduling.
    """
    if n_shuffles < 100:
        raise ValueError(f"n_shuffles must be >= 100, got {n_shuffles}")
    arr = _as_bits(bits)
    if arr.size < 16:
        raise ValueError("sequence too short for the permutation statistics")

    original = _permutation_statistics(arr)
    counters = {name: [0, 0] for name in PERMUTATION_STATISTICS}
    streams = np.random.SeedSequence(rng_seed).spawn(n_shuffles)
    work = arr.copy()
    for child in streams:
        gen = np.random.default_rng(child)
        gen.shuffle(work)
        shuffled = _permutation_statistics(work)
        for name in PERMUTATION_STATISTICS:
            if shuffled[name] > original[name]:
                counters[name][0] += 1
            elif shuffled[name] == original[name]:
                counters[name][1] += 1

    frozen = {name: (c[0], c[1]) for name, c in counters.items()}
    result = PermutationResult(frozen, n_shuffles, True)
    passed = all(result.statistic_passed(name) for name in PERMUTATION_STATISTICS)
    return PermutationResult(frozen, n_shuffles, passed)


@dataclass(frozen=True)
class EntropyReport:
    """Assessment summary for one raw bitstream.

    ``h_min_per_bit`` is the minimum over all estimators applied; the
    extractable bit budget is ``floor(n_bits * h_min_per_bit)``.
    """

    n_bits: int
    h_min_per_bit: float
    k_extractable: int
    iid_verdict: str  # "iid" or "non_iid"
    estimator_details: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"n_bits: {self.n_bits}",
            f"h_min_per_bit: {self.h_min_per_bit!r}",
            f"k_extractable: {self.k_extractable}",
            f"iid_verdict: {self.iid_verdict}",
        ]
        for key, value in self.estimator_details.items():
            lines.append(f"{key}: {value!r}" if isinstance(value, float) else f"{key}: {value}")
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> EntropyReport:
    """Parse the key: value report format written by :meth:`EntropyReport.to_text`."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        n_bits = int(fields.pop("n_bits"))
        h = float(fields.pop("h_min_per_bit"))
        k = int(fields.pop("k_extractable"))
        verdict = fields.pop("iid_verdict")
    except KeyError as missing:
        raise ValueError(f"report is missing required field {missing}") from None
    if verdict not in ("iid", "non_iid"):
        raise ValueError(f"unknown iid_verdict {verdict!r}")
    details: dict = {}
    for key, value in fields.items():
        try:
            details[key] = float(value) if ("." in value or "inf" in value) else int(value)
        except ValueError:
            details[key] = value
    return EntropyReport(n_bits, h, k, verdict, details)


def assess(
    bits: BitString | np.ndarray,
    n_shuffles: int = 10_000,
    rng_seed: int | None = 0,
) -> EntropyReport:
    """Full entropy assessment of a raw bitstream.

    Runs the chi-square and permutation IID screens; the source is treated
    as IID only if both pass.  The reported per-bit min-entropy is the MCV
    estimate for an IID source and ``min(MCV, Markov)`` otherwise.
    """
    arr = _as_bits(bits)
    if arr.size < 1_000_000:
        warnings.warn(
            f"entropy assessment on {arr.size} bits; at least 1e6 recommended",
            stacklevel=2,
        )

    mcv = mcv_estimate(arr)
    markov = markov_estimate(arr)
    chi = chi_square_independence(arr)
    perm = permutation_test(arr, n_shuffles=n_shuffles, rng_seed=rng_seed)

    iid = chi.passed and perm.passed
    h = mcv if iid else min(mcv, markov)
    k = extractable_bits(arr.size, h)

    details = {
        "mcv_estimate": mcv,
        "markov_estimate": markov,
        "chi_square_statistic": chi.statistic,
        "chi_square_critical": chi.critical_value,
        "chi_square_pass": chi.passed,
        "permutation_shuffles": perm.n_shuffles,
        "permutation_pass": perm.passed,
    }
    for name, (c0, c1) in perm.counters.items():
        details[f"permutation_{name}"] = f"{c0}/{c1}"

    verdict = "iid" if iid else "non_iid"
    return EntropyReport(arr.size, h, k, verdict, details)
