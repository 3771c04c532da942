"""Leftover-hash-lemma sizing and Toeplitz-hashing extraction.

An (n + m - 1)-bit uniform seed defines an m x n binary Toeplitz matrix
T[i][j] = s[n-1+i-j] (first row s_n..s_1 right-to-left, first column
s_n..s_{n+m-1} top-to-bottom, 1-indexed).  Extraction is z = T x over
GF(2).  Two evaluation paths are provided:

* ``toeplitz_direct`` - sliding-window dot products straight from the
  matrix definition, O(n m); the reference oracle.
* ``toeplitz_fft`` - circulant embedding: the required output bits are
  coefficients n..n+m-1 of the integer convolution of seed and input,
  obtained from one cyclic convolution of length >= n+m-1 via real FFTs,
  rounded to integers and reduced mod 2.  Bit-identical to the direct
  path; a rounding guard rejects any transform output too far from an
  integer instead of silently flipping bits.

Output sizing follows m = floor(k - 2*log2(1/epsilon) + 2), evaluated in
exact integer arithmetic (the floor of an expression this close to 10^8
cannot be trusted to double precision).

Note on sizing provenance: one published MTJ extraction run reports
m = 169,345,260 for k = 169,345,406 and epsilon = 1e-10; the formula
above gives 169,345,341.  This implementation follows the formula.
"""

import hashlib
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .bitcore import BitString

__all__ = [
    "ExtractorParams",
    "ToeplitzSeed",
    "ExtractionResult",
    "output_length",
    "toeplitz_matrix",
    "toeplitz_direct",
    "toeplitz_fft",
    "extract",
    "extract_chunked",
    "write_extracted_file",
    "read_extracted_file",
]

# Floating-point transforms are exact-roundable only while convolution
# values (bounded by n) stay far from 2^53; block well before that.
_MAX_CONV_LEN = 1 << 26
# Largest tolerated distance from an integer after the inverse transform.
_ROUNDING_GUARD = 0.25

_FILE_MAGIC = b"MTJX1 "


def _as_epsilon(epsilon) -> Fraction:
    """Normalize a security parameter to an exact Fraction in (0, 1)."""
    if isinstance(epsilon, Fraction):
        eps = epsilon
    elif isinstance(epsilon, str):
        eps = Fraction(Decimal(epsilon))
    elif isinstance(epsilon, Decimal):
        eps = Fraction(epsilon)
    elif isinstance(epsilon, float):
        eps = Fraction(epsilon)
    elif isinstance(epsilon, int):
        eps = Fraction(epsilon)
    else:
        raise TypeError(f"unsupported epsilon type {type(epsilon).__name__}")
    if not 0 < eps < 1:
        raise ValueError(f"epsilon must lie strictly in (0, 1), got {epsilon}")
    return eps


def _epsilon_text(eps: Fraction) -> str:
    """Exact decimal form when one exists, else 'numerator/denominator'."""
    num, den = eps.numerator, eps.denominator
    d = den
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d == 1:
        return str(Decimal(num) / Decimal(den))
    return f"{num}/{den}"


def _ceil_log2_ratio(c: int, d: int) -> int:
    """Smallest integer j >= 0 with 2^j >= c/d, exactly (c, d positive)."""
    j = max(c.bit_length() - d.bit_length() - 1, 0)
    while (d << j) < c:
        j += 1
    return j


def output_length(k: int, epsilon) -> int:
    """Extractable output length m = floor(k - 2*log2(1/epsilon) + 2).

    Evaluated exactly: with epsilon = a/b the formula is
    (k + 2) - ceil(log2(b^2 / a^2)), and the ceiling of the log of a
    rational is pure integer arithmetic.  Raises if the budget leaves
    fewer than 1 output bit.
    """
    if k < 1:
        raise ValueError(f"min-entropy bound k must be >= 1, got {k}")
    eps = _as_epsilon(epsilon)
    m = k + 2 - _ceil_log2_ratio(eps.denominator**2, eps.numerator**2)
    if m < 1:
        raise ValueError(
            f"insufficient entropy: k={k} with epsilon={epsilon} leaves m={m} < 1"
        )
    return m


@dataclass(frozen=True)
class ExtractorParams:
    """Consistent (n, k, epsilon, m, r) extraction parameters.

    Construction validates every invariant: m is exactly the leftover-hash
    budget for (k, epsilon), m <= k <= n, and the seed length is n + m - 1.
    """

    n: int
    k: int
    epsilon: Fraction
    m: int
    r: int

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _as_epsilon(self.epsilon))
        expected_m = output_length(self.k, self.epsilon)
        if self.m != expected_m:
            raise ValueError(f"m={self.m} inconsistent with floor formula value {expected_m}")
        if not 1 <= self.m <= self.k <= self.n:
            raise ValueError(f"need 1 <= m <= k <= n, got m={self.m}, k={self.k}, n={self.n}")
        if self.r != self.n + self.m - 1:
            raise ValueError(f"seed length r={self.r} must equal n+m-1={self.n + self.m - 1}")

    @classmethod
    def for_source(cls, n: int, k: int, epsilon) -> "ExtractorParams":
        """Size an extraction for an n-bit input with min-entropy >= k."""
        m = output_length(k, epsilon)
        return cls(n=n, k=k, epsilon=_as_epsilon(epsilon), m=m, r=n + m - 1)

    @property
    def epsilon_text(self) -> str:
        return _epsilon_text(self.epsilon)


@dataclass(frozen=True)
class ToeplitzSeed:
    """Seed bits defining one Toeplitz matrix; length must be n + m - 1."""

    bits: BitString

    def validate_for(self, n: int, m: int) -> None:
        need = n + m - 1
        if len(self.bits) != need:
            raise ValueError(
                f"seed length {len(self.bits)} != n+m-1 = {need} for n={n}, m={m}"
            )


def _seed_bits(seed) -> BitString:
    return seed.bits if isinstance(seed, ToeplitzSeed) else seed


def toeplitz_matrix(seed, n: int, m: int) -> np.ndarray:
    """Materialize the m x n matrix T[i][j] = s[n-1+i-j] (small shapes only)."""
    s = _seed_bits(seed)
    if len(s) != n + m - 1:
        raise ValueError(f"seed length {len(s)} != n+m-1 = {n + m - 1}")
    if n * m > 1 << 22:
        raise ValueError("refusing to materialize a matrix this large")
    sa = s.to_array()
    i = np.arange(m)[:, None]
    j = np.arange(n)[None, :]
    return sa[n - 1 + i - j]


def _check_shapes(seed: BitString, x: BitString, m: int) -> int:
    n = len(x)
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if len(seed) != n + m - 1:
        raise ValueError(f"seed length {len(seed)} != n+m-1 = {n + m - 1}")
    return n


def toeplitz_direct(seed, x: BitString, m: int) -> BitString:
    """Reference-oracle Toeplitz hash: row-by-row GF(2) dot products.

    O(n m); row i is the seed window s[i : i+n] against the reversed
    input, exactly the diagonal-constant matrix layout.
    """
    s = _seed_bits(seed)
    n = _check_shapes(s, x, m)
    sa = s.to_array().astype(np.int64)
    x_rev = x.to_array()[::-1].astype(np.int64)
    z = np.empty(m, dtype=np.uint8)
    for i in range(m):
        z[i] = int(sa[i : i + n] @ x_rev) & 1
    return BitString.from_array(z)


def toeplitz_fft(seed, x: BitString, m: int) -> BitString:
    """FFT-accelerated Toeplitz hash, bit-identical to ``toeplitz_direct``.

    Embeds the Toeplitz matrix in a circulant of transform-friendly size
    L >= n+m-1 (zero-filled), multiplies spectra, inverse-transforms, and
    keeps the first m coefficients rounded to integers mod 2.  Raises if
    the convolution is too long for exact floating-point rounding or if
    any output coefficient strays from an integer by more than the guard.
    """
    s = _seed_bits(seed)
    n = _check_shapes(s, x, m)
    conv_len = n + m - 1
    if conv_len >= _MAX_CONV_LEN:
        raise ValueError(
            f"convolution length {conv_len} exceeds the exact-rounding limit "
            f"{_MAX_CONV_LEN}; split the input (see extract_chunked)"
        )
    L = next_fast_len(conv_len, real=True)

    sa = s.to_array()
    circulant = np.zeros(L, dtype=np.float64)
    circulant[:m] = sa[n - 1 :]
    if n > 1:
        circulant[L - (n - 1) :] = sa[: n - 1]
    spectrum = rfft(circulant, overwrite_x=True)
    del circulant

    padded = np.zeros(L, dtype=np.float64)
    padded[:n] = x.to_array()
    x_spectrum = rfft(padded, overwrite_x=True)
    del padded

    np.multiply(spectrum, x_spectrum, out=spectrum)
    del x_spectrum
    y = irfft(spectrum, L, overwrite_x=True)[:m]
    rounded = np.rint(y)
    drift = float(np.abs(y - rounded).max())
    if drift > _ROUNDING_GUARD:
        raise ArithmeticError(
            f"convolution rounding drift {drift:.3g} exceeds guard {_ROUNDING_GUARD}"
        )
    return BitString.from_array((rounded.astype(np.int64) & 1).astype(np.uint8))


@dataclass(frozen=True)
class ExtractionResult:
    """Extracted bits plus the provenance header they are shipped with."""

    bits: BitString
    header: dict[str, str]


def _sha256_bits(bits: BitString) -> str:
    digest = hashlib.sha256()
    digest.update(str(len(bits)).encode())
    digest.update(b"\n")
    digest.update(bits.to_packed())
    return digest.hexdigest()


def extract(
    x: BitString,
    seed,
    params: ExtractorParams,
    seed_source: str = "seed-file",
) -> ExtractionResult:
    """Run the strong extractor under fully validated parameters.

    The input must be exactly ``params.n`` bits and the seed exactly
    ``params.r`` bits; anything inconsistent is rejected before any
    computation.  Returns the output bits together with a provenance
    header recording the parameters and content digests.
    """
    s = _seed_bits(seed)
    if len(x) != params.n:
        raise ValueError(f"input length {len(x)} != n = {params.n}")
    if len(s) != params.r:
        raise ValueError(f"seed length {len(s)} != r = {params.r}")
    z = toeplitz_fft(s, x, params.m)
    header = {
        "format": "mtjrng-extracted-1",
        "n": str(params.n),
        "k": str(params.k),
        "m": str(params.m),
        "epsilon": params.epsilon_text,
        "input_sha256": _sha256_bits(x),
        "seed_sha256": _sha256_bits(s),
        "seed_source": seed_source,
    }
    return ExtractionResult(z, header)


def extract_chunked(
    x: BitString,
    h_min_per_bit: float,
    epsilon,
    chunk_bits: int,
    seed,
    seed_source: str = "seed-file",
) -> ExtractionResult:
    """Memory-bounded extraction over fixed-length chunks.

    Each full ``chunk_bits`` slice is extracted independently with
    per-chunk budget k = floor(chunk_bits * h_min_per_bit) and the SAME
    seed; a trailing partial chunk is discarded.  Reusing the seed is
    sound only under the assumption that distinct chunks are independent
    (the strong-extractor guarantee applies per chunk); callers must not
    use this mode on sources with cross-chunk correlations they have not
    accounted for.
    """
    if chunk_bits < 1:
        raise ValueError("chunk_bits must be >= 1")
    if len(x) < chunk_bits:
        raise ValueError(f"input shorter than one chunk ({len(x)} < {chunk_bits})")
    from .entropy import extractable_bits

    k_chunk = extractable_bits(chunk_bits, h_min_per_bit)
    params = ExtractorParams.for_source(chunk_bits, k_chunk, epsilon)
    s = _seed_bits(seed)
    if len(s) != params.r:
        raise ValueError(f"seed length {len(s)} != r = {params.r}")

    n_chunks = len(x) // chunk_bits
    pieces = []
    for c in range(n_chunks):
        chunk = x[c * chunk_bits : (c + 1) * chunk_bits]
        pieces.append(toeplitz_fft(s, chunk, params.m).to_array())
    z = BitString.from_array(np.concatenate(pieces))
    header = {
        "format": "mtjrng-extracted-1",
        "n": str(n_chunks * chunk_bits),
        "k": str(n_chunks * k_chunk),
        "m": str(len(z)),
        "epsilon": params.epsilon_text,
        "chunk_bits": str(chunk_bits),
        "chunks": str(n_chunks),
        "input_sha256": _sha256_bits(x),
        "seed_sha256": _sha256_bits(s),
        "seed_source": seed_source,
    }
    return ExtractionResult(z, header)


def write_extracted_file(path, result: ExtractionResult) -> None:
    """Write header + packed payload; the header is length-prefixed so the
    bit payload stays byte-aligned and bit-exact."""
    header_text = "".join(f"{k}: {v}\n" for k, v in result.header.items())
    header_bytes = header_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_FILE_MAGIC + str(len(header_bytes)).encode("ascii") + b"\n")
        fh.write(header_bytes)
        fh.write(result.bits.to_packed())


def read_extracted_file(path) -> ExtractionResult:
    with open(path, "rb") as fh:
        prefix = fh.readline()
        if not prefix.startswith(_FILE_MAGIC):
            raise ValueError(f"{path}: not an extracted-output file")
        header_len = int(prefix[len(_FILE_MAGIC) :].strip())
        header_bytes = fh.read(header_len)
        payload = fh.read()
    header: dict[str, str] = {}
    for line in header_bytes.decode("utf-8").splitlines():
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    m = int(header["m"])
    bits = BitString.from_packed(payload, m)
    return ExtractionResult(bits, header)
