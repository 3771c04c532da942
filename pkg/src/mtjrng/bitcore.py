"""Bit-sequence and probability primitives.

``BitString`` is the common currency of the whole pipeline: raw generator
output, extractor seeds and extracted output are all immutable packed bit
sequences.  ``Distribution`` is a finite probability mass function backing
the information-theoretic quantities (statistical distance, min-entropy)
used to reason about extractor security.
"""

import math
from collections.abc import Iterable, Mapping
from typing import Any

import numpy as np

__all__ = [
    "BitString",
    "Distribution",
    "statistical_distance",
    "min_entropy",
    "xor",
]

# Masses must sum to 1 within this tolerance for a Distribution to be valid.
MASS_TOLERANCE = 1e-12


class BitString:
    """Immutable sequence of bits with an explicit length.

    Bits are stored packed (8 per byte, LSB-first within each byte) so
    multi-hundred-megabit strings stay compact and all bulk operations run
    through numpy.  Trailing padding bits in the last byte are always zero
    and never observable.

    Parameters
    ----------
    bits : iterable of int
        Bit values; every element must be 0 or 1.
    """

    __slots__ = ("_packed", "_n")

    def __init__(self, bits: Iterable[int] = ()):
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("bits must contain only 0 and 1")
        self._init_from_array(arr.astype(np.uint8, copy=False))

    def _init_from_array(self, arr: np.ndarray) -> None:
        self._n = int(arr.size)
        self._packed = np.packbits(arr, bitorder="little")
        self._packed.flags.writeable = False

    # -- constructors -------------------------------------------------

    @classmethod
    def _wrap(cls, packed: np.ndarray, n: int) -> "BitString":
        out = cls.__new__(cls)
        out._packed = packed
        out._n = n
        packed.flags.writeable = False
        return out

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BitString":
        """Build from a numpy array of 0/1 values (any integer dtype)."""
        arr = np.asarray(arr)
        if arr.ndim != 1:
            raise ValueError(f"expected a 1-d array, got shape {arr.shape}")
        if arr.size and (arr.max(initial=0) > 1 or arr.min(initial=0) < 0):
            raise ValueError("bits must contain only 0 and 1")
        packed = np.packbits(arr.astype(np.uint8, copy=False), bitorder="little")
        return cls._wrap(packed, int(arr.size))

    @classmethod
    def from_packed(cls, buf: bytes | bytearray | np.ndarray, n_bits: int) -> "BitString":
        """Build from LSB-first packed bytes holding at least ``n_bits`` bits."""
        raw = np.frombuffer(bytes(buf), dtype=np.uint8)
        n_bytes = (n_bits + 7) // 8
        if raw.size < n_bytes:
            raise ValueError(
                f"packed buffer holds {raw.size * 8} bits, need {n_bits}"
            )
        raw = raw[:n_bytes].copy()
        # Zero any padding bits so equality/xor can work on raw bytes.
        if n_bits % 8:
            raw[-1] &= (1 << (n_bits % 8)) - 1
        return cls._wrap(raw, n_bits)

    @classmethod
    def from01(cls, text: str) -> "BitString":
        """Build from a string of '0'/'1' characters (whitespace ignored)."""
        cleaned = "".join(text.split())
        codes = np.frombuffer(cleaned.encode("ascii"), dtype=np.uint8)
        if codes.size and not np.isin(codes, (ord("0"), ord("1"))).all():
            raise ValueError("text must contain only '0' and '1'")
        return cls.from_array(codes - ord("0"))

    @classmethod
    def zeros(cls, n_bits: int) -> "BitString":
        if n_bits < 0:
            raise ValueError("length must be non-negative")
        return cls._wrap(np.zeros((n_bits + 7) // 8, dtype=np.uint8), n_bits)

    @classmethod
    def random(cls, n_bits: int, rng: np.random.Generator) -> "BitString":
        """Uniform random bits drawn from ``rng`` (testing / seed material)."""
        if n_bits < 0:
            raise ValueError("length must be non-negative")
        return cls.from_array(rng.integers(0, 2, size=n_bits, dtype=np.uint8))

    # -- accessors ----------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, key: int | slice) -> "int | BitString":
        if isinstance(key, slice):
            start, stop, step = key.indices(self._n)
            if step != 1:
                return BitString.from_array(self.to_array()[key])
            if start >= stop:
                return BitString.zeros(0)
            lo_byte, hi_byte = start // 8, (stop + 7) // 8
            window = np.unpackbits(
                self._packed[lo_byte:hi_byte], bitorder="little"
            )[start - lo_byte * 8 : stop - lo_byte * 8]
            return BitString.from_array(window)
        idx = key + self._n if key < 0 else key
        if not 0 <= idx < self._n:
            raise IndexError(f"bit index {key} out of range for length {self._n}")
        return int(self._packed[idx // 8] >> (idx % 8)) & 1

    def to_array(self) -> np.ndarray:
        """Unpacked uint8 array of 0/1 values (length == len(self))."""
        return np.unpackbits(self._packed, count=self._n, bitorder="little")

    def to_packed(self) -> bytes:
        """LSB-first packed bytes; final partial byte zero-padded."""
        return self._packed.tobytes()

    def to01(self) -> str:
        """ASCII '0'/'1' representation."""
        return (self.to_array() + ord("0")).tobytes().decode("ascii")

    def count_ones(self) -> int:
        return int(np.bitwise_count(self._packed).sum())

    # -- operations ---------------------------------------------------

    def __xor__(self, other: "BitString") -> "BitString":
        if not isinstance(other, BitString):
            return NotImplemented
        if self._n != other._n:
            raise ValueError(
                f"xor requires equal lengths, got {self._n} and {other._n}"
            )
        return BitString._wrap(np.bitwise_xor(self._packed, other._packed), self._n)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._n == other._n and bool(
            np.array_equal(self._packed, other._packed)
        )

    def __hash__(self) -> int:
        return hash((self._n, self._packed.tobytes()))

    def __repr__(self) -> str:
        if self._n <= 64:
            return f"BitString('{self.to01()}')"
        head = BitString.from_array(self.to_array()[:32]).to01()
        return f"BitString(length={self._n}, bits='{head}...')"


class Distribution:
    """Finite probability mass function over hashable symbols.

    Masses must be non-negative and sum to 1 within ``MASS_TOLERANCE``.
    Instances are immutable; symbols outside the support carry mass 0.
    """

    __slots__ = ("_mass",)

    def __init__(self, mass: Mapping[Any, float]):
        if not mass:
            raise ValueError("distribution needs a non-empty support")
        total = 0.0
        for symbol, p in mass.items():
            p = float(p)
            if p < 0.0:
                raise ValueError(f"negative mass {p} for symbol {symbol!r}")
            total += p
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"masses sum to {total!r}, expected 1 within {MASS_TOLERANCE}")
        self._mass = {s: float(p) for s, p in mass.items()}

    @classmethod
    def uniform(cls, symbols: Iterable[Any]) -> "Distribution":
        symbols = list(symbols)
        return cls({s: 1.0 / len(symbols) for s in symbols})

    @classmethod
    def point_mass(cls, symbol: Any) -> "Distribution":
        return cls({symbol: 1.0})

    @property
    def support(self) -> tuple:
        return tuple(self._mass)

    def __getitem__(self, symbol: Any) -> float:
        return self._mass.get(symbol, 0.0)

    def items(self):
        return self._mass.items()

    def __repr__(self) -> str:
        return f"Distribution({self._mass!r})"


def statistical_distance(p: Distribution, q: Distribution) -> float:
    """Half the L1 distance between two mass functions.

    The supports are unioned; symbols absent from one distribution are
    treated as mass 0.  The result lies in [0, 1]: 0 for identical
    distributions, 1 when the supports are disjoint (perfectly
    distinguishable).
    """
    symbols = set(p.support) | set(q.support)
    return 0.5 * sum(abs(p[s] - q[s]) for s in symbols)


def min_entropy(p: Distribution) -> float:
    """Min-entropy in bits: ``-log2`` of the largest mass."""
    p_max = max(mass for _, mass in p.items())
    if p_max <= 0.0:
        raise ValueError("distribution has no positive mass")
    return -math.log2(p_max)


def xor(a: BitString, b: BitString) -> BitString:
    """Bitwise exclusive-or of two equal-length bit strings."""
    return a ^ b
