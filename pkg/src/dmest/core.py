"""Deterministic randomness, bit-level I/O and synthetic data.

Every random draw in the package goes through :class:`Rng`, a splitmix64
generator.  splitmix64 is a counter-based generator: output ``t`` (starting at
0) of a stream seeded with ``s`` is ``mix(s + (t + 1) * GAMMA)``.  That lets
whole blocks of a stream, or many independent streams, be produced with numpy
in one shot while staying bit-identical to the scalar recurrence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_GAMMA_U = np.uint64(GAMMA)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_TWO_M53 = 2.0**-53


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1_U
    z = (z ^ (z >> np.uint64(27))) * _M2_U
    return z ^ (z >> np.uint64(31))


def rng_next(state: int) -> tuple[int, int]:
    """One splitmix64 step.  Returns ``(new_state, output)``."""
    state = (state + GAMMA) & MASK64
    return state, _mix(state)


def streams_u64(seeds, count: int) -> np.ndarray:
    """First ``count`` outputs of the splitmix64 stream of each seed.

    ``seeds`` may have any shape; the result has shape ``seeds.shape + (count,)``.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    steps = (np.arange(1, count + 1, dtype=np.uint64) * _GAMMA_U)
    return _mix_array(seeds[..., None] + steps)


def to_unit(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit outputs to doubles in [0, 1) using the top 53 bits."""
    return (bits >> np.uint64(11)).astype(np.float64) * _TWO_M53


def streams_uniform(seeds, count: int) -> np.ndarray:
    return to_unit(streams_u64(seeds, count))


class Rng:
    """Single-owner splitmix64 generator state."""

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state, out = rng_next(self.state)
        return out

    def u64(self, count: int) -> np.ndarray:
        out = streams_u64(np.uint64(self.state), count)
        self.state = (self.state + count * GAMMA) & MASK64
        return out

    def uniform(self, count: int) -> np.ndarray:
        return to_unit(self.u64(count))

    def randbelow(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` by rejection of the low residue."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) % bound
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % bound


def derive_seeds(seed: int, count: int) -> np.ndarray:
    """Child seeds: the first ``count`` outputs of ``Rng(seed)``."""
    return streams_u64(np.uint64(int(seed) & MASK64), count)


def sample_subset(seed: int, d: int, k: int) -> np.ndarray:
    """Uniform k-subset of ``range(d)`` as ascending 0-based indices.

    Partial Fisher-Yates driven by ``Rng(seed)``.  The server rebuilds the
    same subset from the seed alone.
    """
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    rng = Rng(seed)
    perm = list(range(d))
    for t in range(k):
        j = t + rng.randbelow(d - t)
        perm[t], perm[j] = perm[j], perm[t]
    return np.array(sorted(perm[:k]), dtype=np.int64)


def sample_subsets(seeds, d: int, k: int) -> np.ndarray:
    """Vectorised :func:`sample_subset` over an array of seeds.

    Returns shape ``seeds.shape + (k,)``.  Rows whose stream would hit a
    rejection (probability below ``d / 2**64`` per draw) are recomputed with
    the scalar routine so results always agree with it.
    """
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    seeds = np.asarray(seeds, dtype=np.uint64)
    flat = seeds.reshape(-1)
    s = flat.shape[0]
    draws = streams_u64(flat, k)
    bounds = np.arange(d, d - k, -1, dtype=np.uint64)
    thresholds = np.array([(1 << 64) % int(b) for b in bounds], dtype=np.uint64)
    rejected = np.any(draws < thresholds, axis=1)
    jumps = (draws % bounds).astype(np.int64) + np.arange(k)

    perm = np.tile(np.arange(d, dtype=np.int64), (s, 1))
    rows = np.arange(s)
    for t in range(k):
        j = jumps[:, t]
        head = perm[:, t].copy()
        perm[:, t] = perm[rows, j]
        perm[rows, j] = head
    out = np.sort(perm[:, :k], axis=1)
    for r in np.flatnonzero(rejected):
        out[r] = sample_subset(int(flat[r]), d, k)
    return out.reshape(seeds.shape + (k,))


# ---------------------------------------------------------------------------
# Bit sizes and bit streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BitSizes:
    """Bits per float value (r), per node center (r_bar, defaults to r) and per seed."""

    r: int = 16
    r_bar: int | None = None
    r_seed: int = 64

    def __post_init__(self):
        if self.r_bar is None:
            object.__setattr__(self, "r_bar", self.r)
        if self.r not in (16, 32, 64):
            raise ValueError(f"r must be 16, 32 or 64, got {self.r}")
        if self.r_bar not in (0, self.r):
            raise ValueError(f"r_bar must be 0 or r={self.r}, got {self.r_bar}")
        if self.r_seed != 64:
            raise ValueError("r_seed must be 64")


def index_bits(d: int) -> int:
    """Width of an index field for vectors of length d: ceil(log2 d)."""
    return (d - 1).bit_length()


_FLOAT_TYPES = {16: (np.float16, np.uint16), 32: (np.float32, np.uint32), 64: (np.float64, np.uint64)}


def float_to_bits(values, r: int) -> np.ndarray:
    """IEEE-754 bit patterns of ``values`` narrowed (round-to-nearest-even) to r bits."""
    ftype, utype = _FLOAT_TYPES[r]
    with np.errstate(over="ignore"):
        narrowed = np.asarray(values, dtype=np.float64).astype(ftype)
    return narrowed.view(utype).astype(np.uint64)


def bits_to_float(bits, r: int) -> np.ndarray:
    ftype, utype = _FLOAT_TYPES[r]
    return np.asarray(bits, dtype=np.uint64).astype(utype).view(ftype).astype(np.float64)


def narrow(values, r: int) -> np.ndarray:
    """Values as they survive an r-bit float round trip."""
    return bits_to_float(float_to_bits(values, r), r)


def _int_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width, dtype=np.uint64)
    return ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)


class BitStream:
    """Append-only bit buffer with an independent read cursor.

    Fields are stored least-significant bit first, and bytes are filled from
    their least-significant bit.
    """

    def __init__(self, bits=None):
        self._chunks: list[np.ndarray] = []
        self._bits = np.zeros(0, dtype=np.uint8) if bits is None else np.asarray(bits, dtype=np.uint8)
        self.cursor = 0

    @property
    def bit_length(self) -> int:
        return len(self._bits) + sum(len(c) for c in self._chunks)

    def _flush(self) -> np.ndarray:
        if self._chunks:
            self._bits = np.concatenate([self._bits, *self._chunks])
            self._chunks = []
        return self._bits

    def write(self, value: int, width: int) -> None:
        if width == 0:
            return
        if not 0 <= value < (1 << width):
            raise ValueError(f"value {value} does not fit in {width} bits")
        self._chunks.append(np.array([(value >> i) & 1 for i in range(width)], dtype=np.uint8))

    def write_array(self, values, width: int) -> None:
        values = np.asarray(values, dtype=np.uint64).reshape(-1)
        if width == 0 or values.size == 0:
            return
        if width < 64 and np.any(values >> np.uint64(width)):
            raise ValueError(f"values do not fit in {width} bits")
        self._chunks.append(_int_bits(values, width).reshape(-1))

    def write_bits(self, bits) -> None:
        self._chunks.append(np.asarray(bits, dtype=np.uint8).reshape(-1))

    @property
    def remaining(self) -> int:
        return self.bit_length - self.cursor

    def read_bits(self, count: int) -> np.ndarray:
        bits = self._flush()
        if self.cursor + count > len(bits):
            raise EOFError(f"stream truncated: need {count} bits at {self.cursor}, have {len(bits)}")
        out = bits[self.cursor : self.cursor + count]
        self.cursor += count
        return out

    def read(self, width: int) -> int:
        chunk = self.read_bits(width)
        return sum(int(b) << i for i, b in enumerate(chunk))

    def read_array(self, count: int, width: int) -> np.ndarray:
        if width == 0:
            return np.zeros(count, dtype=np.uint64)
        chunk = self.read_bits(count * width).reshape(count, width).astype(np.uint64)
        return (chunk << np.arange(width, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)

    def to_bytes(self) -> bytes:
        return np.packbits(self._flush(), bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, bit_length: int) -> "BitStream":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
        if len(bits) < bit_length:
            raise EOFError("byte string shorter than declared bit length")
        return cls(bits[:bit_length].copy())

    def __eq__(self, other):
        if not isinstance(other, BitStream):
            return NotImplemented
        return np.array_equal(self._flush(), other._flush())


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """n node vectors of dimension d, one per row."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"dataset must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("dataset contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for row in self.values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        if len({len(r) for r in rows}) > 1:
            raise ValueError(f"{path}: rows have differing lengths")
        return cls(np.array(rows))


DISTRIBUTIONS = ("gaussian", "laplace", "chi_squared")


def gen_synthetic(dist: str, n: int, d: int, seed: int) -> Dataset:
    """i.i.d. N(0,1), Laplace(0,1) or chi-squared(2) entries from ``Rng(seed)``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    m = n * d
    rng = Rng(seed)
    if dist == "gaussian":
        pairs = (m + 1) // 2
        u1 = 1.0 - rng.uniform(pairs)  # (0, 1]
        u2 = rng.uniform(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([radius * np.cos(2 * math.pi * u2), radius * np.sin(2 * math.pi * u2)])
        vals = z[:m]
    elif dist == "laplace":
        u = rng.uniform(m) + (0.5 * _TWO_M53 - 0.5)  # open interval (-1/2, 1/2)
        vals = -np.sign(u) * np.log1p(-2.0 * np.abs(u))
    elif dist == "chi_squared":
        vals = -2.0 * np.log(1.0 - rng.uniform(m))
    else:
        raise ValueError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")
    return Dataset(vals.reshape(n, d))


def as_matrix(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def load_dataset(path: str | Path) -> Dataset:
    return Dataset.from_csv(path)
