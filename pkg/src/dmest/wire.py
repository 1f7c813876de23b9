"""Bit-exact communication formats for encoded node vectors.

A :class:`WireMessage` payload contains only the fields counted by the cost
formulas.  The 3-bit format tag lives in the dump framing (see
``docs/wire.md``), and ``d`` plus static configuration (such as the uniform
probability of a seeded variable encoder) are known to the server out of band.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .codec import EncodedVector, uniform_support
from .core import BitSizes, BitStream, bits_to_float, float_to_bits, index_bits, sample_subset

TAG_BITS = 3


class WireError(ValueError):
    """Malformed, truncated or incompatible wire data."""


class Format(enum.IntEnum):
    NAIVE = 0
    VARYING_LENGTH = 1
    SPARSE_INDEXED = 2
    SPARSE_SEEDED = 3
    BINARY = 4

    @classmethod
    def parse(cls, name: str) -> "Format":
        key = name.strip().upper().replace("-", "_")
        aliases = {"VARYING": "VARYING_LENGTH", "INDEXED": "SPARSE_INDEXED", "SEEDED": "SPARSE_SEEDED"}
        try:
            return cls[aliases.get(key, key)]
        except KeyError:
            raise ValueError(f"unknown wire format {name!r}") from None


@dataclass(frozen=True)
class WireFormat:
    tag: Format
    sizes: BitSizes = BitSizes()
    # uniform keep-probability shared with the server when the seeded format
    # carries a variable-support encoding
    seeded_p: float | None = None


@dataclass
class WireMessage:
    tag: Format
    payload: BitStream

    @property
    def bit_length(self) -> int:
        return self.payload.bit_length

    def dump(self) -> bytes:
        framed = BitStream()
        framed.write(int(self.tag), TAG_BITS)
        self.payload.cursor = 0
        framed.write_bits(self.payload.read_bits(self.payload.bit_length))
        self.payload.cursor = 0
        return struct.pack(">I", framed.bit_length) + framed.to_bytes()

    @classmethod
    def load(cls, data: bytes) -> "WireMessage":
        if len(data) < 4:
            raise WireError("missing length prefix")
        (count,) = struct.unpack(">I", data[:4])
        if count < TAG_BITS:
            raise WireError("frame shorter than its tag")
        try:
            framed = BitStream.from_bytes(data[4:], count)
        except EOFError as exc:
            raise WireError(str(exc)) from None
        tag = framed.read(TAG_BITS)
        try:
            fmt = Format(tag)
        except ValueError:
            raise WireError(f"unknown format tag {tag}") from None
        return cls(fmt, BitStream(framed.read_bits(count - TAG_BITS).copy()))


def _bit_matrix(values: np.ndarray, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.uint64)
    return ((values[:, None] >> np.arange(width, dtype=np.uint64)) & np.uint64(1)).astype(np.uint8)


def _write_center(out: BitStream, center: float, sizes: BitSizes) -> None:
    if sizes.r_bar == 0:
        if center != 0.0:
            raise WireError("r_bar = 0 requires a data-independent center of 0")
        return
    out.write_array(float_to_bits([center], sizes.r), sizes.r)


def _read_center(src: BitStream, sizes: BitSizes) -> float:
    if sizes.r_bar == 0:
        return 0.0
    return float(bits_to_float(src.read_array(1, sizes.r), sizes.r)[0])


def seeded_indices(seed: int, d: int, fmt: WireFormat, k: int | None) -> np.ndarray:
    if fmt.seeded_p is not None:
        return uniform_support(seed, d, fmt.seeded_p)
    if k is None:
        raise WireError("seeded format needs k or a shared uniform probability")
    return sample_subset(seed, d, k)


def serialize(y: EncodedVector, fmt: WireFormat) -> WireMessage:
    sizes, r, d = fmt.sizes, fmt.sizes.r, y.d
    out = BitStream()
    tag = fmt.tag
    if tag == Format.NAIVE:
        out.write_array(float_to_bits(y.dense(), r), r)
    elif tag == Format.VARYING_LENGTH:
        _write_center(out, y.center, sizes)
        flags = np.zeros(d, dtype=np.uint8)
        flags[y.indices] = 1
        block = np.zeros((d, 1 + r), dtype=np.uint8)
        block[:, 0] = flags
        block[y.indices, 1:] = _bit_matrix(float_to_bits(y.values, r), r)
        keep = np.zeros((d, 1 + r), dtype=bool)
        keep[:, 0] = True
        keep[y.indices, 1:] = True
        out.write_bits(block[keep])
    elif tag == Format.SPARSE_INDEXED:
        _write_center(out, y.center, sizes)
        w = index_bits(d)
        pairs = np.hstack([_bit_matrix(y.indices, w), _bit_matrix(float_to_bits(y.values, r), r)])
        out.write_bits(pairs)
    elif tag == Format.SPARSE_SEEDED:
        if y.seed is None:
            raise WireError("seeded format needs an encoding that carries its seed")
        _write_center(out, y.center, sizes)
        out.write(int(y.seed), sizes.r_seed)
        idx = seeded_indices(y.seed, d, fmt, y.k)
        if not np.all(np.isin(y.indices, idx)):
            raise WireError("encoded support is not the seed's index set")
        out.write_array(float_to_bits(y.dense()[idx], r), r)
    elif tag == Format.BINARY:
        dense = y.dense()
        levels = np.unique(dense)
        if levels.size > 2:
            raise WireError(f"binary format needs at most two distinct values, got {levels.size}")
        lo, hi = levels[0], levels[-1]
        out.write_array(float_to_bits([lo, hi], r), r)
        out.write_bits((dense == hi) & (lo != hi))
    else:  # pragma: no cover
        raise WireError(f"unsupported format {tag}")
    return WireMessage(tag, out)


def deserialize(msg: WireMessage, d: int, fmt: WireFormat, node_id: int = 0) -> EncodedVector:
    if msg.tag != fmt.tag:
        raise WireError(f"message tag {msg.tag.name} does not match expected {fmt.tag.name}")
    try:
        return _deserialize(msg, d, fmt, node_id)
    except EOFError as exc:
        raise WireError(f"truncated message: {exc}") from None


def _deserialize(msg: WireMessage, d: int, fmt: WireFormat, node_id: int) -> EncodedVector:
    sizes, r = fmt.sizes, fmt.sizes.r
    src = BitStream(msg.payload.read_bits(msg.payload.bit_length))
    msg.payload.cursor = 0
    tag = fmt.tag
    seed = k = None
    if tag == Format.NAIVE:
        center = 0.0
        dense = bits_to_float(src.read_array(d, r), r)
    elif tag == Format.VARYING_LENGTH:
        center = _read_center(src, sizes)
        bits = src.read_bits(src.remaining)
        pos, idx, starts = 0, [], []
        for j in range(d):
            if pos >= len(bits):
                raise EOFError(f"flag for coordinate {j} missing")
            flag = bits[pos]
            pos += 1
            if flag:
                idx.append(j)
                starts.append(pos)
                pos += r
        if pos != len(bits):
            raise WireError("varying-length message has trailing or missing bits")
        dense = np.full(d, center)
        if idx:
            cols = np.asarray(starts)[:, None] + np.arange(r)
            words = (bits[cols].astype(np.uint64) << np.arange(r, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
            dense[idx] = bits_to_float(words, r)
    elif tag == Format.SPARSE_INDEXED:
        center = _read_center(src, sizes)
        w = index_bits(d)
        count, extra = divmod(src.remaining, w + r)
        if extra:
            raise WireError("sparse message length is not a whole number of pairs")
        pairs = src.read_bits(count * (w + r)).reshape(count, w + r).astype(np.uint64)
        idx = (pairs[:, :w] << np.arange(w, dtype=np.uint64)).sum(axis=1, dtype=np.uint64).astype(np.int64)
        vals = bits_to_float((pairs[:, w:] << np.arange(r, dtype=np.uint64)).sum(axis=1, dtype=np.uint64), r)
        if np.any(idx >= d) or np.any(np.diff(idx) <= 0):
            raise WireError("sparse indices out of range or not ascending")
        dense = np.full(d, center)
        dense[idx] = vals
    elif tag == Format.SPARSE_SEEDED:
        center = _read_center(src, sizes)
        seed = src.read(sizes.r_seed)
        count, extra = divmod(src.remaining, r)
        if extra:
            raise WireError("seeded message length is not a whole number of values")
        if fmt.seeded_p is None:
            if not 1 <= count <= d:
                raise WireError(f"seeded message carries {count} values for d={d}")
            k = count
        idx = seeded_indices(seed, d, fmt, k)
        if idx.size != count:
            raise WireError(f"seed selects {idx.size} indices but message has {count} values")
        dense = np.full(d, center)
        dense[idx] = bits_to_float(src.read_array(count, r), r)
    elif tag == Format.BINARY:
        lo, hi = bits_to_float(src.read_array(2, r), r)
        center = float(lo)
        flags = src.read_bits(d)
        dense = np.where(flags == 1, hi, lo)
    else:  # pragma: no cover
        raise WireError(f"unsupported format {tag}")
    if src.remaining:
        raise WireError(f"{src.remaining} unexpected trailing bits")
    return EncodedVector.from_dense(dense, center, node_id, seed=seed, k=k)


def expected_cost(fmt: WireFormat, n: int, d: int, probs=None, k: int | None = None) -> float:
    """Expected total payload bits over n nodes.

    ``probs`` is the (n, d) keep-probability array of a variable-support
    encoder; the varying-length and indexed formulas assume every entry
    differs from its center.  The seeded format takes ``k`` for fixed support
    or a uniform probability (``fmt.seeded_p`` or uniform ``probs``).
    """
    s = fmt.sizes
    r, r_bar = s.r, s.r_bar
    tag = fmt.tag
    if tag == Format.NAIVE:
        return float(n * d * r)
    if tag == Format.BINARY:
        return float(n * 2 * r + n * d)
    if tag == Format.SPARSE_SEEDED:
        if k is not None:
            return float(n * (r_bar + s.r_seed) + n * k * r)
        p = fmt.seeded_p
        if p is None:
            if probs is None:
                raise ValueError("seeded cost needs k or a uniform probability")
            probs = np.asarray(probs, dtype=np.float64)
            p = float(probs.flat[0])
            if not np.all(probs == p):
                raise ValueError("seeded cost needs a uniform probability")
        return float(n * (r_bar + s.r_seed) + n * d * p * r)
    if probs is None:
        raise ValueError(f"{tag.name} cost needs the probability array")
    total_p = float(np.sum(np.broadcast_to(np.asarray(probs, dtype=np.float64), (n, d))))
    if tag == Format.VARYING_LENGTH:
        return float(n * r_bar + n * d + r * total_p)
    if tag == Format.SPARSE_INDEXED:
        return float(n * r_bar + (index_bits(d) + r) * total_p)
    raise ValueError(f"unsupported format {tag}")  # pragma: no cover
