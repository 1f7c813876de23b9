"""Randomized encoders, the averaging decoder and random rotations.

Each encoder exists in two forms that share the same arithmetic kernels:

* per-node functions (:func:`encode_variable`, :func:`encode_fixed`, ...)
  returning an :class:`EncodedVector` ready for the wire, and
* :class:`Encoder` objects whose ``sample`` method draws many independent
  rounds at once as a dense ``(trials, n, d)`` array for Monte Carlo work.

Both consume the same randomness: node ``i`` of a round with seed ``s`` uses
the stream ``Rng(derive_seeds(s, n)[i])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Rng, as_matrix, sample_subset, sample_subsets, streams_u64, streams_uniform


@dataclass(frozen=True)
class EncodedVector:
    """Node output Y_i stored as its center plus the entries that differ from it.

    ``seed``/``k`` are set by seed-reconstructible encoders so the seeded
    sparse wire format can rebuild the sampled index set.
    """

    node_id: int
    d: int
    center: float
    indices: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    k: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if idx.shape != vals.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D and of equal length")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.d or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly ascending within [0, d)")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_dense(cls, dense, center: float, node_id: int = 0, seed=None, k=None) -> "EncodedVector":
        dense = np.asarray(dense, dtype=np.float64)
        idx = np.flatnonzero(dense != center)
        return cls(node_id, dense.shape[0], float(center), idx, dense[idx], seed, k)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    @property
    def support_size(self) -> int:
        return int(self.indices.size)

    def dense(self) -> np.ndarray:
        out = np.full(self.d, self.center)
        out[self.indices] = self.values
        return out


# ---------------------------------------------------------------------------
# Kernels (broadcast over leading trial/node axes)
# ---------------------------------------------------------------------------


def variable_dense(X, probs, centers, u) -> np.ndarray:
    """Variable-support encoding given uniforms ``u``; ``centers`` broadcast against X."""
    with np.errstate(divide="ignore", invalid="ignore"):
        kept = X / probs - (1.0 - probs) / probs * centers
    return np.where(u < probs, kept, centers)


def fixed_dense(X, mask, k: int, centers) -> np.ndarray:
    d = X.shape[-1]
    kept = (d / k) * X - ((d - k) / k) * centers
    return np.where(mask, kept, centers)


def binary_dense(X, u) -> np.ndarray:
    lo = X.min(axis=-1, keepdims=True)
    hi = X.max(axis=-1, keepdims=True)
    spread = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(spread > 0, (X - lo) / spread, 0.0)
    return np.where(u < p, hi, lo)


def ternary_dense(X, p_lo, p_hi, lo, hi, u) -> np.ndarray:
    rest = (X - p_lo * lo - p_hi * hi) / (1.0 - p_lo - p_hi)
    return np.where(u < p_lo, lo, np.where(u < p_lo + p_hi, hi, rest))


def _check_probs(x, probs, center) -> None:
    if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
        raise ValueError("probabilities must lie in [0, 1]")
    bad = (probs == 0) & (x != center)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise ValueError(f"p=0 at coordinate {j} where x != center; encoder would be biased")


# ---------------------------------------------------------------------------
# Per-node encoders
# ---------------------------------------------------------------------------


def encode_variable(x, probs, center: float, rng: Rng, node_id: int = 0, seed: int | None = None) -> EncodedVector:
    """Keep coordinate j with probability p_j (rescaled about ``center``), else emit ``center``."""
    x = np.asarray(x, dtype=np.float64)
    probs = np.broadcast_to(np.asarray(probs, dtype=np.float64), x.shape)
    _check_probs(x, probs, center)
    dense = variable_dense(x, probs, center, rng.uniform(x.shape[0]))
    return EncodedVector.from_dense(dense, center, node_id, seed=seed)


def uniform_support(seed: int, d: int, p: float) -> np.ndarray:
    """Index set drawn by :func:`encode_variable` with uniform ``p`` from ``Rng(seed)``."""
    return np.flatnonzero(Rng(seed).uniform(d) < p)


def encode_fixed(x, k: int, center: float, seed: int, node_id: int = 0) -> EncodedVector:
    """Keep exactly k coordinates, chosen by ``sample_subset(seed, d, k)``."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    subset = sample_subset(seed, d, k)
    mask = np.zeros(d, dtype=bool)
    mask[subset] = True
    dense = fixed_dense(x, mask, k, center)
    return EncodedVector.from_dense(dense, center, node_id, seed=seed, k=k)


def binary_params(X) -> tuple[np.ndarray, np.ndarray]:
    """(probs, centers) under which the variable encoder equals binary quantization.

    Constant rows get p = 1 (every deviation is zero, so nothing is random).
    """
    X = as_matrix(X)
    lo = X.min(axis=1, keepdims=True)
    spread = X.max(axis=1, keepdims=True) - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        probs = np.where(spread > 0, (X - lo) / spread, 1.0)
    return probs, lo[:, 0]


def encode_binary_quant(x, rng: Rng, node_id: int = 0) -> EncodedVector:
    """Stochastic rounding of every coordinate to the row minimum or maximum."""
    x = np.asarray(x, dtype=np.float64)
    u = rng.uniform(x.shape[0])
    return EncodedVector.from_dense(binary_dense(x, u), float(x.min()), node_id)


@dataclass(frozen=True)
class TernaryParams:
    """Per-entry probabilities of the two fixed levels and per-node level values."""

    p_lo: np.ndarray
    p_hi: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        p_lo = np.asarray(self.p_lo, dtype=np.float64)
        p_hi = np.asarray(self.p_hi, dtype=np.float64)
        if np.any(p_lo < 0) or np.any(p_hi < 0):
            raise ValueError("ternary probabilities must be non-negative")
        if np.any(p_lo + p_hi >= 1):
            raise ValueError("ternary probabilities must satisfy p_lo + p_hi < 1")
        object.__setattr__(self, "p_lo", p_lo)
        object.__setattr__(self, "p_hi", p_hi)
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))

    @classmethod
    def uniform(cls, X, p_lo: float, p_hi: float, lo=None, hi=None) -> "TernaryParams":
        """Constant probabilities; levels default to each row's min and max."""
        X = as_matrix(X)
        return cls(
            np.full(X.shape, p_lo),
            np.full(X.shape, p_hi),
            X.min(axis=1) if lo is None else np.broadcast_to(lo, X.shape[:1]),
            X.max(axis=1) if hi is None else np.broadcast_to(hi, X.shape[:1]),
        )


def encode_ternary(x, params: TernaryParams, node: int, rng: Rng) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    p_lo = np.broadcast_to(params.p_lo, (params.lo.shape[0], x.shape[0]))[node]
    p_hi = np.broadcast_to(params.p_hi, (params.lo.shape[0], x.shape[0]))[node]
    if np.any(p_lo + p_hi >= 1):
        raise ValueError("ternary probabilities must satisfy p_lo + p_hi < 1")
    return ternary_dense(x, p_lo, p_hi, params.lo[node], params.hi[node], rng.uniform(x.shape[0]))


def decode_average(encoded: list[EncodedVector]) -> np.ndarray:
    """Coordinate-wise mean of the dense node vectors, summed in node-id order."""
    if not encoded:
        raise ValueError("nothing to decode")
    d = encoded[0].d
    if any(e.d != d for e in encoded):
        raise ValueError("encoded vectors disagree on dimension")
    ordered = sorted(encoded, key=lambda e: e.node_id)
    return np.stack([e.dense() for e in ordered]).sum(axis=0) / len(ordered)


# ---------------------------------------------------------------------------
# Random rotation
# ---------------------------------------------------------------------------


def _next_pow2(d: int) -> int:
    return 1 << (d - 1).bit_length()


def fwht(a) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along the last axis (length 2**m)."""
    a = np.array(a, dtype=np.float64)
    m = a.shape[-1]
    if m & (m - 1):
        raise ValueError("length must be a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < m:
        a = a.reshape(lead + (m // (2 * h), 2, h))
        top, bottom = a[..., 0, :], a[..., 1, :]
        a = np.stack([top + bottom, top - bottom], axis=-2)
        h *= 2
    return a.reshape(lead + (m,))


def rotation_signs(seed: int, m: int) -> np.ndarray:
    bits = Rng(seed).u64(m) & np.uint64(1)
    return np.where(bits == 1, -1.0, 1.0)


def rotate(x, seed: int) -> np.ndarray:
    """H D x / sqrt(m) after zero-padding the last axis to a power of two m."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    m = _next_pow2(d)
    if m != d:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, m - d)]
        x = np.pad(x, pad)
    return fwht(rotation_signs(seed, m) * x) / np.sqrt(m)


def unrotate(y, seed: int, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`rotate`; truncates back to ``d`` coordinates."""
    y = np.asarray(y, dtype=np.float64)
    m = y.shape[-1]
    x = rotation_signs(seed, m) * fwht(y) / np.sqrt(m)
    return x if d is None else x[..., :d]


# ---------------------------------------------------------------------------
# Encoder configurations
# ---------------------------------------------------------------------------


def node_seeds(trial_seeds, n: int) -> np.ndarray:
    """Per-node seeds for each round: shape ``trial_seeds.shape + (n,)``."""
    return streams_u64(trial_seeds, n)


class Encoder:
    """An encoder applied independently at every node of a round."""

    name = "encoder"
    seeded = False

    def encode_node(self, x, i: int, seed: int) -> EncodedVector:
        raise NotImplementedError

    def sample(self, X, trial_seeds) -> np.ndarray:
        """Dense encodings, shape ``(trials, n, d)``, matching ``encode_node``."""
        X = as_matrix(X)
        seeds = node_seeds(trial_seeds, X.shape[0])
        out = np.empty((seeds.shape[0],) + X.shape)
        for t in range(seeds.shape[0]):
            for i in range(X.shape[0]):
                out[t, i] = self.encode_node(X[i], i, int(seeds[t, i])).dense()
        return out

    def postprocess(self, average) -> np.ndarray:
        """Server-side map applied after averaging (identity unless rotated)."""
        return average


class IdentityEncoder(Encoder):
    name = "identity"

    def encode_node(self, x, i, seed):
        return EncodedVector.from_dense(x, 0.0, i)

    def sample(self, X, trial_seeds):
        X = as_matrix(X)
        return np.broadcast_to(X, (len(np.atleast_1d(trial_seeds)),) + X.shape).copy()


class VariableEncoder(Encoder):
    """Variable-size support encoder with per-entry probabilities and per-node centers.

    With ``seeded=True`` (uniform p only) the encoded vectors carry their seed
    so the seeded sparse wire format can send values without indices.
    """

    name = "variable"

    def __init__(self, probs, centers, seeded: bool = False):
        self.probs = np.array(probs, dtype=np.float64)
        self.centers = np.array(centers, dtype=np.float64).reshape(-1)
        if self.probs.ndim != 2 or self.probs.shape[0] != self.centers.shape[0]:
            raise ValueError("probs must be (n, d) with one center per row")
        if np.any((self.probs < 0) | (self.probs > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        self.seeded = seeded
        if seeded and not np.all(self.probs == self.probs.flat[0]):
            raise ValueError("seeded variable encoder needs a uniform probability")

    @property
    def uniform_p(self) -> float | None:
        p = float(self.probs.flat[0])
        return p if np.all(self.probs == p) else None

    @classmethod
    def uniform(cls, X, p: float, centers=None, seeded: bool = False) -> "VariableEncoder":
        X = as_matrix(X)
        if centers is None:
            centers = X.mean(axis=1)
        return cls(np.full(X.shape, float(p)), centers, seeded=seeded)

    def check(self, X) -> None:
        X = as_matrix(X)
        _check_probs(X, self.probs, self.centers[:, None])

    def encode_node(self, x, i, seed):
        return encode_variable(x, self.probs[i], self.centers[i], Rng(seed), i, seed if self.seeded else None)

    def sample(self, X, trial_seeds):
        X = as_matrix(X)
        u = streams_uniform(node_seeds(trial_seeds, X.shape[0]), X.shape[1])
        return variable_dense(X, self.probs, self.centers[:, None], u)


class FixedEncoder(Encoder):
    """Fixed-size support encoder keeping exactly k coordinates per node."""

    name = "fixed"
    seeded = True

    def __init__(self, k: int, centers):
        self.k = int(k)
        self.centers = np.array(centers, dtype=np.float64).reshape(-1)

    @classmethod
    def row_mean(cls, X, k: int) -> "FixedEncoder":
        return cls(k, as_matrix(X).mean(axis=1))

    def encode_node(self, x, i, seed):
        return encode_fixed(x, self.k, self.centers[i], seed, i)

    def sample(self, X, trial_seeds, chunk: int = 8192):
        X = as_matrix(X)
        n, d = X.shape
        seeds = node_seeds(trial_seeds, n).reshape(-1)
        mask = np.zeros((seeds.shape[0], d), dtype=bool)
        for start in range(0, seeds.shape[0], chunk):
            sub = sample_subsets(seeds[start : start + chunk], d, self.k)
            np.put_along_axis(mask[start : start + chunk], sub, True, axis=1)
        mask = mask.reshape(-1, n, d)
        return fixed_dense(X, mask, self.k, self.centers[:, None])


class BinaryEncoder(Encoder):
    """Two-level stochastic quantization between each row's min and max."""

    name = "binary"

    def encode_node(self, x, i, seed):
        return encode_binary_quant(x, Rng(seed), i)

    def sample(self, X, trial_seeds):
        X = as_matrix(X)
        u = streams_uniform(node_seeds(trial_seeds, X.shape[0]), X.shape[1])
        return binary_dense(X, u)


class TernaryEncoder(Encoder):
    name = "ternary"

    def __init__(self, params: TernaryParams):
        self.params = params

    def _probs(self, shape):
        return np.broadcast_to(self.params.p_lo, shape), np.broadcast_to(self.params.p_hi, shape)

    def encode_node(self, x, i, seed):
        dense = encode_ternary(x, self.params, i, Rng(seed))
        return EncodedVector.from_dense(dense, float(self.params.lo[i]), i)

    def sample(self, X, trial_seeds):
        X = as_matrix(X)
        p_lo, p_hi = self._probs(X.shape)
        u = streams_uniform(node_seeds(trial_seeds, X.shape[0]), X.shape[1])
        return ternary_dense(X, p_lo, p_hi, self.params.lo[:, None], self.params.hi[:, None], u)


class RotatedEncoder(Encoder):
    """Rotate every node vector with a shared seed, then apply ``inner``.

    ``inner`` is parameterised for the rotated (zero-padded) data; build it
    from :meth:`rotate_data`.  The server unrotates the averaged estimate.
    """

    name = "rotated"

    def __init__(self, inner: Encoder, seed: int, d: int):
        self.inner = inner
        self.rotation_seed = int(seed)
        self.d = int(d)
        self.seeded = inner.seeded

    def rotate_data(self, X) -> np.ndarray:
        return rotate(as_matrix(X), self.rotation_seed)

    def encode_node(self, x, i, seed):
        return self.inner.encode_node(rotate(x, self.rotation_seed), i, seed)

    def sample(self, X, trial_seeds):
        return self.inner.sample(self.rotate_data(X), trial_seeds)

    def postprocess(self, average):
        return unrotate(average, self.rotation_seed, self.d)
