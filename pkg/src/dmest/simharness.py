"""In-process star-topology rounds: nodes encode and send bytes, the server decodes.

The server sees only the packets plus static configuration (d, wire format,
encoder postprocessing).  Each packet is a 16-bit node id followed by a
:meth:`WireMessage.dump` frame.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import Encoder, RotatedEncoder, decode_average
from .core import as_matrix, derive_seeds
from .wire import TAG_BITS, WireFormat, WireMessage, deserialize, serialize

NODE_ID_BITS = 16
OVERHEAD_BITS = NODE_ID_BITS + TAG_BITS


@dataclass
class RoundConfig:
    encoder: Encoder
    wire: WireFormat
    trials: int = 1
    seed: int = 0


@dataclass
class RoundResult:
    estimate: np.ndarray
    bits_total: int
    overhead_bits: int
    sq_error: float


@dataclass
class RunReport:
    mean_sq_error: float
    mean_bits_total: float
    min_bits: int
    max_bits: int
    trials: int
    rows: list[tuple[int, int, int, float]] = field(default_factory=list, repr=False)

    CSV_HEADER = ("trial", "bits_total", "overhead_bits", "sq_error")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_HEADER)
            for trial, bits, overhead, err in self.rows:
                w.writerow([trial, bits, overhead, repr(err)])


def wire_dim(encoder: Encoder, d: int) -> int:
    """Length of the vectors that actually travel (rotations pad to a power of two)."""
    if isinstance(encoder, RotatedEncoder):
        return 1 << (d - 1).bit_length()
    return d


def node_packets(X, cfg: RoundConfig, trial_seed: int) -> tuple[list[bytes], int]:
    """Encode and serialize every node.  Returns the packets and total payload bits."""
    X = as_matrix(X)
    seeds = derive_seeds(trial_seed, X.shape[0])
    packets, bits = [], 0
    for i, x in enumerate(X):
        msg = serialize(cfg.encoder.encode_node(x, i, int(seeds[i])), cfg.wire)
        bits += msg.bit_length
        packets.append(struct.pack(">H", i) + msg.dump())
    return packets, bits


def server_decode(packets: list[bytes], n: int, d: int, cfg: RoundConfig) -> np.ndarray:
    """Rebuild the mean estimate from node packets alone."""
    received = {}
    for pkt in packets:
        (node_id,) = struct.unpack(">H", pkt[:2])
        if node_id in received:
            raise ValueError(f"duplicate message from node {node_id}")
        received[node_id] = deserialize(WireMessage.load(pkt[2:]), wire_dim(cfg.encoder, d), cfg.wire, node_id)
    missing = sorted(set(range(n)) - set(received))
    if missing:
        raise ValueError(f"missing messages from nodes {missing}")
    if len(received) != n:
        raise ValueError("messages from unknown nodes")
    return cfg.encoder.postprocess(decode_average(list(received.values())))


def run_round(X, cfg: RoundConfig, trial_seed: int) -> RoundResult:
    X = as_matrix(X)
    n, d = X.shape
    packets, bits = node_packets(X, cfg, trial_seed)
    estimate = server_decode(packets, n, d, cfg)
    err = float(np.sum((estimate - X.mean(axis=0)) ** 2))
    return RoundResult(estimate, bits, n * OVERHEAD_BITS, err)


def run_trials(X, cfg: RoundConfig) -> RunReport:
    if cfg.trials < 1:
        raise ValueError("trials must be at least 1")
    seeds = derive_seeds(cfg.seed, cfg.trials)
    rows = []
    for t, s in enumerate(seeds):
        res = run_round(X, cfg, int(s))
        rows.append((t, res.bits_total, res.overhead_bits, res.sq_error))
    bits = np.array([r[1] for r in rows])
    errs = np.array([r[3] for r in rows])
    return RunReport(float(errs.mean()), float(bits.mean()), int(bits.min()), int(bits.max()), cfg.trials, rows)
