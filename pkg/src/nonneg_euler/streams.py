"""Counter-based random streams.

Every uniform is a pure function of ``(seed, stream_id, counter)``: the
SplitMix64 output function applied to a per-stream key advanced by the
golden-ratio increment.  Paths are keyed by their index, so any path can be
regenerated on its own and the draws never depend on how paths are split
between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, stream_ids) -> np.ndarray:
    """Per-stream 64-bit keys for a root ``seed``."""
    ids = np.asarray(stream_ids, dtype=np.uint64)
    root = np.uint64(int(seed) & _MASK64)
    with np.errstate(over="ignore"):
        return _mix(_mix(root + _GOLDEN) ^ _mix(ids * _STREAM_SALT + _GOLDEN))


def uniforms_from_keys(keys: np.ndarray, counters) -> np.ndarray:
    """Uniforms in the open interval (0, 1); ``keys`` and ``counters`` broadcast."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix(keys + (c + np.uint64(1)) * _GOLDEN)
    # 53 high bits, shifted by half an ulp so 0 and 1 are never produced
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def counter_uniforms(seed: int, stream_ids, counters) -> np.ndarray:
    return uniforms_from_keys(stream_keys(seed, stream_ids), counters)


@dataclass(frozen=True)
class SeededStream:
    """A reproducible sub-stream of a root seed.

    Identical ``(seed, stream_id)`` pairs always yield identical sequences.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not isinstance(
            self.stream_id, (int, np.integer)
        ):
            raise TypeError("seed and stream_id must be integers")
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    @property
    def key(self) -> np.uint64:
        return stream_keys(self.seed, self.stream_id)[()]

    def uniforms(self, count: int, offset: int = 0) -> np.ndarray:
        """``count`` uniforms starting at counter ``offset``."""
        counters = np.arange(offset, offset + count, dtype=np.uint64)
        return uniforms_from_keys(self.key, counters)

    def substream(self, stream_id: int) -> "SeededStream":
        return SeededStream(self.seed, stream_id)
