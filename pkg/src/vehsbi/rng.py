"""Deterministic random-number streams.

Every stochastic stage of the pipeline draws from its own counter-based
stream so that (master seed, stage, index) fully determines the draws,
independent of execution order or batching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stage codes occupy the top byte of the 64-bit stream id; the round index
# the next three bytes; the element index the low four bytes.
_STAGES = {
    "observation": 1,
    "pilot_theta": 2,
    "pilot_sim": 3,
    "round_theta": 4,
    "round_sim": 5,
    "train": 6,
    "init": 7,
    "posterior": 8,
    "fisher_cov": 9,
    "fisher_jac": 10,
    "abc_sim": 11,
    "noise_setup": 12,
    "generic": 13,
}

_MASK32 = (1 << 32) - 1


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream: (seed, stream_id) -> Philox key."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & (2**64 - 1), self.stream_id & (2**64 - 1)],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def substream(seed: int, stage: str, round_index: int = 0, element: int = 0) -> RngStream:
    """Derive the stream for a pipeline stage from the master seed."""
    code = _STAGES[stage]
    if not 0 <= round_index < (1 << 24):
        raise ValueError(f"round_index out of range: {round_index}")
    if not 0 <= element <= _MASK32:
        raise ValueError(f"element out of range: {element}")
    sid = (code << 56) | (round_index << 32) | element
    return RngStream(seed, sid)
