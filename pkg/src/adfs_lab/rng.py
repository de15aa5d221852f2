"""Deterministic random-number plumbing.

All randomness in the library flows through counter-based Philox generators
keyed by explicit integer/string tuples, so that any (config, seed) pair maps
to a reproducible stream and distinct consumers (block draws, per-node sample
picks, data generation) own disjoint substreams.
"""

import hashlib

import numpy as np

__all__ = ["stable_key", "generator", "BlockStream"]


def stable_key(token) -> int:
    """Map a string/int token to a stable 64-bit integer (no hash salting)."""
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(token).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def generator(*tokens) -> np.random.Generator:
    """Philox generator keyed by a tuple of tokens."""
    seq = np.random.SeedSequence([stable_key(t) for t in tokens])
    return np.random.Generator(np.random.Philox(seq))


class BlockStream:
    """Pair of substreams used to draw sampling blocks.

    `kind` decides communication vs computation; `pick` selects one virtual
    edge per node.  Keeping them disjoint lets two solver implementations
    replay exactly the same block sequence from the same seed.
    """

    def __init__(self, *tokens):
        seq = np.random.SeedSequence([stable_key(t) for t in tokens])
        kind_seq, pick_seq = seq.spawn(2)
        self.kind_rng = np.random.Generator(np.random.Philox(kind_seq))
        self.pick_rng = np.random.Generator(np.random.Philox(pick_seq))
