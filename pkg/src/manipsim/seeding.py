"""Deterministic RNG streams with domain separation.

Every random draw in the package flows through a named stream derived from
(root seed, episode index, label). Streams are independent: enabling a
consumer never shifts the draws any other consumer sees, which is what makes
"same spawn seed, different randomizers" produce identical spawns.

Labels are hashed with sha256 (never the salted builtin hash) so the mapping
is stable across processes and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np

# One stream per consumer. Adding labels is backward compatible; renaming
# one silently reshuffles its draws, so never rename.
STREAM_LABELS = (
    "spawn",
    "light",
    "camera",
    "texture",
    "color",
    "joints",
    "postprocess",
    "agent",
    "policy",
    "dataset",
)


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")


def stream_seed_sequence(seed: int, episode: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=(int(seed) & (2**63 - 1), int(episode), _label_key(label)))


def stream(seed: int, episode: int, label: str) -> np.random.Generator:
    """Independent PCG64 generator for one (seed, episode, label) triple."""
    return np.random.Generator(np.random.PCG64(stream_seed_sequence(seed, episode, label)))


def frame_stream(seed: int, episode: int, label: str, *extra: int) -> np.random.Generator:
    """Generator keyed additionally by frame coordinates (step, camera, ...).

    Used where draw counts would otherwise depend on how often a consumer
    asks for a frame: the same (seed, episode, label, extras) always yields
    the same draws no matter what happened before.
    """
    entropy = (int(seed) & (2**63 - 1), int(episode), _label_key(label),
               *(int(v) for v in extra))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=entropy)))


class RandomStreams:
    """Lazily-created named generators for one episode."""

    def __init__(self, seed: int, episode: int):
        self.seed = int(seed)
        self.episode = int(episode)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, label: str) -> np.random.Generator:
        g = self._streams.get(label)
        if g is None:
            g = stream(self.seed, self.episode, label)
            self._streams[label] = g
        return g
