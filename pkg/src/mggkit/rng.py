"""Named, reproducible random substreams derived from one root seed.

Every source of randomness in the package draws from a substream keyed by
(root_seed, name, *indices), so component-level reproducibility holds no
matter how many other components consume randomness in between.
"""
import zlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def _key_words(parts) -> tuple[int, ...]:
    words = []
    for part in parts:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")) & _MASK32)
        else:
            words.append(int(part) & _MASK32)
    return tuple(words)


def substream(root_seed: int, *key) -> np.random.Generator:
    """Generator for the substream identified by ``key`` under ``root_seed``."""
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=_key_words(key))
    return np.random.Generator(np.random.PCG64(seq))


def substream_seed(root_seed: int, *key) -> int:
    """A 63-bit integer seed for the substream (for APIs that take plain seeds)."""
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=_key_words(key))
    return int(seq.generate_state(1, np.uint64)[0] >> 1)
