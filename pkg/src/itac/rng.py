"""Deterministic random-number streams.

Every random draw in the toolkit flows from one root seed. Child streams
are derived by hashing string labels into `numpy.random.SeedSequence`
entropy words, so the stream used by, say, the Gibbs sampler does not
depend on how many draws another component consumed first. The same
(root, labels) pair yields bit-identical streams on every platform
numpy supports, because PCG64 and SeedSequence are platform-stable.

Scheme: ``derive(root, "gibbs", "chain", 3)`` hashes each label with
SHA-256, folds the digest into eight 32-bit words, and appends the words
to the root entropy in order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str | int) -> list[int]:
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]


def seed_sequence(root: int, *labels: str | int) -> np.random.SeedSequence:
    entropy = [root & 0xFFFFFFFF, (root >> 32) & 0xFFFFFFFF]
    for label in labels:
        entropy.extend(_label_words(label))
    return np.random.SeedSequence(entropy)


def derive(root: int, *labels: str | int) -> np.random.Generator:
    """Child generator for ``labels`` under ``root``. Deterministic."""
    return np.random.Generator(np.random.PCG64(seed_sequence(root, *labels)))
