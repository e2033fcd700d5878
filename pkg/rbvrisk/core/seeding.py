"""Named random substreams derived from one root seed."""

import hashlib

import numpy as np


def derive_seed(root_seed: int, name: str) -> int:
    """
    Derive a reproducible 32-bit seed for a named random stream.

    Args:
        root_seed: Run-level seed
        name: Stream name (``smote``, ``folds``, ``synth``, ...)

    Returns:
        Seed in [0, 2**32)
    """
    digest = hashlib.sha256(f"{int(root_seed)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def make_rng(seed: int) -> np.random.Generator:
    """Return the generator used for every random draw in the package."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))
