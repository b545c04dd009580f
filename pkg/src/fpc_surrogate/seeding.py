import numpy as np

MASK_64 = 0xFFFFFFFFFFFFFFFF


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Creates a generator for a master seed and a path of child keys.

    The same ``(seed, *keys)`` always yields the same stream, independent of
    the order in which streams are created, so per-entry streams can be
    drawn in parallel.

    Args:
        seed: Master seed; wrapped to 64 bits.
        *keys: Child indices, e.g. an entry or iteration number.

    Returns:
        A PCG64 generator.
    """
    entropy = [seed & MASK_64, *(key & MASK_64 for key in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(seed: int, *keys: int) -> int:
    """Derives a 63-bit child seed, e.g. to report a batch in diagnostics.

    Args:
        seed: Master seed.
        *keys: Child indices.

    Returns:
        A non-negative integer seed.
    """
    return int(make_rng(seed, *keys).integers(0, 2**63 - 1))
