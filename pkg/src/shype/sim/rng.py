"""Per-run random streams derived from one master seed."""
import numpy as np


def derive_rng(master: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream number ``index`` of ``master``.

    Uses SeedSequence spawn keys, so stream ``i`` does not depend on how
    many other streams exist or on the order they are created in.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master),
                                                                      spawn_key=(int(index),))))
