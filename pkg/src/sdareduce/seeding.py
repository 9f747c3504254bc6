import numpy as np


def derive_seed(master_seed: int, *path: int) -> int:
    """Deterministic 32-bit child seed for ``(master_seed, *path)``."""
    return int(np.random.SeedSequence([int(master_seed), *map(int, path)]).generate_state(1)[0])
