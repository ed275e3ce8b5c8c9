"""Deterministic random streams keyed by integer tuples."""
import numpy as np


def make_rng(*keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``keys``.

    Distinct key tuples give independent streams, so results do not depend
    on the order in which cells are executed.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def derive_seed(*keys: int) -> int:
    """A 64-bit seed derived from ``keys``."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)
    return int(state[0])
