import numpy as np


def make_rng(seed, *stream):
    """Philox generator keyed by ``seed`` plus optional integer stream ids.

    Distinct ``stream`` tuples give statistically independent generators, so
    callers can derive per-iteration or per-purpose streams without sharing
    state.
    """
    ss = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(*keys):
    """Deterministic 63-bit integer seed from a tuple of integer keys."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
