"""Counter-based random streams.

Every draw in a chain comes from a Philox stream addressed by
``(seed, purpose, step)``. Streams are independent of the order in which
they are requested, so parallel work reproduces sequential output.
"""

import numpy as np

PURPOSES = {"propose": 1, "accept": 2, "estimate": 3, "init": 4, "test": 5}

_MASK64 = (1 << 64) - 1


class Streams:
    def __init__(self, seed):
        seed = int(seed)
        if seed < 0 or seed > _MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = seed

    def generator(self, step, purpose, j=0):
        """Generator for substream ``(step, purpose, j)``.

        The Philox key is ``(seed, purpose)``; ``step`` and ``j`` occupy the
        high words of the 256-bit counter so the low word is free for the
        draws themselves.
        """
        key = np.array([self.seed, PURPOSES[purpose]], dtype=np.uint64)
        counter = np.array([0, 0, int(j) & _MASK64, int(step) & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))
