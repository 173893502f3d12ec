import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, index: int) -> np.random.Generator:
    """Philox generator for draw ``index`` under ``seed``.

    The draw index occupies the top counter word, so streams for different
    indices never overlap and a draw can be replayed without generating the
    ones before it.
    """
    counter = np.array([0, 0, 0, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64, counter=counter))
