"""
Counter-based keyed hashing for retention draws.

Every cell owns a 64-bit key obtained by hashing its parent's key with the
letter leading to it, starting from a key derived from the seed. The draw of a
cell is a function of its key alone, so draws do not depend on traversal
order, and two probability tables sampled with the same seed see the same
draws (monotone coupling).

The mixer is the SplitMix64 finaliser; all arithmetic wraps modulo 2**64.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_DRAW_SALT = np.uint64(0xD1B54A32D192ED03)
_SEED_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))
_UNIT = 1.0 / float(1 << 53)

MAX_SEED = (1 << 64) - 1


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over='ignore'):
        z = (z ^ (z >> _S30)) * _MUL1
        z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def root_key(seed):
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f'seed must be an unsigned 64-bit integer, got {seed}')
    return mix64(np.array([seed], dtype=np.uint64) ^ _SEED_SALT)


def descend(keys, letter):
    """Keys of the children reached through `letter` (a d-tuple of digits)."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over='ignore'):
        for digit in letter:
            keys = mix64(keys ^ (np.uint64(int(digit) + 1) * GOLDEN))
    return keys


def descend_all(keys, letters):
    """
    Child keys for every (parent, letter) pair.

    `letters` is an (L, d) integer array; the result has shape (len(keys), L).
    """
    out = np.asarray(keys, dtype=np.uint64)[:, None]
    letters = np.asarray(letters, dtype=np.uint64)
    with np.errstate(over='ignore'):
        for axis in range(letters.shape[1]):
            out = mix64(out ^ ((letters[:, axis] + np.uint64(1)) * GOLDEN)[None, :])
    return out


def unit_draws(keys):
    """Uniform values in [0, 1) from the top 53 bits of a salted remix of each key."""
    bits = mix64(np.asarray(keys, dtype=np.uint64) ^ _DRAW_SALT) >> _S11
    return bits.astype(np.float64) * _UNIT


def derive_seed(seed, *path):
    """A child seed for replicate/attempt `path` of a run seeded with `seed`."""
    key = root_key(seed)
    for step in path:
        key = descend(key, (step,))
    return int(mix64(key)[0])
