"""Counter-based hashing that keys the lazy environment by vertex address.

A vertex key is obtained by chaining a splitmix64 finalizer from the root key
through the child digits, so the key of ``x_i`` only depends on the key of
``x`` and the digit ``i``.  Walkers and tree searches keep a stack of keys
along the current path and never store the environment itself.

The scalar functions are numba-compiled and the array versions are plain
numpy; both produce bit-identical results.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ROOT_SALT = np.uint64(0x5851F42D4C957F2D)
_DRAW_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def root_key(seed):
    return mix64(np.uint64(seed) ^ _ROOT_SALT)


@njit(cache=True, inline="always")
def child_key(key, digit):
    return mix64(key + GOLDEN * np.uint64(digit + 1))


@njit(cache=True, inline="always")
def to_unit(z):
    return np.float64(z >> _S11) * _INV53


@njit(cache=True, inline="always")
def draw_unit(key):
    """Uniform in [0, 1) attached to the sibling vector below ``key``."""
    return to_unit(mix64(key ^ _DRAW_SALT))


@njit(cache=True, inline="always")
def pick_atom(u, cum):
    # first index with cum[idx] > u, same as np.searchsorted(cum, u, "right")
    lo = 0
    hi = cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, inline="always")
def stream_next(state):
    """splitmix64 stream step; returns (new_state, uniform)."""
    state = state + GOLDEN
    return state, to_unit(mix64(state))


@njit(cache=True)
def stream_seed(seed, replica):
    return mix64(mix64(np.uint64(seed)) ^ (GOLDEN * np.uint64(replica + 1)))


# ---------------------------------------------------------------- numpy side

def mix64_array(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def root_key_array(seed):
    return mix64_array(np.array([seed], dtype=np.uint64) ^ _ROOT_SALT)


def child_keys_array(keys, b):
    """Keys of all children of ``keys``, lexicographic (parent-major)."""
    keys = np.asarray(keys, dtype=np.uint64)
    digits = GOLDEN * np.arange(1, b + 1, dtype=np.uint64)
    return mix64_array(keys[:, None] + digits[None, :]).reshape(-1)


def draw_unit_array(keys):
    z = mix64_array(np.asarray(keys, dtype=np.uint64) ^ _DRAW_SALT)
    return (z >> _S11).astype(np.float64) * _INV53


def address_key(seed, digits):
    key = root_key_array(seed)[0]
    for d in digits:
        key = child_keys_array(np.array([key]), int(d) + 1)[int(d)]
    return key
