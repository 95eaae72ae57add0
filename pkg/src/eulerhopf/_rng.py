"""Counter-based random numbers shared by the walk kernels.

Every uniform is a pure function of ``(stream, pair, step, slot)``::

    key = mix64(stream ^ mix64(pair))
    u64 = mix64(key ^ (step * 64 + slot))
    u   = ((u64 >> 11) + 0.5) * 2**-53

where ``mix64`` is the SplitMix64 output function.  ``pair`` is the walk index
(or ``walk // 2`` with antithetic pairing).  Because nothing is carried
between walks, results do not depend on how walks are batched or scheduled.
The compiled kernel implements the identical recipe.
"""
import hashlib
import struct

import numpy as np

ALGORITHM = "splitmix64-ctr/box-muller"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
SLOTS = 64
_TWO53 = 2.0 ** -53


def mix64(z):
    """SplitMix64 finaliser on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + GOLDEN
        z = (z ^ (z >> _S30)) * _C1
        z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


def walk_keys(stream, pairs):
    """Per-walk keys for an array of pair indices."""
    return mix64(np.uint64(stream) ^ mix64(np.asarray(pairs, dtype=np.uint64)))


def uniforms(keys, step, slot):
    """Uniform (0, 1) doubles for the given keys at one (step, slot) counter."""
    ctr = np.uint64(int(step) * SLOTS + int(slot))
    bits = mix64(keys ^ ctr)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO53


def gaussians(keys, step, n):
    """``len(keys) x n`` standard normals by Box-Muller from slots 0..n-1."""
    out = np.empty((len(keys), n))
    for j in range(0, n, 2):
        u1 = uniforms(keys, step, j)
        u2 = uniforms(keys, step, j + 1)
        r = np.sqrt(-2.0 * np.log(u1))
        t = 2.0 * np.pi * u2
        out[:, j] = r * np.cos(t)
        if j + 1 < n:
            out[:, j + 1] = r * np.sin(t)
    return out


def derive_stream(seed, tag, *arrays):
    """Stable 64-bit stream id from a seed, a text tag and float data.

    Used so that each evaluation point gets its own independent stream while
    staying a pure function of its inputs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<q", int(seed)))
    h.update(tag.encode())
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return int.from_bytes(h.digest(), "little")
