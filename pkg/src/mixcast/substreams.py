"""Counter-based random substreams for reproducible parallel sampling.

Every ensemble trace gets its own keyed stream derived from
``(seed, instance_id, trace index)``, so results never depend on scheduling
or on how many traces are drawn together.  Streams are produced by a
vectorized Philox4x64-10 block cipher (the same permutation as
``numpy.random.Philox``, validated against it bit-for-bit in the test suite)
driven in pure counter mode: block ``b`` of a trace is the encryption of
counter ``(b, 0, 0, 0)`` under the trace's 128-bit key.

Key derivation uses the splitmix64 finalizer over a hash of the instance id,
the user seed, and the trace index.  Uniform doubles take the conventional
53-bit path ``(word >> 11) * 2**-53``.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "mix64",
    "instance_key",
    "derive_seed",
    "philox_blocks",
    "trace_raw",
    "uniform_from_raw",
]

_U64 = np.uint64
_MASK32 = _U64(0xFFFFFFFF)
_SHIFT32 = _U64(32)

# Philox4x64 round multipliers and Weyl key increments.
_PHILOX_M0 = _U64(0xD2E7470EE14C6C93)
_PHILOX_M1 = _U64(0xCA5A826395121157)
_WEYL_0 = _U64(0x9E3779B97F4A7C15)
_WEYL_1 = _U64(0xBB67AE8584CAA73B)
_PHILOX_ROUNDS = 10

# Domain-separation constant for the per-trace key lane.
_TRACE_LANE = 0xD1B54A32D192ED03


def mix64(x):
    """splitmix64 finalizer: a bijective avalanche mix of 64-bit words.

    Accepts a Python int or a uint64 array; returns the same kind.
    """
    scalar = not isinstance(x, np.ndarray)
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64)
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        z = z ^ (z >> _U64(31))
    return int(z) if scalar else z


def instance_key(instance_id: str) -> int:
    """64-bit digest of an instance identifier (first 8 bytes of blake2b)."""
    digest = hashlib.blake2b(instance_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *parts) -> int:
    """Derive a 64-bit sub-seed from ``seed`` and a tuple of labels.

    Used wherever one user-facing seed must fan out into independent
    purpose-tagged streams (truth draws, component seeds, ...).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product of a scalar and an array, as (hi, lo)."""
    lo = a * b
    a_hi, a_lo = a >> _SHIFT32, a & _MASK32
    b_hi, b_lo = b >> _SHIFT32, b & _MASK32
    t = a_lo * b_lo
    m1 = a_hi * b_lo + (t >> _SHIFT32)
    m2 = a_lo * b_hi + (m1 & _MASK32)
    hi = a_hi * b_hi + (m1 >> _SHIFT32) + (m2 >> _SHIFT32)
    return hi, lo


def philox_blocks(key_lo: np.ndarray, key_hi: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Philox4x64-10 blocks for per-row keys over shared counter values.

    Parameters
    ----------
    key_lo, key_hi : uint64 arrays of shape (S,)
        The two 64-bit halves of each row's key.
    counters : uint64 array of shape (B,)
        First counter word of each block; the other three words are zero.

    Returns
    -------
    uint64 array of shape (S, B, 4).
    """
    s, b = key_lo.shape[0], counters.shape[0]
    with np.errstate(over="ignore"):
        c0 = np.broadcast_to(counters, (s, b)).copy()
        c1 = np.zeros((s, b), dtype=np.uint64)
        c2 = np.zeros((s, b), dtype=np.uint64)
        c3 = np.zeros((s, b), dtype=np.uint64)
        k0 = key_lo[:, None].copy()
        k1 = key_hi[:, None].copy()
        for _ in range(_PHILOX_ROUNDS):
            hi0, lo0 = _mulhilo(_PHILOX_M0, c0)
            hi1, lo1 = _mulhilo(_PHILOX_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _WEYL_0
            k1 = k1 + _WEYL_1
    return np.stack([c0, c1, c2, c3], axis=2)


def trace_raw(seed: int, instance_id: str, n_traces: int, n_words: int,
              first_trace: int = 0) -> np.ndarray:
    """Raw 64-bit words for ``n_traces`` per-trace substreams.

    Trace ``first_trace + s`` receives words ``0..n_words-1`` of its own
    stream, so requesting fewer or more words per trace always yields a
    prefix/extension of the same sequence.

    Returns
    -------
    uint64 array of shape (n_traces, n_words).
    """
    ih = instance_key(instance_id)
    with np.errstate(over="ignore"):
        key_lo = np.full(n_traces, mix64((seed & 0xFFFFFFFFFFFFFFFF) ^ ih), dtype=np.uint64)
        traces = np.arange(first_trace, first_trace + n_traces, dtype=np.uint64)
        lane = _U64(mix64(ih ^ _TRACE_LANE))
        key_hi = mix64(traces ^ lane)
    n_blocks = -(-n_words // 4)
    counters = np.arange(n_blocks, dtype=np.uint64)
    blocks = philox_blocks(key_lo, key_hi, counters)
    return blocks.reshape(n_traces, n_blocks * 4)[:, :n_words]


def uniform_from_raw(raw: np.ndarray, *, open_interval: bool = False) -> np.ndarray:
    """Map raw 64-bit words to doubles in ``[0, 1)`` (or ``(0, 1)``).

    The half-open form is the standard 53-bit conversion.  The open form
    uses 52 bits centered half a bin up, so it can feed inverse-CDF
    transforms: its smallest value is 2**-53 and its largest is 1 - 2**-53,
    never 0 or 1.  (A 53-bit centered form would round its top value to
    exactly 1.0.)
    """
    if open_interval:
        return ((raw >> _U64(12)).astype(np.float64) + 0.5) * (2.0**-52)
    return (raw >> _U64(11)).astype(np.float64) * (2.0**-53)
