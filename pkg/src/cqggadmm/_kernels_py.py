"""Pure numpy versions of the codec hot loops.

Must stay bit-identical to ``_ckernels.pyx``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int, counter: int) -> int:
    h = _mix64_int(seed + GOLDEN)
    h = _mix64_int(h ^ ((stream + GOLDEN) & MASK64))
    return _mix64_int(h ^ ((counter + GOLDEN) & MASK64))


def counter_uniforms(seed: int, stream: int, counter: int, n: int) -> np.ndarray:
    """``n`` uniforms in [0, 1); draw ``i`` depends only on (seed, stream, counter, i)."""
    key = np.uint64(stream_key(seed, stream, counter))
    idx = np.arange(n, dtype=np.uint64) + np.uint64(GOLDEN)
    h = _mix64(key ^ idx)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def stochastic_round(c: np.ndarray, u: np.ndarray, levels: int) -> np.ndarray:
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, float(levels))
    lo = np.floor(c)
    q = lo + (u < (c - lo))
    return q.astype(np.uint64)


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    codes = np.asarray(codes, dtype=np.uint64)
    shifts = np.arange(bits, dtype=np.uint64)
    bit_matrix = ((codes[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bit_matrix.reshape(-1), bitorder="little").tobytes()


def unpack_codes(buf: bytes, d: int, bits: int) -> np.ndarray:
    raw = np.frombuffer(buf, dtype=np.uint8)
    flat = np.unpackbits(raw, count=d * bits, bitorder="little").astype(np.uint64)
    weights = np.uint64(1) << np.arange(bits, dtype=np.uint64)
    return (flat.reshape(d, bits) * weights).sum(axis=1, dtype=np.uint64)
