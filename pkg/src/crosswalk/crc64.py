"""CRC-64/ECMA-182: polynomial 0x42F0E1EBA9EA3693, MSB-first, init 0, no final xor."""
from __future__ import annotations

import numpy as np

POLY = 0x42F0E1EBA9EA3693
_MASK = (1 << 64) - 1


def _table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint64)
    for i in range(256):
        crc = i << 56
        for _ in range(8):
            crc = ((crc << 1) ^ POLY) if crc & (1 << 63) else (crc << 1)
            crc &= _MASK
        table[i] = crc
    return table


TABLE = _table()
_kernel = None


def _get_kernel():
    global _kernel
    if _kernel is None:
        import numba

        @numba.njit(cache=True, nogil=True)
        def update(crc, data, table):
            for b in data:
                idx = ((crc >> np.uint64(56)) ^ np.uint64(b)) & np.uint64(0xFF)
                crc = table[idx] ^ (crc << np.uint64(8))
            return crc

        _kernel = update
    return _kernel


def crc64(data, crc: int = 0) -> int:
    buf = np.frombuffer(memoryview(data).cast("B"), dtype=np.uint8)
    return int(_get_kernel()(np.uint64(crc), buf, TABLE))
