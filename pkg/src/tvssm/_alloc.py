"""Allocator tuning for large-array workloads.

Training steps allocate tens of megabytes of temporaries; with glibc's
default thresholds every such block is mmap'd and returned to the kernel
on free, so each step pays the full page-fault cost again. Raising the
mmap and trim thresholds keeps the arena warm between steps. No-op on
platforms without glibc's mallopt.
"""

from __future__ import annotations

import ctypes

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator():
    global _done
    if _done:
        return
    _done = True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
    except (OSError, AttributeError):
        pass
