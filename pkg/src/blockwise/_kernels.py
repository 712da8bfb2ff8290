"""Compiled batch kernel for the unit task.

Kept in its own module so the import (and first-call JIT compile) stays
optional: workload falls back to the pure-Python loop when this module is
unavailable.  The byte semantics here must match run_unit_task exactly;
tests compare the two paths byte for byte.

nogil=True matters: during a measurement every pool participant spends its
chunk inside this kernel, so participants overlap instead of serializing
on the interpreter lock.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(
    numba.void(
        numba.uint8[::1], numba.uint8[::1],
        numba.int64, numba.int64, numba.int64,
        numba.uint8[::1], numba.int64, numba.int64,
    ),
    nogil=True,
    cache=True,
)
def run_chunk(read_buf, write_buf, unit_read, unit_write, per_read, step_table, begin, end):
    for iteration in range(begin, end):
        if unit_read == 0:
            continue
        read_base = iteration * unit_read
        write_base = iteration * unit_write
        write_count = 0
        integer = np.uint8(0)
        for i in range(unit_read):
            integer = read_buf[read_base + i]
            # value-dependent table walk; equals integer + per_read mod 256
            # but cannot be folded away by the compiler
            for _ in range(per_read):
                integer = step_table[integer]
            if write_count < unit_write:
                write_buf[write_base + write_count] = integer
                write_count += 1
        while write_count < unit_write:
            write_buf[write_base + write_count] = integer
            write_count += 1
