"""Lightweight operation counters for comparing solver families.

Counters track three primitive classes that dominate the frequency-domain
solvers: full-frame DFTs, per-bin multiply/accumulate passes, and per-bin
rank-one linear solves. Scalar-op unit estimates make per-iteration cost
comparisons mechanical.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

_lock = threading.Lock()
_active: list["OpCounter"] = []


@dataclass
class OpCounter:
    fft_transforms: int = 0
    fft_units: float = 0.0
    bin_mults: int = 0
    bin_mult_units: float = 0.0
    bin_solves: int = 0
    bin_solve_units: float = 0.0

    @property
    def total_units(self) -> float:
        return self.fft_units + self.bin_mult_units + self.bin_solve_units

    def snapshot(self) -> "OpCounter":
        return OpCounter(self.fft_transforms, self.fft_units, self.bin_mults,
                         self.bin_mult_units, self.bin_solves,
                         self.bin_solve_units)

    def minus(self, other: "OpCounter") -> "OpCounter":
        return OpCounter(
            self.fft_transforms - other.fft_transforms,
            self.fft_units - other.fft_units,
            self.bin_mults - other.bin_mults,
            self.bin_mult_units - other.bin_mult_units,
            self.bin_solves - other.bin_solves,
            self.bin_solve_units - other.bin_solve_units,
        )


@contextmanager
def count_ops():
    """Collect operation counts for everything executed in the block."""
    counter = OpCounter()
    with _lock:
        _active.append(counter)
    try:
        yield counter
    finally:
        with _lock:
            _active.remove(counter)


def record_fft(n_transforms: int, frame_size: int) -> None:
    if not _active:
        return
    units = n_transforms * frame_size * max(1.0, math.log2(frame_size))
    with _lock:
        for c in _active:
            c.fft_transforms += n_transforms
            c.fft_units += units


def record_bin_mult(n_bins: int, vec_len: int) -> None:
    if not _active:
        return
    with _lock:
        for c in _active:
            c.bin_mults += n_bins
            c.bin_mult_units += n_bins * vec_len


def record_bin_solve(n_bins: int, vec_len: int) -> None:
    # One rank-one solve costs about four length-M passes per bin.
    if not _active:
        return
    with _lock:
        for c in _active:
            c.bin_solves += n_bins
            c.bin_solve_units += 4.0 * n_bins * vec_len
