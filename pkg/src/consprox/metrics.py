"""Reconstruction metrics and noise corruption for the experiment harness."""

from __future__ import annotations

import numpy as np


def psnr(reference, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; infinite for an exact match."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError("shape mismatch")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def sparsity_measure(maps, frame_size: int) -> float:
    """Nonzero coefficients as a percentage of the frame size.

    Counts across all filters, so values above 100 are possible for dense
    maps.
    """
    if frame_size <= 0:
        raise ValueError("frame size must be positive")
    return 100.0 * int(np.count_nonzero(maps)) / frame_size


def awgn_corrupt(signal, sigma: float, seed: int) -> np.ndarray:
    """Additive white Gaussian noise at the given deviation, seeded."""
    if sigma < 0:
        raise ValueError("noise level must be non-negative")
    signal = np.asarray(signal, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return signal + sigma * rng.standard_normal(signal.shape)
