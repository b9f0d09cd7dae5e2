"""Grayscale image ingestion and synthetic texture generation."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .signals import SignalSet


def center_crop(a: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = a.shape
    th, tw = size
    if th > h or tw > w:
        raise ValueError(f"crop {size} larger than image {a.shape}")
    top = (h - th) // 2
    left = (w - tw) // 2
    return a[top:top + th, left:left + tw]


def load_grayscale_images(paths, crop: tuple[int, int] | None = None,
                          rescale: tuple[int, int] | None = None) -> SignalSet:
    """Load images as float arrays in [0, 1], optionally crop then resize.

    Color inputs are converted by the standard luminance weighting. All
    outputs must end up the same shape.
    """
    arrays = []
    for p in paths:
        img = Image.open(Path(p)).convert("L")
        a = np.asarray(img, dtype=np.float64) / 255.0
        if crop is not None:
            a = center_crop(a, crop)
        if rescale is not None:
            a = np.asarray(Image.fromarray((a * 255).astype(np.uint8)).resize(
                (rescale[1], rescale[0]), Image.BILINEAR),
                dtype=np.float64) / 255.0
        arrays.append(a)
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"images have mixed shapes {sorted(shapes)}; "
                         "use crop or rescale")
    return SignalSet(np.stack(arrays))


def synthetic_textures(count: int, shape: tuple[int, int], seed: int) -> SignalSet:
    """Band-limited random textures with oriented structure, in [0, 1].

    Each image mixes low-pass filtered noise with a few random gratings,
    which gives local correlations for small filters to latch onto.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fy * fy + fx * fx)
    images = []
    for _ in range(count):
        noise = rng.standard_normal(shape)
        cutoff = rng.uniform(0.05, 0.15)
        lowpass = np.fft.ifft2(np.fft.fft2(noise) * np.exp(
            -(radius / cutoff) ** 2)).real
        img = lowpass / (np.abs(lowpass).max() + 1e-12)
        yy, xx = np.mgrid[0:h, 0:w]
        for _ in range(rng.integers(2, 5)):
            theta = rng.uniform(0, np.pi)
            freq = rng.uniform(0.05, 0.3)
            phase = rng.uniform(0, 2 * np.pi)
            img = img + 0.5 * np.sin(
                2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy)
                + phase)
        img -= img.min()
        img /= img.max() + 1e-12
        images.append(img)
    return SignalSet(np.stack(images))
