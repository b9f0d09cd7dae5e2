"""DFT plumbing and frequency-domain convolution operators.

Conventions: unnormalized forward transform, 1/N inverse (the numpy
default), circular boundary everywhere. Filters and maps move between a
spatial layout ``(..., M, *frame)`` and a per-bin layout ``(..., N, M)``
where N is the flattened frame size; the per-bin layout is what the
rank-one solves and the multiply/accumulate kernels operate on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .opcount import record_bin_mult, record_bin_solve, record_fft
from .signals import CoefficientMaps, Dictionary


def _frame_axes(ndim: int) -> tuple[int, ...]:
    return tuple(range(-ndim, 0))


def _validate_spatial(a: np.ndarray, frame_shape: tuple[int, ...]) -> None:
    d = len(frame_shape)
    if a.ndim < d:
        raise ValueError(f"input rank {a.ndim} below frame rank {d}")
    tail = a.shape[-d:]
    if any(t > n for t, n in zip(tail, frame_shape)):
        raise ValueError(f"input shape {tail} larger than frame {frame_shape}")


def dft_forward(a, frame_shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Forward DFT over the trailing frame axes, zero-padding to the frame."""
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite input to forward transform")
    if frame_shape is None:
        frame_shape = a.shape
    frame_shape = tuple(int(n) for n in frame_shape)
    _validate_spatial(a, frame_shape)
    d = len(frame_shape)
    out = np.fft.fftn(a, s=frame_shape, axes=_frame_axes(d))
    n_batch = int(np.prod(a.shape[:-d], dtype=np.int64)) if a.ndim > d else 1
    record_fft(n_batch, int(np.prod(frame_shape)))
    return out


def dft_inverse(ahat, frame_ndim: int | None = None) -> np.ndarray:
    """Inverse DFT over the trailing ``frame_ndim`` axes (all axes if None)."""
    ahat = np.asarray(ahat)
    if not np.all(np.isfinite(ahat)):
        raise ValueError("non-finite input to inverse transform")
    d = ahat.ndim if frame_ndim is None else int(frame_ndim)
    if d < 1 or d > ahat.ndim:
        raise ValueError(f"invalid frame rank {d} for input rank {ahat.ndim}")
    out = np.fft.ifftn(ahat, axes=_frame_axes(d))
    n_batch = int(np.prod(ahat.shape[:-d], dtype=np.int64)) if ahat.ndim > d else 1
    record_fft(n_batch, int(np.prod(ahat.shape[-d:])))
    return out


@dataclass(frozen=True)
class FreqBlock:
    """Spectra of a stack of filter-indexed blocks in per-bin order.

    ``bins[..., n, m]`` holds the DFT coefficient of block m at flattened
    frequency bin n (row-major over the frame).
    """

    bins: np.ndarray
    frame_shape: tuple[int, ...]

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        frame = tuple(int(n) for n in self.frame_shape)
        if bins.ndim < 2:
            raise ValueError("per-bin layout needs at least (N, M) axes")
        if bins.shape[-2] != int(np.prod(frame)):
            raise ValueError(
                f"bin count {bins.shape[-2]} does not match frame {frame}")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "frame_shape", frame)

    @property
    def n_bins(self) -> int:
        return self.bins.shape[-2]

    @property
    def m_count(self) -> int:
        return self.bins.shape[-1]

    @classmethod
    def from_spatial(cls, blocks, frame_shape: tuple[int, ...]) -> "FreqBlock":
        """Transform ``(..., M, *support)`` blocks into per-bin layout."""
        blocks = np.asarray(blocks)
        frame_shape = tuple(int(n) for n in frame_shape)
        d = len(frame_shape)
        if blocks.ndim < d + 1:
            raise ValueError("blocks need a filter axis ahead of the frame axes")
        hat = dft_forward(blocks, frame_shape)
        lead = hat.shape[:-d - 1]
        m = hat.shape[-d - 1]
        n = int(np.prod(frame_shape))
        flat = hat.reshape(lead + (m, n))
        return cls(np.ascontiguousarray(np.swapaxes(flat, -1, -2)), frame_shape)

    def to_spatial(self, real: bool = True) -> np.ndarray:
        """Inverse transform back to ``(..., M, *frame)``."""
        lead = self.bins.shape[:-2]
        flat = np.swapaxes(self.bins, -1, -2)
        hat = flat.reshape(lead + (self.m_count,) + self.frame_shape)
        out = dft_inverse(hat, len(self.frame_shape))
        return out.real if real else out


def signal_spectrum(signals, frame_shape: tuple[int, ...]) -> np.ndarray:
    """Flattened spectra ``(..., N)`` of spatial signals ``(..., *frame)``."""
    signals = np.asarray(signals)
    d = len(frame_shape)
    hat = dft_forward(signals, frame_shape)
    return hat.reshape(hat.shape[:-d] + (int(np.prod(frame_shape)),))


def spectrum_to_signal(shat, frame_shape: tuple[int, ...], real: bool = True) -> np.ndarray:
    """Inverse of :func:`signal_spectrum`."""
    shat = np.asarray(shat)
    frame_shape = tuple(int(n) for n in frame_shape)
    hat = shat.reshape(shat.shape[:-1] + frame_shape)
    out = dft_inverse(hat, len(frame_shape))
    return out.real if real else out


def conv_apply_bins(dbins: np.ndarray, xbins: np.ndarray) -> np.ndarray:
    """Per-bin sums ``sum_m d[n, m] x[n, m]``: the spectrum of the filter sum."""
    out = np.einsum("...nm,...nm->...n", dbins, xbins)
    record_bin_mult(int(np.prod(out.shape)), dbins.shape[-1])
    return out


def conv_adjoint_bins(dbins: np.ndarray, rbins: np.ndarray) -> np.ndarray:
    """Per-bin products ``conj(d[n, m]) r[n]``: correlation with each filter."""
    out = np.conj(dbins) * rbins[..., None]
    record_bin_mult(int(np.prod(rbins.shape)), dbins.shape[-1])
    return out


def sherman_morrison_bins(dbins: np.ndarray, rho, rhs: np.ndarray) -> np.ndarray:
    """Per-bin solves of ``(d d^H + rho I) x = b`` for every frequency bin.

    ``dbins`` and ``rhs`` share the ``(..., N, M)`` layout; ``rho`` is a
    positive scalar or an array broadcastable over the leading axes.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValueError("penalty parameter must be positive")
    rho_nm = rho[..., None, None] if rho.ndim else rho
    rho_n = rho[..., None] if rho.ndim else rho
    dnorm2 = np.einsum("...nm,...nm->...n", np.conj(dbins), dbins).real
    dhb = np.einsum("...nm,...nm->...n", np.conj(dbins), rhs)
    scale = dhb / (rho_n + dnorm2)
    out = (rhs - dbins * scale[..., None]) / rho_nm
    lead = rhs.shape[:-2] if rhs.ndim > 2 else (1,)
    record_bin_solve(int(np.prod(lead)) * rhs.shape[-2], rhs.shape[-1])
    return out


def dictionary_spectrum(d: Dictionary) -> FreqBlock:
    return FreqBlock.from_spatial(d.filters, d.frame_shape)


def maps_spectrum(maps: CoefficientMaps) -> FreqBlock:
    return FreqBlock.from_spatial(maps.maps, maps.frame_shape)


def conv_sum(d: Dictionary, maps: CoefficientMaps, k: int | None = None) -> np.ndarray:
    """Reconstruction ``sum_m d_m * x_{k,m}`` for one signal or the batch."""
    if maps.m_count != d.m_count:
        raise ValueError(f"map count {maps.m_count} != filter count {d.m_count}")
    if maps.frame_shape != d.frame_shape:
        raise ValueError(
            f"map frame {maps.frame_shape} != dictionary frame {d.frame_shape}")
    x = maps.maps if k is None else maps.maps[k:k + 1]
    dbins = dictionary_spectrum(d).bins
    xbins = FreqBlock.from_spatial(x, d.frame_shape).bins
    shat = conv_apply_bins(dbins, xbins)
    out = spectrum_to_signal(shat, d.frame_shape)
    return out if k is None else out[0]


def freq_gradient_csc(dhat: FreqBlock, xhat: FreqBlock, shat: np.ndarray) -> FreqBlock:
    """Spectrum of the fidelity gradient with respect to the maps.

    Computes ``conj(D) (D X - s)`` bin by bin; ``shat`` holds flattened
    signal spectra shaped like the leading axes of ``xhat`` plus ``(N,)``.
    """
    resid = conv_apply_bins(dhat.bins, xhat.bins) - shat
    return FreqBlock(conv_adjoint_bins(dhat.bins, resid), xhat.frame_shape)


def freq_gradient_dict(xhat: FreqBlock, dhat: FreqBlock, shat: np.ndarray) -> FreqBlock:
    """Per-signal spectra of the fidelity gradient with respect to the filters."""
    resid = conv_apply_bins(xhat.bins, dhat.bins) - shat
    return FreqBlock(conv_adjoint_bins(xhat.bins, resid), dhat.frame_shape)
