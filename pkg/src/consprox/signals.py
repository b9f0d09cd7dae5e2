"""Containers for signals, filter banks and coefficient maps, plus file I/O.

All payloads are 64-bit floats. Frames are 1-D or 2-D. The on-disk format is
a small binary container (little-endian, row-major payload) with a
human-readable JSON sidecar written next to it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC_DICT = b"CPXDICT\x00"
_MAGIC_MAPS = b"CPXMAPS\x00"
_VERSION = 1
_DTYPE_CODE = b"<f8"


def _check_array(data, name: str, ndims: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim not in ndims:
        raise ValueError(f"{name}: expected {ndims} dimensions, got {arr.ndim}")
    if arr.size == 0:
        raise ValueError(f"{name}: empty array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SignalSet:
    """A batch of K signals sharing one frame shape.

    ``data`` has shape ``(K, *frame)`` where the frame is 1-D or 2-D.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _check_array(self.data, "signals", (2, 3)))

    @property
    def k_count(self) -> int:
        return self.data.shape[0]

    @property
    def frame_shape(self) -> tuple[int, ...]:
        return self.data.shape[1:]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.data[k]


@dataclass(frozen=True)
class Dictionary:
    """A bank of M filters with small support inside a common frame.

    ``filters`` has shape ``(M, *support)``; convolution embeds each filter
    at the origin corner of ``frame_shape`` and wraps circularly.
    """

    filters: np.ndarray
    frame_shape: tuple[int, ...]

    def __post_init__(self):
        filt = _check_array(self.filters, "filters", (2, 3))
        frame = tuple(int(n) for n in self.frame_shape)
        if len(frame) != filt.ndim - 1:
            raise ValueError("frame rank does not match filter rank")
        if any(n <= 0 for n in frame):
            raise ValueError("frame dimensions must be positive")
        if any(s > n for s, n in zip(filt.shape[1:], frame)):
            raise ValueError(
                f"filter support {filt.shape[1:]} exceeds frame {frame}")
        object.__setattr__(self, "filters", filt)
        object.__setattr__(self, "frame_shape", frame)

    @property
    def m_count(self) -> int:
        return self.filters.shape[0]

    @property
    def support_shape(self) -> tuple[int, ...]:
        return self.filters.shape[1:]

    def padded(self) -> np.ndarray:
        """Filters zero-padded to the frame, shape ``(M, *frame)``."""
        out = np.zeros((self.m_count,) + self.frame_shape)
        region = (slice(None),) + tuple(slice(0, s) for s in self.support_shape)
        out[region] = self.filters
        return out


@dataclass(frozen=True)
class CoefficientMaps:
    """Per-signal, per-filter coefficient maps, shape ``(K, M, *frame)``."""

    maps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "maps", _check_array(self.maps, "maps", (3, 4)))

    @classmethod
    def zeros(cls, k: int, m: int, frame_shape: tuple[int, ...]) -> "CoefficientMaps":
        return cls(np.zeros((k, m) + tuple(frame_shape)))

    @property
    def k_count(self) -> int:
        return self.maps.shape[0]

    @property
    def m_count(self) -> int:
        return self.maps.shape[1]

    @property
    def frame_shape(self) -> tuple[int, ...]:
        return self.maps.shape[2:]


def _write_sidecar(path: Path, meta: dict) -> None:
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")


def save_dictionary(path, d: Dictionary) -> None:
    path = Path(path)
    ndim = len(d.frame_shape)
    header = struct.pack("<8sHH3s", _MAGIC_DICT, _VERSION, ndim, _DTYPE_CODE)
    header += struct.pack("<I", d.m_count)
    header += struct.pack(f"<{ndim}I", *d.support_shape)
    header += struct.pack(f"<{ndim}I", *d.frame_shape)
    payload = np.ascontiguousarray(d.filters, dtype="<f8").tobytes()
    path.write_bytes(header + payload)
    _write_sidecar(path, {
        "kind": "dictionary",
        "version": _VERSION,
        "dtype": "<f8",
        "filters": d.m_count,
        "support_shape": list(d.support_shape),
        "frame_shape": list(d.frame_shape),
    })


def load_dictionary(path) -> Dictionary:
    raw = Path(path).read_bytes()
    magic, version, ndim, dtype = struct.unpack_from("<8sHH3s", raw)
    if magic != _MAGIC_DICT:
        raise ValueError(f"{path}: not a dictionary container")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    if dtype != _DTYPE_CODE:
        raise ValueError(f"{path}: unsupported dtype code {dtype!r}")
    if ndim not in (1, 2):
        raise ValueError(f"{path}: unsupported frame rank {ndim}")
    off = struct.calcsize("<8sHH3s")
    (m,) = struct.unpack_from("<I", raw, off)
    off += 4
    support = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    frame = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    count = m * int(np.prod(support))
    filt = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    if filt.size != count:
        raise ValueError(f"{path}: truncated payload")
    return Dictionary(filt.reshape((m,) + support).copy(), frame)


def save_maps(path, maps: CoefficientMaps) -> None:
    path = Path(path)
    ndim = len(maps.frame_shape)
    header = struct.pack("<8sHH3s", _MAGIC_MAPS, _VERSION, ndim, _DTYPE_CODE)
    header += struct.pack("<II", maps.k_count, maps.m_count)
    header += struct.pack(f"<{ndim}I", *maps.frame_shape)
    payload = np.ascontiguousarray(maps.maps, dtype="<f8").tobytes()
    path.write_bytes(header + payload)
    _write_sidecar(path, {
        "kind": "coefficient_maps",
        "version": _VERSION,
        "dtype": "<f8",
        "signals": maps.k_count,
        "filters": maps.m_count,
        "frame_shape": list(maps.frame_shape),
    })


def load_maps(path) -> CoefficientMaps:
    raw = Path(path).read_bytes()
    magic, version, ndim, dtype = struct.unpack_from("<8sHH3s", raw)
    if magic != _MAGIC_MAPS:
        raise ValueError(f"{path}: not a coefficient-map container")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    if dtype != _DTYPE_CODE:
        raise ValueError(f"{path}: unsupported dtype code {dtype!r}")
    if ndim not in (1, 2):
        raise ValueError(f"{path}: unsupported frame rank {ndim}")
    off = struct.calcsize("<8sHH3s")
    k, m = struct.unpack_from("<II", raw, off)
    off += 8
    frame = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    count = k * m * int(np.prod(frame))
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    if data.size != count:
        raise ValueError(f"{path}: truncated payload")
    return CoefficientMaps(data.reshape((k, m) + frame).copy())
