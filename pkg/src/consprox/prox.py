"""Proximal operators and constraint-set projections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_DEGENERATE_TOL = 1e-12


class DegenerateFilterError(ValueError):
    """Raised when a projection target has (numerically) no energy on the support."""

    def __init__(self, indices):
        self.indices = tuple(int(i) for i in np.atleast_1d(indices))
        super().__init__(
            f"zero-energy block(s) at index {self.indices}: projection onto the "
            "unit sphere is undefined")


def soft_threshold(x, gamma) -> np.ndarray:
    """Elementwise shrinkage: prox of ``gamma * |.|_1``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma < 0):
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def block_l2_shrink(r, tau: float) -> np.ndarray:
    """Block shrinkage ``max(0, 1 - tau/|r|_2) r``: prox of ``tau * |.|_2``."""
    if tau < 0:
        raise ValueError("shrinkage level must be non-negative")
    r = np.asarray(r, dtype=np.float64)
    nrm = float(np.linalg.norm(r))
    if nrm <= tau:
        return np.zeros_like(r)
    return (1.0 - tau / nrm) * r


@dataclass(frozen=True)
class ConstraintSetPN:
    """Filters restricted to a fixed support and normalized to unit energy.

    ``mask`` is a boolean array over the frame; the feasible set is
    ``{d : d = mask * d, |d|_2 = 1}``.
    """

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim not in (1, 2):
            raise ValueError("support mask must cover a 1-D or 2-D frame")
        if not mask.any():
            raise ValueError("support mask is empty")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def corner(cls, support_shape, frame_shape) -> "ConstraintSetPN":
        """Support anchored at the origin corner of the frame."""
        support_shape = tuple(int(n) for n in support_shape)
        frame_shape = tuple(int(n) for n in frame_shape)
        if len(support_shape) != len(frame_shape):
            raise ValueError("support and frame rank differ")
        if any(s > n for s, n in zip(support_shape, frame_shape)):
            raise ValueError(f"support {support_shape} exceeds frame {frame_shape}")
        mask = np.zeros(frame_shape, dtype=bool)
        mask[tuple(slice(0, s) for s in support_shape)] = True
        return cls(mask)

    def contains(self, d, tol: float = 1e-10) -> bool:
        d = np.asarray(d)
        off = np.linalg.norm(np.where(self.mask, 0.0, d))
        return off <= tol and abs(np.linalg.norm(d) - 1.0) <= tol


def project_cpn(z, cset: ConstraintSetPN) -> np.ndarray:
    """Project each trailing frame onto the support-and-normalize set.

    Zeroes entries outside the support, then rescales to unit Euclidean
    norm. Blocks whose masked energy is at or below 1e-12 have no nearest
    feasible point and raise :class:`DegenerateFilterError`.
    """
    z = np.asarray(z, dtype=np.float64)
    d = cset.mask.ndim
    if z.ndim < d or z.shape[-d:] != cset.mask.shape:
        raise ValueError(f"input frame {z.shape[-d:]} does not match mask "
                         f"{cset.mask.shape}")
    masked = np.where(cset.mask, z, 0.0)
    axes = tuple(range(-d, 0))
    norms = np.sqrt(np.sum(masked * masked, axis=axes))
    bad = np.nonzero(np.atleast_1d(norms) <= _DEGENERATE_TOL)[0]
    if bad.size:
        raise DegenerateFilterError(bad)
    return masked / np.asarray(norms)[(...,) + (None,) * d]


@dataclass(frozen=True)
class ConsensusSet:
    """Block vectors whose R replicas are all equal."""

    r_count: int

    def __post_init__(self):
        if self.r_count < 1:
            raise ValueError("need at least one replica")

    def contains(self, blocks, tol: float = 1e-10) -> bool:
        blocks = np.asarray(blocks)
        if blocks.shape[0] != self.r_count:
            raise ValueError("replica count mismatch")
        mean = blocks.mean(axis=0)
        return float(np.max(np.abs(blocks - mean), initial=0.0)) <= tol


def project_consensus(blocks) -> np.ndarray:
    """Replace every replica along axis 0 with the replica mean."""
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim < 1 or blocks.shape[0] < 1:
        raise ValueError("expected a leading replica axis")
    mean = blocks.mean(axis=0)
    return np.broadcast_to(mean, blocks.shape).copy()
