"""Coefficient-map solvers for convolutional sparse coding.

Given a fixed filter bank, these minimize

    0.5 sum_k |sum_m d_m * x_{k,m} - s_k|^2 + lam sum_{k,m} |x_{k,m}|_1

over the maps. The quadratic subproblems diagonalize per frequency bin,
where the normal operator is rank-one plus a multiple of the identity, so
each bin solves in closed form. Signals are independent: per-signal
penalty parameters adapt separately and results for one signal do not
depend on which others share the batch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fourier import (FreqBlock, conv_apply_bins, dictionary_spectrum,
                      sherman_morrison_bins, signal_spectrum)
from .parallel import chunked_apply
from .prox import soft_threshold
from .signals import CoefficientMaps, Dictionary, SignalSet
from .steps import power_step_bound, LinOp
from .trace import ConvergenceTrace, DivergenceError

GUARD_FACTOR = 1e3


def default_rho(lam: float) -> float:
    """Default penalty start value, an affine rule of the sparsity weight."""
    return 100.0 * lam + 1.0


@dataclass(frozen=True)
class CscProblem:
    dictionary: Dictionary
    signals: SignalSet
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("sparsity weight must be non-negative")
        if self.dictionary.frame_shape != self.signals.frame_shape:
            raise ValueError(
                f"dictionary frame {self.dictionary.frame_shape} does not "
                f"match signal frame {self.signals.frame_shape}")


def sherman_morrison_solve(dhat: FreqBlock, rho, rhs: FreqBlock) -> FreqBlock:
    """Solve ``(d_n d_n^H + rho I) x_n = b_n`` independently per bin."""
    if dhat.frame_shape != rhs.frame_shape:
        raise ValueError("frame mismatch between operator and right-hand side")
    if dhat.m_count != rhs.m_count:
        raise ValueError("block count mismatch between operator and right-hand side")
    return FreqBlock(sherman_morrison_bins(dhat.bins, rho, rhs.bins),
                     rhs.frame_shape)


def _flat_axes(arr_ndim: int) -> tuple[int, ...]:
    # per-signal reductions: everything but the leading K axis
    return tuple(range(1, arr_ndim))


def _freq_objective(dbins: np.ndarray, shat: np.ndarray, y: np.ndarray,
                    lam: float, n_bins: int,
                    frame_shape: tuple[int, ...]) -> tuple[float, float, float]:
    yhat = FreqBlock.from_spatial(y, frame_shape).bins
    resid = conv_apply_bins(dbins, yhat) - shat
    fid = 0.5 * float(np.sum(np.abs(resid) ** 2)) / n_bins
    l1 = lam * float(np.abs(y).sum())
    return fid + l1, fid, l1


def _guard(obj: float, obj0: float, k: int) -> None:
    if not np.isfinite(obj):
        raise DivergenceError(f"non-finite objective at iteration {k}")
    if obj0 > 0 and obj > GUARD_FACTOR * obj0:
        raise DivergenceError(
            f"objective {obj} at iteration {k} exceeds {GUARD_FACTOR} x "
            f"initial value {obj0}")


@dataclass
class CscAdmmState:
    """Warm-start state carried across calls (one entry per signal)."""

    y: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    iter_count: int = 0

    @classmethod
    def fresh(cls, k: int, m: int, frame_shape: tuple[int, ...],
              rho0: float) -> "CscAdmmState":
        shape = (k, m) + tuple(frame_shape)
        return cls(np.zeros(shape), np.zeros(shape), np.full(k, float(rho0)))


def csc_admm_solve(problem: CscProblem, *, iters: int = 100,
                   rho0: float | None = None, relax: float = 1.8,
                   adapt_every: int = 10, trace_every: int = 1,
                   workers: int = 1,
                   state: CscAdmmState | None = None
                   ) -> tuple[CoefficientMaps, ConvergenceTrace]:
    """ADMM on the coefficient maps, split between the quadratic fit and
    the elementwise shrinkage.

    Per iteration: a per-bin rank-one solve gives the fit block, the
    over-relaxed combination plus the scaled dual is soft-thresholded at
    ``lam / rho`` to give the sparse block, and the dual accumulates the
    gap. Residual balancing runs per signal every ``adapt_every``
    iterations. ``trace_every=0`` disables tracing. Returns the sparse
    block, which carries exact zeros.
    """
    if not 0.0 < relax <= 2.0:
        raise ValueError("relaxation weight must be in (0, 2]")
    if iters < 1:
        raise ValueError("need at least one iteration")
    d, s, lam = problem.dictionary, problem.signals, problem.lam
    frame = d.frame_shape
    n = int(np.prod(frame))
    kk, m = s.k_count, d.m_count
    if rho0 is None:
        rho0 = default_rho(lam)
    if state is None:
        state = CscAdmmState.fresh(kk, m, frame, rho0)
    if state.y.shape != (kk, m) + frame:
        raise ValueError("warm-start state shape mismatch")
    dbins = dictionary_spectrum(d).bins
    cbins = np.conj(dbins)
    shat = signal_spectrum(s.data, frame)
    dhs = cbins * shat[..., None]
    y, u, rho = state.y, state.u, state.rho
    bshape = (kk,) + (1,) * (1 + len(frame))
    trace = ConvergenceTrace()
    obj0 = None
    if trace_every:
        obj0, fid0, rg0 = _freq_objective(dbins, shat, y, lam, n, frame)
        trace.append(state.iter_count, obj0, fid0, rg0, rho=float(rho.mean()))
    start = time.perf_counter()
    for k in range(1, iters + 1):
        v = y - u

        def _fit_block(sl: slice) -> np.ndarray:
            # independent per signal, so chunking cannot change the result
            vhat = FreqBlock.from_spatial(v[sl], frame).bins
            rhs = dhs[sl] + rho[sl, None, None] * vhat
            xhat = sherman_morrison_bins(cbins, rho[sl], rhs)
            return FreqBlock(xhat, frame).to_spatial()

        x = chunked_apply(_fit_block, kk, workers)
        xr = relax * x + (1.0 - relax) * y if relax != 1.0 else x
        y_old = y
        y = soft_threshold(xr + u, (lam / rho).reshape(bshape))
        u = u + xr - y
        if adapt_every and (state.iter_count + k) % adapt_every == 0:
            ax = _flat_axes(y.ndim)
            rp = np.sqrt(((x - y) ** 2).sum(axis=ax))
            rd = rho * np.sqrt(((y - y_old) ** 2).sum(axis=ax))
            up = rp > 10.0 * rd
            down = rd > 10.0 * rp
            rho = np.where(up, rho * 2.0, np.where(down, rho / 2.0, rho))
            scale = np.where(up, 0.5, np.where(down, 2.0, 1.0))
            u = u * scale.reshape(bshape)
        if trace_every and (k % trace_every == 0 or k == iters):
            obj, fid, rg = _freq_objective(dbins, shat, y, lam, n, frame)
            _guard(obj, obj0, k)
            trace.append(state.iter_count + k, obj, fid, rg,
                         rho=float(rho.mean()),
                         time_ms=1e3 * (time.perf_counter() - start))
    state.y, state.u, state.rho = y, u, rho
    state.iter_count += iters
    return CoefficientMaps(y.copy()), trace


@dataclass
class CscFistaState:
    """Warm-start state for the accelerated variants."""

    x: np.ndarray
    z: np.ndarray
    t: float = 1.0
    alpha_prev: np.ndarray | None = None
    fixed_alpha: float | None = None
    iter_count: int = 0

    @classmethod
    def fresh(cls, k: int, m: int, frame_shape: tuple[int, ...]) -> "CscFistaState":
        shape = (k, m) + tuple(frame_shape)
        return cls(np.zeros(shape), np.zeros(shape))


def _support_cauchy_steps(dbins: np.ndarray, g: np.ndarray,
                          mask: np.ndarray, n: int,
                          frame: tuple[int, ...]) -> np.ndarray:
    """Per-signal Cauchy steps for masked gradients, via the spectra."""
    v = np.where(mask, g, 0.0)
    ax = _flat_axes(g.ndim)
    num = (v * v).sum(axis=ax)
    empty = num == 0.0
    if np.any(empty):
        # no support yet for these signals: use the unmasked gradient
        v = np.where(empty.reshape((-1,) + (1,) * (g.ndim - 1)), g, v)
        num = (v * v).sum(axis=ax)
    vhat = FreqBlock.from_spatial(v, frame).bins
    mapped = conv_apply_bins(dbins, vhat)
    den = (np.abs(mapped) ** 2).sum(axis=-1) / n
    if np.any(num == 0.0) or np.any(den <= 0.0):
        raise DivergenceError("gradient vanished; step rule undefined")
    return num / den


def csc_fista_solve(problem: CscProblem, *, iters: int = 100,
                    variant: str = "fista3k", c: float = 0.2,
                    alpha: float | None = None, trace_every: int = 1,
                    state: CscFistaState | None = None
                    ) -> tuple[CoefficientMaps, ConvergenceTrace]:
    """Accelerated proximal-gradient on the coefficient maps.

    ``variant="fista"`` uses a fixed step (``alpha`` if given, otherwise a
    spectral bound from a short power iteration). ``variant="fista3k"``
    rescales a support-restricted Cauchy step by ``c`` each iteration and
    never lets the per-signal step sequence decrease; before any support
    exists it falls back to the c-scaled plain Cauchy step. Gradients are
    evaluated at the extrapolated point; the inertial sequence is the
    classic square-root recursion. Returns the post-shrinkage maps.
    """
    if variant not in ("fista", "fista3k"):
        raise ValueError(f"unknown variant {variant!r}")
    if iters < 1:
        raise ValueError("need at least one iteration")
    if c <= 0:
        raise ValueError("scale factor must be positive")
    d, s, lam = problem.dictionary, problem.signals, problem.lam
    frame = d.frame_shape
    n = int(np.prod(frame))
    kk, m = s.k_count, d.m_count
    if state is None:
        state = CscFistaState.fresh(kk, m, frame)
    if state.x.shape != (kk, m) + frame:
        raise ValueError("warm-start state shape mismatch")
    dbins = dictionary_spectrum(d).bins
    cbins = np.conj(dbins)
    shat = signal_spectrum(s.data, frame)
    x, z, t_seq = state.x, state.z, state.t
    bshape = (kk,) + (1,) * (1 + len(frame))
    if variant == "fista":
        if alpha is None:
            if state.fixed_alpha is None:
                op = LinOp(
                    apply=lambda v: conv_apply_bins(dbins, FreqBlock.from_spatial(
                        v, frame).bins) / np.sqrt(n),
                    adjoint=lambda r: FreqBlock(
                        cbins * r[..., None], frame).to_spatial() * np.sqrt(n),
                )
                state.fixed_alpha = 0.95 * power_step_bound(
                    [op], np.zeros((m,) + frame), np.random.default_rng(0))
            alpha = state.fixed_alpha
        if alpha <= 0:
            raise ValueError("step must be positive")
    alpha_prev = state.alpha_prev
    trace = ConvergenceTrace()
    obj0 = None
    if trace_every:
        obj0, fid0, rg0 = _freq_objective(dbins, shat, x, lam, n, frame)
        trace.append(state.iter_count, obj0, fid0, rg0)
    start = time.perf_counter()
    for k in range(1, iters + 1):
        zhat = FreqBlock.from_spatial(z, frame).bins
        resid = conv_apply_bins(dbins, zhat) - shat
        g = FreqBlock(cbins * resid[..., None], frame).to_spatial()
        if variant == "fista":
            steps = np.full(kk, float(alpha))
        else:
            mask = np.abs(x) > 0
            steps = c * _support_cauchy_steps(dbins, g, mask, n, frame)
            if alpha_prev is not None:
                steps = np.maximum(steps, alpha_prev)
            alpha_prev = steps
        x_new = soft_threshold(z - steps.reshape(bshape) * g,
                               (steps * lam).reshape(bshape))
        if not np.isfinite(x_new).all():
            # catches runaway steps even when tracing is disabled
            raise DivergenceError(f"non-finite iterate at iteration {k}")
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t_seq * t_seq)) / 2.0
        z = x_new + ((t_seq - 1.0) / t_new) * (x_new - x)
        x, t_seq = x_new, t_new
        if trace_every and (k % trace_every == 0 or k == iters):
            obj, fid, rg = _freq_objective(dbins, shat, x, lam, n, frame)
            _guard(obj, obj0, k)
            trace.append(state.iter_count + k, obj, fid, rg,
                         step=float(steps.mean()),
                         time_ms=1e3 * (time.perf_counter() - start))
    state.x, state.z, state.t = x, z, t_seq
    state.alpha_prev = alpha_prev
    state.iter_count += iters
    return CoefficientMaps(x.copy()), trace


def cbpdn_solve(dictionary: Dictionary, signal: np.ndarray, lam: float = 0.1,
                iters: int = 200, **admm_kwargs
                ) -> tuple[np.ndarray, float]:
    """Sparse-code one signal against a fixed filter bank.

    Runs the ADMM solver with its defaults and returns the maps
    ``(M, *frame)`` and the final objective value.
    """
    signal = np.asarray(signal, dtype=np.float64)
    problem = CscProblem(dictionary, SignalSet(signal[None]), lam)
    maps, trace = csc_admm_solve(problem, iters=iters, **admm_kwargs)
    return maps.maps[0], trace.final_objective
