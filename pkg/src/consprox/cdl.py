"""Convolutional dictionary learning by alternating minimization.

The filter-bank subproblem (maps fixed) is a consensus program: each
training signal contributes a quadratic term and the shared filter bank is
tied through a support-and-normalize constraint. Three updates are
provided: consensus ADMM (per-signal rank-one solves), a stacked
accelerated proximal-gradient update, and the consensus accelerated
proximal-gradient update that needs no linear solves at all.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .csc import (CscAdmmState, CscFistaState, CscProblem, cbpdn_solve,
                  csc_admm_solve, csc_fista_solve, default_rho)
from .fourier import (FreqBlock, conv_apply_bins, maps_spectrum,
                      sherman_morrison_bins, signal_spectrum)
from .parallel import chunked_apply
from .prox import ConstraintSetPN, DegenerateFilterError, project_cpn
from .signals import CoefficientMaps, Dictionary, SignalSet
from .steps import (InertialConfig, StepHistory, StepUndefinedError, bb_step,
                    inertial_next, inertial_start)
from .trace import ConvergenceTrace, DivergenceError

log = logging.getLogger(__name__)

GUARD_FACTOR = 1e3


@dataclass
class CdlConfig:
    """Knobs of the alternating trainer; defaults follow the reference
    image experiments (36 filters of size 8x8, sparsity 0.1)."""

    m_count: int = 36
    filter_shape: tuple[int, ...] = (8, 8)
    lam: float = 0.1
    outer_iters: int = 1000
    coef_solver: str = "fista3k"
    dict_solver: str = "apg_cns"
    coef_iters: int = 1
    dict_iters: int = 1
    rho0: float | None = None
    sigma0: float | None = None
    relax: float = 1.8
    fista_c: float = 0.2
    dict_step_rule: str = "bb3"
    inertial: InertialConfig = field(default_factory=InertialConfig)
    seed: int = 0
    workers: int = 1
    trace_every: int = 1

    def __post_init__(self):
        self.filter_shape = tuple(int(n) for n in self.filter_shape)
        if self.m_count < 1:
            raise ValueError("need at least one filter")
        if len(self.filter_shape) not in (1, 2):
            raise ValueError("filters must be 1-D or 2-D")
        if self.lam < 0:
            raise ValueError("sparsity weight must be non-negative")
        if self.coef_solver not in ("admm", "fista", "fista3k"):
            raise ValueError(f"unknown coefficient solver {self.coef_solver!r}")
        if self.dict_solver not in ("admm_cns", "apg", "apg_cns"):
            raise ValueError(f"unknown dictionary solver {self.dict_solver!r}")
        if self.dict_step_rule not in ("bb3", "cauchy"):
            raise ValueError(f"unknown dictionary step rule {self.dict_step_rule!r}")
        if min(self.outer_iters, self.coef_iters, self.dict_iters) < 1:
            raise ValueError("iteration counts must be positive")


def init_dictionary(m_count: int, filter_shape: tuple[int, ...],
                    frame_shape: tuple[int, ...],
                    rng: np.random.Generator) -> Dictionary:
    """Random unit-energy filters."""
    filters = rng.standard_normal((m_count,) + tuple(filter_shape))
    norms = np.sqrt((filters ** 2).sum(axis=tuple(range(1, filters.ndim)),
                                       keepdims=True))
    return Dictionary(filters / norms, frame_shape)


def cdl_objective(d_padded: np.ndarray, maps: CoefficientMaps, s: SignalSet,
                  lam: float) -> tuple[float, float, float]:
    """Training objective at a padded filter bank ``(M, *frame)``."""
    frame = s.frame_shape
    n = int(np.prod(frame))
    dbins = FreqBlock.from_spatial(d_padded, frame).bins
    xbins = maps_spectrum(maps).bins
    shat = signal_spectrum(s.data, frame)
    resid = conv_apply_bins(dbins, xbins) - shat
    fid = 0.5 * float(np.sum(np.abs(resid) ** 2)) / n
    l1 = lam * float(np.abs(maps.maps).sum())
    return fid + l1, fid, l1


def _safe_project(z: np.ndarray, cset: ConstraintSetPN,
                  rng: np.random.Generator) -> np.ndarray:
    """Projection with random restarts for zero-energy filters."""
    try:
        return project_cpn(z, cset)
    except DegenerateFilterError as err:
        z = np.array(z, copy=True)
        for idx in err.indices:
            z[idx] = np.where(cset.mask, rng.standard_normal(cset.mask.shape),
                              0.0)
        log.warning("replaced degenerate filter(s) %s with random restarts",
                    err.indices)
        return project_cpn(z, cset)


def _freq_norm2(a: np.ndarray) -> float:
    return float(np.vdot(a.ravel(), a.ravel()).real)


@dataclass
class DictAdmmState:
    """Consensus-ADMM state for the filter-bank subproblem."""

    g: np.ndarray                 # common padded bank (M, *frame)
    h: np.ndarray                 # scaled duals (K, M, *frame)
    sigma: float
    cset: ConstraintSetPN
    rng: np.random.Generator
    iter_count: int = 0

    @classmethod
    def fresh(cls, d0: Dictionary, k_count: int, sigma0: float,
              rng: np.random.Generator) -> "DictAdmmState":
        g = d0.padded()
        cset = ConstraintSetPN.corner(d0.support_shape, d0.frame_shape)
        return cls(g, np.zeros((k_count,) + g.shape), float(sigma0), cset, rng)


def dict_admm_consensus_update(maps: CoefficientMaps, s: SignalSet,
                               state: DictAdmmState, *, iters: int = 1,
                               relax: float = 1.8, adapt_every: int = 10,
                               workers: int = 1) -> np.ndarray:
    """Consensus ADMM sweeps on the filter bank with the maps held fixed.

    Each signal keeps a local copy of the bank, updated by per-bin
    rank-one solves; the shared bank is the projected replica mean and the
    duals track the gaps. Returns the updated common bank ``(M, *frame)``.
    """
    if not 0.0 < relax <= 2.0:
        raise ValueError("relaxation weight must be in (0, 2]")
    frame = s.frame_shape
    kk = s.k_count
    xbins = maps_spectrum(maps).bins
    cxbins = np.conj(xbins)
    shat = signal_spectrum(s.data, frame)
    xhs = cxbins * shat[..., None]
    g, h, sigma = state.g, state.h, state.sigma
    for it in range(1, iters + 1):
        v = g[None] - h

        def _local_block(sl: slice) -> np.ndarray:
            # independent per signal, so chunking cannot change the result
            vhat = FreqBlock.from_spatial(v[sl], frame).bins
            rhs = xhs[sl] + sigma * vhat
            dhat = sherman_morrison_bins(cxbins[sl], sigma, rhs)
            return FreqBlock(dhat, frame).to_spatial()

        d_local = chunked_apply(_local_block, kk, workers)
        dr = relax * d_local + (1.0 - relax) * g[None] if relax != 1.0 else d_local
        g_old = g
        g = _safe_project((dr + h).mean(axis=0), state.cset, state.rng)
        h = h + dr - g[None]
        if adapt_every and (state.iter_count + it) % adapt_every == 0:
            rp = float(np.linalg.norm(d_local - g[None]))
            rd = sigma * np.sqrt(kk) * float(np.linalg.norm(g - g_old))
            if rp > 10.0 * rd:
                sigma *= 2.0
                h = h / 2.0
            elif rd > 10.0 * rp:
                sigma /= 2.0
                h = h * 2.0
    state.g, state.h, state.sigma = g, h, sigma
    state.iter_count += iters
    return g


@dataclass
class DictApgState:
    """Stacked accelerated proximal-gradient state for the filter bank."""

    d: np.ndarray                 # post-projection bank (M, *frame)
    z: np.ndarray                 # extrapolated bank
    t: float
    cset: ConstraintSetPN
    rng: np.random.Generator
    inertial: InertialConfig
    k_index: int = 1

    @classmethod
    def fresh(cls, d0: Dictionary, rng: np.random.Generator,
              inertial: InertialConfig | None = None) -> "DictApgState":
        g = d0.padded()
        cset = ConstraintSetPN.corner(d0.support_shape, d0.frame_shape)
        inertial = inertial or InertialConfig()
        return cls(g, g.copy(), inertial_start(inertial), cset, rng, inertial)


def dict_apg_update(maps: CoefficientMaps, s: SignalSet,
                    state: DictApgState, *, iters: int = 1) -> np.ndarray:
    """Accelerated proximal-gradient on the stacked filter-bank objective.

    The gradient sums the per-signal terms; the step is the exact
    line-search value for the stacked quadratic, and the projection onto
    the support-and-normalize set follows every gradient step.
    """
    frame = s.frame_shape
    xbins = maps_spectrum(maps).bins
    cxbins = np.conj(xbins)
    shat = signal_spectrum(s.data, frame)
    d, z, t_seq = state.d, state.z, state.t
    for _ in range(iters):
        zhat = FreqBlock.from_spatial(z, frame).bins
        resid = conv_apply_bins(xbins, zhat) - shat
        ghat = np.einsum("knm,kn->nm", cxbins, resid)
        mapped = np.einsum("knm,nm->kn", xbins, ghat)
        den = _freq_norm2(mapped)
        num = _freq_norm2(ghat)
        if num == 0.0:
            break
        alpha = num / den if den > 0 else 1.0
        g_spatial = FreqBlock(ghat, frame).to_spatial()
        d_new = _safe_project(z - alpha * g_spatial, state.cset, state.rng)
        state.k_index += 1
        t_seq, gamma = inertial_next(state.inertial, t_seq, state.k_index)
        z = d_new + gamma * (d_new - d)
        d = d_new
    state.d, state.z, state.t = d, z, t_seq
    return d


@dataclass
class DictApgCnsState:
    """Consensus accelerated proximal-gradient state for the filter bank."""

    h: np.ndarray                 # post-projection bank (M, *frame)
    z: np.ndarray                 # extrapolated bank
    t: float
    cset: ConstraintSetPN
    rng: np.random.Generator
    inertial: InertialConfig
    step_rule: str = "bb3"
    history: StepHistory = field(default_factory=StepHistory)
    last_step: float | None = None
    k_index: int = 1

    @classmethod
    def fresh(cls, d0: Dictionary, rng: np.random.Generator,
              inertial: InertialConfig | None = None,
              step_rule: str = "bb3") -> "DictApgCnsState":
        g = d0.padded()
        cset = ConstraintSetPN.corner(d0.support_shape, d0.frame_shape)
        inertial = inertial or InertialConfig()
        return cls(g, g.copy(), inertial_start(inertial), cset, rng, inertial,
                   step_rule)


def dict_apg_consensus_update(maps: CoefficientMaps, s: SignalSet,
                              state: DictApgCnsState, *, iters: int = 1,
                              workers: int = 1) -> np.ndarray:
    """Consensus accelerated proximal-gradient on the filter bank.

    Every signal takes an unprojected gradient step from the common
    extrapolated bank; their average is projected once onto the
    support-and-normalize set, then extrapolated. Per sweep this costs two
    transform batches of the bank and per-bin multiplies only: no linear
    solves, and no per-signal transform batches.

    The replica-averaged step uses BB (norm-ratio flavor) on consecutive
    averaged gradients, seeded by the replica-averaged Cauchy value.
    """
    frame = s.frame_shape
    n = int(np.prod(frame))
    kk = s.k_count
    xbins = maps_spectrum(maps).bins
    cxbins = np.conj(xbins)
    shat = signal_spectrum(s.data, frame)
    h, z, t_seq = state.h, state.z, state.t
    for _ in range(iters):
        zhat = FreqBlock.from_spatial(z, frame).bins

        def _grad_block(sl: slice) -> np.ndarray:
            resid = conv_apply_bins(xbins[sl], zhat) - shat[sl]
            return cxbins[sl] * resid[..., None]

        grads = chunked_apply(_grad_block, kk, workers)
        gbar_hat = grads.mean(axis=0)
        alpha = _consensus_step(state, zhat, gbar_hat, xbins)
        gbar = FreqBlock(gbar_hat, frame).to_spatial()
        h_new = _safe_project(z - alpha * gbar, state.cset, state.rng)
        state.k_index += 1
        t_seq, gamma = inertial_next(state.inertial, t_seq, state.k_index)
        z = h_new + gamma * (h_new - h)
        h = h_new
    state.h, state.z, state.t = h, z, t_seq
    return h


def _consensus_step(state: DictApgCnsState, zhat: np.ndarray,
                    gbar_hat: np.ndarray, xbins: np.ndarray) -> float:
    """Replica-averaged step: BB when history allows, Cauchy otherwise."""
    alpha = None
    if state.step_rule == "bb3":
        state.history.observe(zhat, gbar_hat)
        try:
            alpha = bb_step(state.history, "v3")
        except StepUndefinedError:
            alpha = state.last_step
    if alpha is None:
        num = _freq_norm2(gbar_hat)
        mapped = np.einsum("knm,nm->kn", xbins, gbar_hat)
        den = _freq_norm2(mapped) / xbins.shape[0]
        alpha = num / den if num > 0 and den > 0 else (state.last_step or 1.0)
    state.last_step = float(alpha)
    return alpha


@dataclass
class CdlResult:
    dictionary: Dictionary
    maps: CoefficientMaps
    trace: ConvergenceTrace
    holdout: list[tuple[int, float]]


def cdl_train(cfg: CdlConfig, s: SignalSet, *,
              holdout: SignalSet | None = None,
              holdout_every: int = 0,
              holdout_lam: float = 0.1,
              holdout_iters: int = 200) -> CdlResult:
    """Alternate coefficient and filter-bank updates on training signals.

    Per outer iteration the configured coefficient solver advances
    ``coef_iters`` sweeps (warm-started), the configured filter-bank update
    advances ``dict_iters`` sweeps, and the training objective at the new
    bank and maps is recorded. When ``holdout_every > 0``, the current bank
    is scored on the held-out signals by running fresh sparse-coding solves
    and averaging their final objectives.
    """
    rng = np.random.default_rng(cfg.seed)
    frame = s.frame_shape
    d0 = init_dictionary(cfg.m_count, cfg.filter_shape, frame, rng)
    rho0 = cfg.rho0 if cfg.rho0 is not None else default_rho(cfg.lam)
    sigma0 = cfg.sigma0 if cfg.sigma0 is not None else default_rho(cfg.lam)
    kk, m = s.k_count, cfg.m_count
    coef_admm = CscAdmmState.fresh(kk, m, frame, rho0)
    coef_fista = CscFistaState.fresh(kk, m, frame)
    if cfg.dict_solver == "admm_cns":
        dict_state = DictAdmmState.fresh(d0, kk, sigma0, rng)
    elif cfg.dict_solver == "apg":
        dict_state = DictApgState.fresh(d0, rng, cfg.inertial)
    else:
        dict_state = DictApgCnsState.fresh(d0, rng, cfg.inertial,
                                           cfg.dict_step_rule)
    support = tuple(slice(0, n) for n in cfg.filter_shape)
    g = d0.padded()
    trace = ConvergenceTrace()
    obj0, fid0, rg0 = cdl_objective(g, CoefficientMaps.zeros(kk, m, frame),
                                    s, cfg.lam)
    trace.append(0, obj0, fid0, rg0)
    holdout_scores: list[tuple[int, float]] = []
    start = time.perf_counter()
    for outer in range(1, cfg.outer_iters + 1):
        d_current = Dictionary(g[(slice(None),) + support], frame)
        problem = CscProblem(d_current, s, cfg.lam)
        if cfg.coef_solver == "admm":
            maps, _ = csc_admm_solve(problem, iters=cfg.coef_iters,
                                     relax=cfg.relax, trace_every=0,
                                     workers=cfg.workers, state=coef_admm)
        else:
            # bank changed: the spectral bound and the ratcheted per-signal
            # steps are only valid for a fixed problem
            coef_fista.fixed_alpha = None
            coef_fista.alpha_prev = None
            maps, _ = csc_fista_solve(problem, iters=cfg.coef_iters,
                                      variant=cfg.coef_solver, c=cfg.fista_c,
                                      trace_every=0, state=coef_fista)
        if cfg.dict_solver == "admm_cns":
            g = dict_admm_consensus_update(maps, s, dict_state,
                                           iters=cfg.dict_iters,
                                           relax=cfg.relax,
                                           workers=cfg.workers)
            step_val, rho_val = float("nan"), dict_state.sigma
        elif cfg.dict_solver == "apg":
            g = dict_apg_update(maps, s, dict_state, iters=cfg.dict_iters)
            step_val, rho_val = float("nan"), float("nan")
        else:
            g = dict_apg_consensus_update(maps, s, dict_state,
                                          iters=cfg.dict_iters,
                                          workers=cfg.workers)
            step_val = dict_state.last_step or float("nan")
            rho_val = float("nan")
        if cfg.trace_every and (outer % cfg.trace_every == 0
                                or outer == cfg.outer_iters):
            obj, fid, rg = cdl_objective(g, maps, s, cfg.lam)
            if not np.isfinite(obj):
                raise DivergenceError(f"non-finite objective at outer {outer}")
            if obj0 > 0 and obj > GUARD_FACTOR * obj0:
                raise DivergenceError(
                    f"objective {obj} at outer iteration {outer} exceeds "
                    f"{GUARD_FACTOR} x initial value {obj0}")
            trace.append(outer, obj, fid, rg, step=step_val, rho=rho_val,
                         time_ms=1e3 * (time.perf_counter() - start))
        if holdout is not None and holdout_every and outer % holdout_every == 0:
            d_now = Dictionary(g[(slice(None),) + support], frame)
            vals = [cbpdn_solve(d_now, holdout[i], lam=holdout_lam,
                                iters=holdout_iters, trace_every=holdout_iters)[1]
                    for i in range(holdout.k_count)]
            holdout_scores.append((outer, float(np.mean(vals))))
    final_d = Dictionary(g[(slice(None),) + support], frame)
    return CdlResult(final_d, maps, trace, holdout_scores)
