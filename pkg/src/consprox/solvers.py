"""Generic consensus proximal-gradient and ADMM runners.

A problem is R smooth local terms ``f_i`` plus one nonsmooth term ``g``
counted once per local term, i.e. the objective every runner reports is

    F(x) = sum_i f_i(x) + R * g(x).

With that convention the consensus proximal-gradient step

    x+ = prox_{a_c g}( mean_i( x - a_c grad f_i(x) ) ),   a_c = a / (1 + rho a)

is exactly a proximal-gradient step on ``mean_i f_i + g`` with step
``a_c``, and the consensus ADMM scaled-form update applies ``prox_{g/rho}``
to the replica mean. Indicator regularizers are unaffected by the
per-term counting; for weighted norms the factor R is part of the model.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .parallel import pmap
from .prox import soft_threshold
from .steps import (ConfigError, InertialConfig, LinOp, StepConfig,
                    StepEngine, consensus_alpha, inertial_next,
                    inertial_start)
from .trace import ConvergenceTrace, DivergenceError

log = logging.getLogger(__name__)

GUARD_FACTOR = 1e3


@dataclass(frozen=True)
class SmoothTerm:
    """A smooth local term: value, gradient, and optionally the linear map
    whose normal operator drives Cauchy steps."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    op: LinOp | None = None


@dataclass(frozen=True)
class Regularizer:
    """A nonsmooth term with a closed-form prox: ``prox(v, t)`` minimizes
    ``t * g(y) + 0.5 |y - v|^2``."""

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]


def l1_regularizer(lam: float) -> Regularizer:
    if lam < 0:
        raise ValueError("weight must be non-negative")
    return Regularizer(
        value=lambda x: lam * float(np.abs(x).sum()),
        prox=lambda v, t: soft_threshold(v, t * lam),
    )


def zero_regularizer() -> Regularizer:
    return Regularizer(value=lambda x: 0.0, prox=lambda v, t: np.asarray(v))


def quadratic_term(a: np.ndarray, b: np.ndarray) -> SmoothTerm:
    """``0.5 |A x - b|^2`` for a dense matrix, mostly for small problems."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return SmoothTerm(
        value=lambda x: 0.5 * float(np.sum((a @ x - b) ** 2)),
        gradient=lambda x: a.T @ (a @ x - b),
        op=LinOp.from_matrix(a),
    )


def total_objective(terms: Sequence[SmoothTerm], reg: Regularizer,
                    x: np.ndarray) -> tuple[float, float, float]:
    fid = float(sum(t.value(x) for t in terms))
    rg = len(terms) * reg.value(x)
    return fid + rg, fid, rg


def _check_guard(objective: float, initial: float, iteration: int) -> None:
    if not np.isfinite(objective):
        raise DivergenceError(f"non-finite objective at iteration {iteration}")
    if initial > 0 and objective > GUARD_FACTOR * initial:
        raise DivergenceError(
            f"objective {objective} at iteration {iteration} exceeds "
            f"{GUARD_FACTOR} x initial value {initial}")


def pg_consensus_step(x: np.ndarray, terms: Sequence[SmoothTerm],
                      reg: Regularizer, alpha_c: float,
                      workers: int = 1) -> np.ndarray:
    """One consensus proximal-gradient step from a common point."""
    if alpha_c <= 0:
        raise ValueError("step must be positive")
    grads = pmap(lambda t: t.gradient(x), terms, workers)
    stack = np.stack([x - alpha_c * g for g in grads])
    return reg.prox(stack.mean(axis=0), alpha_c)


def consensus_split_step(blocks: np.ndarray, terms: Sequence[SmoothTerm],
                         reg: Regularizer, alpha: float, rho: float,
                         workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """One sweep of the two-subproblem alternation on the lifted variable.

    Subproblem one minimizes the separable surrogate plus the consensus
    coupling in closed form (a completed square blended with the current
    replicas); subproblem two projects onto the consensus set. Returns the
    updated replica stack and the common point.
    """
    if alpha <= 0 or rho < 0:
        raise ValueError("need alpha > 0 and rho >= 0")
    r = len(terms)
    if blocks.shape[0] != r:
        raise ValueError("replica count does not match term count")
    grads = pmap(lambda i: terms[i].gradient(blocks[i]), range(r), workers)
    v = np.stack([blocks[i] - alpha * grads[i] for i in range(r)])
    blend = (v + rho * alpha * blocks) / (1.0 + rho * alpha)
    y = reg.prox(blend.mean(axis=0), consensus_alpha(alpha, rho))
    return np.broadcast_to(y, blocks.shape).copy(), y


def apg_consensus_run(terms: Sequence[SmoothTerm], reg: Regularizer,
                      x0: np.ndarray, iters: int, *,
                      step_cfg: StepConfig | None = None,
                      inertial: InertialConfig | None = None,
                      rho: float = 0.0,
                      workers: int = 1,
                      trace_every: int = 1,
                      rng: np.random.Generator | None = None
                      ) -> tuple[np.ndarray, ConvergenceTrace]:
    """Accelerated consensus proximal-gradient on ``sum_i f_i + R g``.

    Parameters
    ----------
    terms : smooth local terms, one per replica.
    reg : shared nonsmooth term (counted once per replica).
    x0 : common starting point.
    iters : number of iterations.
    step_cfg : step rule; defaults to BB-v3 with Cauchy fallback.
    inertial : inertial sequence; None disables extrapolation.
    rho : consensus damping weight applied through ``a / (1 + rho a)``.
    workers : thread count for the per-term gradient evaluations.
    trace_every : record every n-th iteration (the last always records).

    Returns the final point and the convergence trace. Gradients are
    evaluated at the extrapolated point; BB differences use those points.
    """
    if iters < 1:
        raise ValueError("need at least one iteration")
    step_cfg = step_cfg or StepConfig(rule="bb3")
    ops = tuple(t.op for t in terms if t.op is not None)
    if len(ops) != len(terms):
        ops = ()
    engine = StepEngine(step_cfg, ops, rng)
    x = np.array(x0, dtype=np.float64, copy=True)
    z = x.copy()
    t_seq = inertial_start(inertial) if inertial is not None else 1.0
    trace = ConvergenceTrace()
    obj0, fid0, rg0 = total_objective(terms, reg, x)
    trace.append(0, obj0, fid0, rg0)
    start = time.perf_counter()
    for k in range(1, iters + 1):
        grads = pmap(lambda term: term.gradient(z), terms, workers)
        gbar = np.stack(grads).mean(axis=0)
        engine.observe(z, gbar)
        support = np.abs(x) > 0
        alpha = engine.step(gbar, support=support)
        alpha_c = consensus_alpha(alpha, rho) if rho > 0 else alpha
        x_new = reg.prox(z - alpha_c * gbar, alpha_c)
        if inertial is not None:
            t_seq, gamma = inertial_next(inertial, t_seq, k + 1)
            z = x_new + gamma * (x_new - x)
        else:
            z = x_new
        x = x_new
        if k % trace_every == 0 or k == iters:
            obj, fid, rg = total_objective(terms, reg, x)
            _check_guard(obj, obj0, k)
            trace.append(k, obj, fid, rg, step=alpha_c,
                         time_ms=1e3 * (time.perf_counter() - start))
    return x, trace


def admm_run(f_solve: Callable[[np.ndarray, np.ndarray, float], np.ndarray],
             f_value: Callable[[np.ndarray], float],
             reg: Regularizer, x0: np.ndarray, iters: int, *,
             rho0: float = 1.0,
             relax: float = 1.8,
             adapt_every: int = 10,
             trace_every: int = 1
             ) -> tuple[np.ndarray, ConvergenceTrace]:
    """Scaled-form ADMM on ``f(x) + g(y)`` subject to ``x = y``.

    Parameters
    ----------
    f_solve : callable ``(y, u, rho) -> x`` minimizing
        ``f(x) + rho/2 |x - y + u|^2``.
    f_value : evaluates ``f`` for the trace.
    reg : the ``g`` term.
    x0 : initial value for the ``y`` block.
    rho0 : initial penalty parameter.
    relax : over-relaxation weight in (0, 2]; 1 disables it.
    adapt_every : residual-balancing cadence in iterations.

    Returns the final ``y`` block (the one the prox structure holds exactly)
    and the trace. Residual balancing doubles rho when the primal residual
    exceeds ten times the dual residual and halves it in the mirror case,
    rescaling the scaled dual accordingly.
    """
    if not 0.0 < relax <= 2.0:
        raise ValueError("relaxation weight must be in (0, 2]")
    if rho0 <= 0:
        raise ValueError("penalty must be positive")
    y = np.array(x0, dtype=np.float64, copy=True)
    u = np.zeros_like(y)
    rho = float(rho0)
    trace = ConvergenceTrace()
    fid0 = f_value(y)
    obj0 = fid0 + reg.value(y)
    trace.append(0, obj0, fid0, reg.value(y), rho=rho)
    start = time.perf_counter()
    for k in range(1, iters + 1):
        x = f_solve(y, u, rho)
        xr = relax * x + (1.0 - relax) * y if relax != 1.0 else x
        y_old = y
        y = reg.prox(xr + u, 1.0 / rho)
        u = u + xr - y
        if adapt_every and k % adapt_every == 0:
            r_primal = float(np.linalg.norm(x - y))
            r_dual = rho * float(np.linalg.norm(y - y_old))
            if r_primal > 10.0 * r_dual:
                rho *= 2.0
                u = u / 2.0
            elif r_dual > 10.0 * r_primal:
                rho /= 2.0
                u = u * 2.0
        if k % trace_every == 0 or k == iters:
            fid = f_value(y)
            rg = reg.value(y)
            _check_guard(fid + rg, obj0, k)
            trace.append(k, fid + rg, fid, rg, rho=rho,
                         time_ms=1e3 * (time.perf_counter() - start))
    return y, trace


def admm_consensus_run(local_solves: Sequence[Callable[[np.ndarray, np.ndarray, float], np.ndarray]],
                       local_values: Sequence[Callable[[np.ndarray], float]],
                       reg: Regularizer, x0: np.ndarray, iters: int, *,
                       rho0: float = 1.0,
                       relax: float = 1.0,
                       adapt_every: int = 10,
                       trace_every: int = 1,
                       workers: int = 1
                       ) -> tuple[np.ndarray, ConvergenceTrace]:
    """Consensus ADMM on ``sum_i f_i + R g`` with per-replica duals.

    ``local_solves[i](y, u_i, rho)`` minimizes
    ``f_i(x) + rho/2 |x - y + u_i|^2``. The shared block applies
    ``prox_{g/rho}`` to the mean of ``x_i + u_i`` (the per-term counting of
    ``g`` cancels the replica factor). Returns the common point.
    """
    if not 0.0 < relax <= 2.0:
        raise ValueError("relaxation weight must be in (0, 2]")
    if rho0 <= 0:
        raise ValueError("penalty must be positive")
    r = len(local_solves)
    if len(local_values) != r:
        raise ValueError("need one value callable per local solve")
    y = np.array(x0, dtype=np.float64, copy=True)
    u = np.zeros((r,) + y.shape)
    rho = float(rho0)
    trace = ConvergenceTrace()
    fid0 = float(sum(v(y) for v in local_values))
    rg0 = r * reg.value(y)
    obj0 = fid0 + rg0
    trace.append(0, obj0, fid0, rg0, rho=rho)
    start = time.perf_counter()
    for k in range(1, iters + 1):
        xs = pmap(lambda i: local_solves[i](y, u[i], rho), range(r), workers)
        x = np.stack(xs)
        xr = relax * x + (1.0 - relax) * y if relax != 1.0 else x
        y_old = y
        y = reg.prox((xr + u).mean(axis=0), 1.0 / rho)
        u = u + xr - y
        if adapt_every and k % adapt_every == 0:
            r_primal = float(np.linalg.norm(x - y))
            r_dual = rho * np.sqrt(r) * float(np.linalg.norm(y - y_old))
            if r_primal > 10.0 * r_dual:
                rho *= 2.0
                u = u / 2.0
            elif r_dual > 10.0 * r_primal:
                rho /= 2.0
                u = u * 2.0
        if k % trace_every == 0 or k == iters:
            fid = float(sum(v(y) for v in local_values))
            rg = r * reg.value(y)
            _check_guard(fid + rg, obj0, k)
            trace.append(k, fid + rg, fid, rg, rho=rho,
                         time_ms=1e3 * (time.perf_counter() - start))
    return y, trace
