"""Step-size rules: inertial sequences, Barzilai-Borwein and Cauchy steps.

All rules operate on real or complex arrays; inner products take the real
part, so frequency-domain quantities can be fed directly (ratios of norms
are the same in either domain for unitary-up-to-scale transforms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class StepUndefinedError(RuntimeError):
    """A step rule could not produce a valid positive step."""


class ConfigError(ValueError):
    """Invalid solver or step-rule configuration."""


# ---------------------------------------------------------------------------
# inertial (momentum) sequences


@dataclass(frozen=True)
class InertialConfig:
    """Parameters of the inertial sequence ``t_k`` with ``t_1 = 1``.

    Schemes:

    - ``nesterov``: ``t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2``
    - ``linear``: ``t_k = (k - 1 + b) / b`` with ``b >= 2``
    - ``generalized``: ``t_k = (k - 1 + a) / b`` with ``b >= 2``, ``a >= b - 1``

    Every scheme satisfies ``t_{k+1}^2 - t_{k+1} <= t_k^2``, which is the
    growth condition the accelerated-convergence argument needs.
    """

    scheme: str = "nesterov"
    a: float = 50.0
    b: float = 2.0

    def __post_init__(self):
        if self.scheme not in ("nesterov", "linear", "generalized"):
            raise ConfigError(f"unknown inertial scheme {self.scheme!r}")
        if self.scheme in ("linear", "generalized") and self.b < 2:
            raise ConfigError("inertial parameter b must be at least 2")
        if self.scheme == "generalized" and self.a < self.b - 1:
            raise ConfigError("inertial parameter a must be at least b - 1")


def inertial_start(cfg: InertialConfig) -> float:
    """First element of the sequence.

    The square-root and linear schemes both start at 1; the generalized
    scheme's closed form gives ``a / b`` at index 1, and starting anywhere
    else breaks the growth condition on the first transition. Floored at 1
    so the extrapolation weight stays non-negative for small ``a``.
    """
    if cfg.scheme == "generalized":
        return max(1.0, cfg.a / cfg.b)
    return 1.0


def inertial_next(cfg: InertialConfig, t_prev: float, k: int) -> tuple[float, float]:
    """Advance the sequence to element ``k`` (1-based) and return ``(t_k, gamma)``.

    ``gamma = (t_prev - 1) / t_k`` is the extrapolation weight applied with
    the new element. ``t_prev`` must come from the same scheme so that
    ``gamma`` stays in ``[0, 1)``.
    """
    if t_prev < 1.0:
        raise ValueError("previous inertial element must be at least 1")
    if k < 2:
        raise ValueError("element index must be at least 2")
    if cfg.scheme == "nesterov":
        t = (1.0 + math.sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0
        # The recursion holds the growth condition with equality; round-off
        # can tip it the wrong way, so nudge down by ulps until it holds.
        while t * t - t > t_prev * t_prev:
            t = float(np.nextafter(t, 0.0))
    elif cfg.scheme == "linear":
        t = (k - 1 + cfg.b) / cfg.b
    else:
        t = (k - 1 + cfg.a) / cfg.b
    gamma = (t_prev - 1.0) / t
    if not 0.0 <= gamma < 1.0:
        raise ValueError(
            f"extrapolation weight {gamma} outside [0, 1); t_prev={t_prev} "
            "does not belong to this scheme")
    return t, gamma


# ---------------------------------------------------------------------------
# linear operators for the Cauchy rules


@dataclass(frozen=True)
class LinOp:
    """A linear map with its adjoint, as plain callables on arrays."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "LinOp":
        a = np.asarray(a)
        return cls(lambda v: a @ v, lambda v: a.conj().T @ v)


def _rdot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(a.ravel(), b.ravel()).real)


def _sqnorm(a: np.ndarray) -> float:
    return float(np.vdot(a.ravel(), a.ravel()).real)


# ---------------------------------------------------------------------------
# Barzilai-Borwein rules


@dataclass
class StepHistory:
    """Difference vectors between consecutive gradient evaluation points."""

    z: np.ndarray | None = None
    r: np.ndarray | None = None
    _prev_x: np.ndarray | None = field(default=None, repr=False)
    _prev_g: np.ndarray | None = field(default=None, repr=False)

    def observe(self, x: np.ndarray, g: np.ndarray) -> None:
        """Record the pair for the current iteration; updates (z, r)."""
        if self._prev_x is not None:
            self.z = x - self._prev_x
            self.r = g - self._prev_g
        self._prev_x = np.array(x, copy=True)
        self._prev_g = np.array(g, copy=True)

    @property
    def ready(self) -> bool:
        return self.z is not None


def bb_step(history: StepHistory, mode: str = "v3") -> float:
    """Barzilai-Borwein step from iterate/gradient differences.

    Modes: ``v1 = <z, r>/|r|^2``, ``v2 = |z|^2/<z, r>``,
    ``v3 = |z|/|r| = sqrt(v1 * v2)``. Raises
    :class:`StepUndefinedError` when the required quantity is not a finite
    positive number (no history yet, zero differences, or ``<z, r> <= 0``).
    """
    if mode not in ("v1", "v2", "v3"):
        raise ConfigError(f"unknown BB mode {mode!r}")
    if not history.ready:
        raise StepUndefinedError("no history to form difference vectors")
    z, r = history.z, history.r
    rr = _sqnorm(r)
    zz = _sqnorm(z)
    if rr == 0.0 or zz == 0.0:
        raise StepUndefinedError("zero difference vector")
    if mode == "v3":
        step = math.sqrt(zz / rr)
    else:
        zr = _rdot(z, r)
        if zr <= 0.0:
            raise StepUndefinedError("non-positive curvature estimate")
        step = zr / rr if mode == "v1" else zz / zr
    if not math.isfinite(step) or step <= 0.0:
        raise StepUndefinedError(f"invalid step {step}")
    return step


# ---------------------------------------------------------------------------
# Cauchy (steepest-descent) rules


def cauchy_step(g: np.ndarray, op: LinOp, mode: str = "std",
                support: np.ndarray | None = None) -> float:
    """Exact line-search step for a quadratic fidelity along the gradient.

    Modes: ``std = |g|^2 / |A g|^2``; ``support`` restricts the numerator
    and the mapped vector to the given nonzero mask; ``modified`` uses
    ``|g| / |A^T A g|``.
    """
    if mode not in ("std", "support", "modified"):
        raise ConfigError(f"unknown Cauchy mode {mode!r}")
    if mode == "support":
        if support is None:
            raise ConfigError("support mode needs a support mask")
        g = np.where(support, g, 0.0)
    num = _sqnorm(g)
    if num == 0.0:
        raise StepUndefinedError("zero gradient" if mode != "support"
                                 else "empty support")
    if mode == "modified":
        den = math.sqrt(_sqnorm(op.adjoint(op.apply(g))))
        step = math.sqrt(num) / den if den > 0.0 else math.inf
    else:
        den = _sqnorm(op.apply(g))
        step = num / den if den > 0.0 else math.inf
    if not math.isfinite(step) or step <= 0.0:
        raise StepUndefinedError(f"invalid step {step}")
    return step


def consensus_cauchy(gbar: np.ndarray, ops: Sequence[LinOp],
                     support: np.ndarray | None = None) -> float:
    """Cauchy step for the replica-averaged gradient.

    ``|v|^2 / mean_i |A_i v|^2`` where ``v`` is the averaged gradient,
    optionally masked to a support. With one operator this reduces to the
    plain Cauchy step.
    """
    if not ops:
        raise ConfigError("need at least one operator")
    v = gbar if support is None else np.where(support, gbar, 0.0)
    num = _sqnorm(v)
    if num == 0.0:
        raise StepUndefinedError("zero averaged gradient"
                                 if support is None else "empty support")
    den = 0.0
    for op in ops:
        den += _sqnorm(op.apply(v))
    den /= len(ops)
    if den <= 0.0:
        raise StepUndefinedError("gradient is in the null space of every term")
    return num / den


def fista3k_step(g: np.ndarray, op: LinOp, support: np.ndarray,
                 c: float = 0.2) -> float:
    """Support-restricted Cauchy step scaled by ``c``."""
    if c <= 0.0:
        raise ConfigError("scale factor must be positive")
    return c * cauchy_step(g, op, mode="support", support=support)


# ---------------------------------------------------------------------------
# consensus step mapping and spectral fallback


def consensus_alpha(alpha: float, rho: float) -> float:
    """Map a base step to the consensus-damped step ``alpha / (1 + rho alpha)``."""
    if alpha <= 0.0:
        raise ValueError("base step must be positive")
    if rho < 0.0:
        raise ValueError("consensus weight must be non-negative")
    return alpha / (1.0 + rho * alpha)


def power_step_bound(ops: Sequence[LinOp], like: np.ndarray,
                     rng: np.random.Generator | None = None,
                     iters: int = 10) -> float:
    """Safe step ``1 / |A|^2`` estimated with a few power iterations.

    The iteration runs on the averaged normal operator
    ``v -> mean_i A_i^T A_i v``.
    """
    if not ops:
        raise ConfigError("need at least one operator")
    rng = rng or np.random.default_rng(0)
    v = rng.standard_normal(np.shape(like))
    if np.iscomplexobj(like):
        v = v + 1j * rng.standard_normal(np.shape(like))
    nrm = math.sqrt(_sqnorm(v))
    if nrm == 0.0:
        return 1.0
    v = v / nrm
    lam = 0.0
    for _ in range(iters):
        w = ops[0].adjoint(ops[0].apply(v))
        for op in ops[1:]:
            w = w + op.adjoint(op.apply(v))
        w = w / len(ops)
        lam = math.sqrt(_sqnorm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return 1.0 / lam


# ---------------------------------------------------------------------------
# step engine with the shared fallback chain


@dataclass(frozen=True)
class StepConfig:
    """Which rule produces the per-iteration step.

    ``rule`` is one of ``fixed``, ``bb1``, ``bb2``, ``bb3``, ``cauchy``,
    ``cauchy_support``, ``cauchy_modified``, ``fista3k``. ``fixed`` requires
    ``fixed``; ``fista3k`` scales the support-Cauchy step by ``c`` and never
    lets the step sequence decrease.
    """

    rule: str = "bb3"
    fixed: float | None = None
    c: float = 0.2

    def __post_init__(self):
        known = ("fixed", "bb1", "bb2", "bb3", "cauchy", "cauchy_support",
                 "cauchy_modified", "fista3k")
        if self.rule not in known:
            raise ConfigError(f"unknown step rule {self.rule!r}")
        if self.rule == "fixed" and (self.fixed is None or self.fixed <= 0):
            raise ConfigError("fixed rule needs a positive step value")
        if self.c <= 0:
            raise ConfigError("scale factor must be positive")


class StepEngine:
    """Produces steps for one solver, applying the shared fallback chain.

    Call :meth:`observe` with the point/gradient pair of each iteration
    (the extrapolated point for inertial methods), then :meth:`step`.
    Fallback order when a rule cannot produce a valid step: the previous
    accepted step, the Cauchy step at the current gradient, then the
    spectral bound ``1/|A|^2`` from a short power iteration.
    """

    def __init__(self, cfg: StepConfig, ops: Sequence[LinOp] = (),
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.ops = tuple(ops)
        self.rng = rng
        self.history = StepHistory()
        self.last_step: float | None = None
        if cfg.rule != "fixed" and cfg.rule != "fista3k" and not self.ops:
            if cfg.rule.startswith("cauchy"):
                raise ConfigError("Cauchy rules need the fidelity operator(s)")
        if cfg.rule == "fista3k" and not self.ops:
            raise ConfigError("fista3k needs the fidelity operator(s)")

    def observe(self, x: np.ndarray, g: np.ndarray) -> None:
        self.history.observe(x, g)

    def _fallback(self, g: np.ndarray) -> float:
        if self.last_step is not None:
            return self.last_step
        if self.ops:
            try:
                return consensus_cauchy(g, self.ops)
            except StepUndefinedError:
                return power_step_bound(self.ops, g, self.rng)
        if self.cfg.fixed is not None:
            return self.cfg.fixed
        raise ConfigError("no fallback available: provide operators or a "
                          "fixed step")

    def step(self, g: np.ndarray, support: np.ndarray | None = None) -> float:
        cfg = self.cfg
        if cfg.rule == "fixed":
            alpha = cfg.fixed
        elif cfg.rule.startswith("bb"):
            try:
                alpha = bb_step(self.history, "v" + cfg.rule[2])
            except StepUndefinedError:
                alpha = self._fallback(g)
        elif cfg.rule == "cauchy":
            try:
                alpha = consensus_cauchy(g, self.ops)
            except StepUndefinedError:
                alpha = self._fallback(g)
        elif cfg.rule == "cauchy_support":
            try:
                alpha = consensus_cauchy(g, self.ops, support=support)
            except StepUndefinedError:
                alpha = self._fallback(g)
        elif cfg.rule == "cauchy_modified":
            if len(self.ops) != 1:
                raise ConfigError("modified Cauchy rule needs exactly one operator")
            try:
                alpha = cauchy_step(g, self.ops[0], mode="modified")
            except StepUndefinedError:
                alpha = self._fallback(g)
        else:  # fista3k
            try:
                alpha = cfg.c * consensus_cauchy(g, self.ops, support=support)
            except StepUndefinedError:
                # Bootstrap before any nonzero support exists: c-scaled plain
                # Cauchy keeps the later max() monotonicity harmless.
                try:
                    alpha = cfg.c * consensus_cauchy(g, self.ops)
                except StepUndefinedError:
                    alpha = self._fallback(g)
            if self.last_step is not None:
                alpha = max(alpha, self.last_step)
        self.last_step = float(alpha)
        return self.last_step
