"""Multi-sensor anomaly detection via shared-map convolutional coding.

P synchronized series share one set of coefficient maps; each series has
its own filter bank and an anomaly vector that absorbs what the bank
cannot model. The model is

    min_{x, e}  sum_p 0.5 |D_p x + e_p - s_p|^2 + lam P |x|_1
                + beta sum_p |e_p|_2

which is jointly convex, so the two x-step strategies (consensus
accelerated proximal-gradient and consensus ADMM) reach the same value.
The detection score aggregates the anomaly vectors across sensors.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fourier import FreqBlock, conv_apply_bins, sherman_morrison_bins, signal_spectrum, spectrum_to_signal
from .prox import block_l2_shrink, soft_threshold
from .signals import Dictionary
from .steps import StepHistory, StepUndefinedError, bb_step
from .trace import ConvergenceTrace, DivergenceError

GUARD_FACTOR = 1e3


@dataclass(frozen=True)
class AnomalyProblem:
    """Per-series filter banks ``(P, M, L)``, series ``(P, T)``, weights.

    ``grouping`` picks the anomaly penalty blocks: ``"series"`` penalizes
    each whole vector e_p, ``"timestep"`` penalizes the cross-sensor
    vector e[:, t] at every step.
    """

    banks: np.ndarray
    series: np.ndarray
    lam: float
    beta: float
    grouping: str = "series"

    def __post_init__(self):
        banks = np.asarray(self.banks, dtype=np.float64)
        series = np.asarray(self.series, dtype=np.float64)
        if banks.ndim != 3 or series.ndim != 2:
            raise ValueError("need banks (P, M, L) and series (P, T)")
        if banks.shape[0] != series.shape[0]:
            raise ValueError("bank count does not match series count")
        if banks.shape[2] > series.shape[1]:
            raise ValueError("filters longer than the series")
        if not (np.all(np.isfinite(banks)) and np.all(np.isfinite(series))):
            raise ValueError("non-finite inputs")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("weights must be non-negative")
        if self.grouping not in ("series", "timestep"):
            raise ValueError(f"unknown grouping {self.grouping!r}")
        object.__setattr__(self, "banks", banks)
        object.__setattr__(self, "series", series)

    @classmethod
    def from_dictionaries(cls, dicts: list[Dictionary], series,
                          lam: float, beta: float,
                          grouping: str = "series") -> "AnomalyProblem":
        series = np.asarray(series, dtype=np.float64)
        if len(dicts) != series.shape[0]:
            raise ValueError("need one filter bank per series")
        shapes = {(d.m_count,) + d.support_shape for d in dicts}
        if len(shapes) != 1:
            raise ValueError("filter banks must share filter count and length")
        return cls(np.stack([d.filters for d in dicts]), series, lam, beta,
                   grouping)

    @property
    def p_count(self) -> int:
        return self.series.shape[0]

    @property
    def t_len(self) -> int:
        return self.series.shape[1]

    @property
    def m_count(self) -> int:
        return self.banks.shape[1]


@dataclass
class AnomalySolution:
    maps: np.ndarray        # (M, T)
    anomalies: np.ndarray   # (P, T)


def _bank_bins(problem: AnomalyProblem) -> np.ndarray:
    frame = (problem.t_len,)
    return FreqBlock.from_spatial(problem.banks, frame).bins  # (P, N, M)


def _objective(problem: AnomalyProblem, recon: np.ndarray, x: np.ndarray,
               e: np.ndarray) -> tuple[float, float, float]:
    fid = 0.5 * float(np.sum((recon + e - problem.series) ** 2))
    reg = problem.lam * problem.p_count * float(np.abs(x).sum())
    axis = 1 if problem.grouping == "series" else 0
    reg += problem.beta * float(np.linalg.norm(e, axis=axis).sum())
    return fid + reg, fid, reg


def _reconstruct(dbins: np.ndarray, x: np.ndarray, t_len: int) -> np.ndarray:
    xhat = FreqBlock.from_spatial(x, (t_len,)).bins
    rhat = conv_apply_bins(dbins, xhat)
    return spectrum_to_signal(rhat, (t_len,))


def _shrink_anomalies(problem: AnomalyProblem, recon: np.ndarray) -> np.ndarray:
    resid = problem.series - recon
    if problem.grouping == "series":
        return np.stack([block_l2_shrink(resid[p], problem.beta)
                         for p in range(problem.p_count)])
    norms = np.linalg.norm(resid, axis=0)
    scale = np.maximum(0.0, 1.0 - problem.beta / np.maximum(norms, 1e-300))
    return resid * scale


def caddict_apg_consensus(problem: AnomalyProblem, *, iters: int = 200,
                          step_rule: str = "bb3", trace_every: int = 1
                          ) -> tuple[AnomalySolution, ConvergenceTrace]:
    """Alternate a consensus accelerated proximal-gradient step on the
    shared maps with the closed-form anomaly update.

    The map step averages per-series gradients at the extrapolated point,
    shrinks elementwise at the step times the sparsity weight, then
    extrapolates with the square-root inertial sequence. Each anomaly
    vector is the block shrinkage of its series residual.
    """
    if step_rule not in ("bb3", "cauchy"):
        raise ValueError(f"unknown step rule {step_rule!r}")
    t_len, m, p = problem.t_len, problem.m_count, problem.p_count
    frame = (t_len,)
    dbins = _bank_bins(problem)
    shat = signal_spectrum(problem.series, frame)
    x = np.zeros((m, t_len))
    z = x.copy()
    e = np.zeros((p, t_len))
    t_seq = 1.0
    history = StepHistory()
    last_step = None
    trace = ConvergenceTrace()
    obj0, fid0, rg0 = _objective(problem, np.zeros_like(e), x, e)
    if trace_every:
        trace.append(0, obj0, fid0, rg0)
    start = time.perf_counter()
    for k in range(1, iters + 1):
        zhat = FreqBlock.from_spatial(z, frame).bins
        ehat = signal_spectrum(e, frame)
        resid = conv_apply_bins(dbins, zhat) + ehat - shat
        grads = np.conj(dbins) * resid[..., None]
        gbar_hat = grads.mean(axis=0)
        alpha = None
        if step_rule == "bb3":
            history.observe(zhat, gbar_hat)
            try:
                alpha = bb_step(history, "v3")
            except StepUndefinedError:
                alpha = last_step
        if alpha is None:
            num = float(np.vdot(gbar_hat, gbar_hat).real)
            mapped = np.einsum("pnm,nm->pn", dbins, gbar_hat)
            den = float(np.vdot(mapped, mapped).real) / p
            alpha = num / den if num > 0 and den > 0 else (last_step or 1.0)
        last_step = float(alpha)
        gbar = FreqBlock(gbar_hat, frame).to_spatial()
        x_new = soft_threshold(z - alpha * gbar, alpha * problem.lam)
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t_seq * t_seq)) / 2.0
        z = x_new + ((t_seq - 1.0) / t_new) * (x_new - x)
        x, t_seq = x_new, t_new
        recon = _reconstruct(dbins, x, t_len)
        e = _shrink_anomalies(problem, recon)
        if trace_every and (k % trace_every == 0 or k == iters):
            obj, fid, rg = _objective(problem, recon, x, e)
            if not np.isfinite(obj) or (obj0 > 0 and obj > GUARD_FACTOR * obj0):
                raise DivergenceError(f"objective {obj} diverged at {k}")
            trace.append(k, obj, fid, rg, step=last_step,
                         time_ms=1e3 * (time.perf_counter() - start))
    return AnomalySolution(x, e), trace


def caddict_admm_consensus(problem: AnomalyProblem, *, iters: int = 200,
                           rho0: float | None = None, relax: float = 1.8,
                           adapt_every: int = 10, trace_every: int = 1
                           ) -> tuple[AnomalySolution, ConvergenceTrace]:
    """Same alternation with a consensus-ADMM sweep as the map step.

    Each series holds a local copy of the maps, updated by per-bin
    rank-one solves against the anomaly-corrected series; the shared maps
    are the soft-thresholded replica mean.
    """
    if not 0.0 < relax <= 2.0:
        raise ValueError("relaxation weight must be in (0, 2]")
    t_len, m, p = problem.t_len, problem.m_count, problem.p_count
    frame = (t_len,)
    dbins = _bank_bins(problem)
    cbins = np.conj(dbins)
    if rho0 is None:
        rho0 = 100.0 * problem.lam + 1.0
    rho = float(rho0)
    y = np.zeros((m, t_len))
    u = np.zeros((p, m, t_len))
    e = np.zeros((p, t_len))
    trace = ConvergenceTrace()
    obj0, fid0, rg0 = _objective(problem, np.zeros_like(e), y, e)
    if trace_every:
        trace.append(0, obj0, fid0, rg0, rho=rho)
    start = time.perf_counter()
    for k in range(1, iters + 1):
        bhat = signal_spectrum(problem.series - e, frame)
        vhat = FreqBlock.from_spatial(y[None] - u, frame).bins
        rhs = cbins * bhat[..., None] + rho * vhat
        xhat = sherman_morrison_bins(cbins, rho, rhs)
        x = FreqBlock(xhat, frame).to_spatial()
        xr = relax * x + (1.0 - relax) * y[None] if relax != 1.0 else x
        y_old = y
        y = soft_threshold((xr + u).mean(axis=0), problem.lam / rho)
        u = u + xr - y[None]
        recon = _reconstruct(dbins, y, t_len)
        e = _shrink_anomalies(problem, recon)
        if adapt_every and k % adapt_every == 0:
            rp = float(np.linalg.norm(x - y[None]))
            rd = rho * np.sqrt(p) * float(np.linalg.norm(y - y_old))
            if rp > 10.0 * rd:
                rho *= 2.0
                u = u / 2.0
            elif rd > 10.0 * rp:
                rho /= 2.0
                u = u * 2.0
        if trace_every and (k % trace_every == 0 or k == iters):
            obj, fid, rg = _objective(problem, recon, y, e)
            if not np.isfinite(obj) or (obj0 > 0 and obj > GUARD_FACTOR * obj0):
                raise DivergenceError(f"objective {obj} diverged at {k}")
            trace.append(k, obj, fid, rg, rho=rho,
                         time_ms=1e3 * (time.perf_counter() - start))
    return AnomalySolution(y, e), trace


def anomaly_score(solution: AnomalySolution) -> np.ndarray:
    """Per-time-step detection score: root sum of squared anomaly values."""
    return np.sqrt((solution.anomalies ** 2).sum(axis=0))


def flag_scores(score: np.ndarray, sigma_factor: float = 3.0) -> np.ndarray:
    """Threshold the score at its mean plus ``sigma_factor`` deviations."""
    score = np.asarray(score, dtype=np.float64)
    return score > score.mean() + sigma_factor * score.std()


def flagged_windows(flags: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous flagged runs as half-open ``(start, stop)`` pairs."""
    flags = np.asarray(flags, dtype=bool)
    if not flags.any():
        return []
    padded = np.concatenate(([False], flags, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def read_series_csv(path) -> tuple[list[str], np.ndarray]:
    """Read synchronized series from a delimited file, one column each.

    The first row names the series; every later row is one time step.
    Missing or non-numeric entries are rejected.
    """
    lines = Path(path).read_text().strip().splitlines()
    if len(lines) < 2:
        raise ValueError(f"{path}: no data rows")
    names = [c.strip() for c in lines[0].split(",")]
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(names) or any(c == "" for c in cells):
            raise ValueError(f"{path}:{ln}: expected {len(names)} values")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as err:
            raise ValueError(f"{path}:{ln}: {err}") from None
    data = np.asarray(rows, dtype=np.float64).T
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values")
    return names, data


def write_scores_csv(path, score: np.ndarray, flags: np.ndarray) -> None:
    lines = ["t,score,flag"]
    for t, (v, f) in enumerate(zip(score, flags)):
        lines.append(f"{t},{repr(float(v))},{int(f)}")
    Path(path).write_text("\n".join(lines) + "\n")
