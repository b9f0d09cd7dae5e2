"""Coefficient-map solvers: closed-form reductions, solver agreement,
per-signal independence, and warm-start continuation."""

import numpy as np
import pytest

from consprox.csc import (CscAdmmState, CscFistaState, CscProblem,
                          cbpdn_solve, csc_admm_solve, csc_fista_solve,
                          default_rho)
from consprox.prox import soft_threshold
from consprox.signals import Dictionary, SignalSet
from consprox.trace import DivergenceError


def _unit_filters(rng, m, support):
    filt = rng.standard_normal((m,) + support)
    flat = filt.reshape(m, -1)
    return filt / np.linalg.norm(flat, axis=1).reshape((m,) + (1,) * len(support))


def _problem(seed=5, k=3, m=4, support=(5, 5), frame=(16, 16), lam=0.1):
    rng = np.random.default_rng(seed)
    d = Dictionary(_unit_filters(rng, m, support), frame)
    s = 0.5 * rng.standard_normal((k,) + frame)
    return CscProblem(d, SignalSet(s), lam)


def test_default_rho():
    assert default_rho(0.1) == pytest.approx(11.0)
    assert default_rho(0.0) == pytest.approx(1.0)


def test_delta_filter_reduces_to_soft_threshold():
    # A single impulse filter makes the convolution the identity, so the
    # minimizer is the elementwise shrinkage of the signal.
    rng = np.random.default_rng(0)
    filt = np.zeros((1, 1, 1))
    filt[0, 0, 0] = 1.0
    d = Dictionary(filt, (8, 8))
    s = rng.standard_normal((2, 8, 8))
    lam = 0.3
    expected = soft_threshold(s, lam)
    problem = CscProblem(d, SignalSet(s), lam)
    for solve, kwargs in ((csc_admm_solve, {}),
                          (csc_fista_solve, {"variant": "fista"}),
                          (csc_fista_solve, {"variant": "fista3k"})):
        maps, _ = solve(problem, iters=300, **kwargs)
        assert np.max(np.abs(maps.maps[:, 0] - expected)) <= 1e-6, kwargs


def test_solvers_agree_at_convergence():
    problem = _problem()
    obj = {}
    _, tr = csc_admm_solve(problem, iters=600)
    obj["admm"] = tr.final_objective
    _, tr = csc_fista_solve(problem, iters=600, variant="fista")
    obj["fista"] = tr.final_objective
    _, tr = csc_fista_solve(problem, iters=600, variant="fista3k")
    obj["fista3k"] = tr.final_objective
    best = min(obj.values())
    assert best > 0
    for name, val in obj.items():
        assert (val - best) / best <= 1e-4, (name, val, best)


def test_shrinkage_output_carries_exact_zeros():
    problem = _problem(lam=0.3)
    for maps in (csc_admm_solve(problem, iters=50)[0],
                 csc_fista_solve(problem, iters=50)[0]):
        assert np.count_nonzero(maps.maps == 0.0) > 0


class TestPerSignalIndependence:
    def test_batch_matches_singles_bitwise(self):
        problem = _problem(k=3)
        d, s, lam = problem.dictionary, problem.signals, problem.lam
        for solve, kwargs in ((csc_admm_solve, {}),
                              (csc_fista_solve, {"variant": "fista3k"})):
            batch, _ = solve(problem, iters=60, **kwargs)
            for k in range(3):
                single, _ = solve(
                    CscProblem(d, SignalSet(s.data[k:k + 1]), lam),
                    iters=60, **kwargs)
                assert np.array_equal(batch.maps[k], single.maps[0]), (kwargs, k)

    def test_workers_do_not_change_admm_result(self):
        problem = _problem(k=4)
        one, _ = csc_admm_solve(problem, iters=40, workers=1)
        four, _ = csc_admm_solve(problem, iters=40, workers=4)
        assert np.array_equal(one.maps, four.maps)


class TestWarmStart:
    def test_admm_split_run_matches_straight_run(self):
        problem = _problem()
        state = CscAdmmState.fresh(3, 4, (16, 16), default_rho(0.1))
        csc_admm_solve(problem, iters=30, state=state)
        resumed, _ = csc_admm_solve(problem, iters=30, state=state)
        straight, _ = csc_admm_solve(problem, iters=60)
        assert np.array_equal(resumed.maps, straight.maps)
        assert state.iter_count == 60

    @pytest.mark.parametrize("variant", ["fista", "fista3k"])
    def test_fista_split_run_matches_straight_run(self, variant):
        problem = _problem()
        state = CscFistaState.fresh(3, 4, (16, 16))
        csc_fista_solve(problem, iters=30, variant=variant, state=state)
        resumed, _ = csc_fista_solve(problem, iters=30, variant=variant,
                                     state=state)
        straight, _ = csc_fista_solve(problem, iters=60, variant=variant)
        assert np.array_equal(resumed.maps, straight.maps)


def test_fista3k_steps_never_decrease():
    problem = _problem()
    _, trace = csc_fista_solve(problem, iters=80)
    steps = trace.column("step")[1:]  # row 0 is the starting point
    assert np.all(np.diff(steps) >= 0.0)


def test_divergence_guard_trips_on_ill_scaled_problem():
    # Unnormalized random filters make the aggressive step rule overshoot;
    # the run must abort rather than return garbage.
    rng = np.random.default_rng(5)
    d = Dictionary(rng.standard_normal((4, 5, 5)), (16, 16))
    s = rng.standard_normal((3, 16, 16))
    with pytest.raises(DivergenceError):
        csc_fista_solve(CscProblem(d, SignalSet(s), 0.1), iters=200)


def test_cbpdn_single_signal():
    problem = _problem(k=1)
    maps, obj = cbpdn_solve(problem.dictionary, problem.signals.data[0],
                            lam=0.1, iters=120)
    assert maps.shape == (4, 16, 16)
    direct, trace = csc_admm_solve(problem, iters=120)
    assert np.array_equal(maps, direct.maps[0])
    assert obj == trace.final_objective


def test_validation():
    problem = _problem()
    with pytest.raises(ValueError):
        CscProblem(problem.dictionary, problem.signals, -0.1)
    with pytest.raises(ValueError, match="does not match"):
        CscProblem(problem.dictionary,
                   SignalSet(np.ones((2, 8, 8))), 0.1)
    with pytest.raises(ValueError):
        csc_admm_solve(problem, iters=0)
    with pytest.raises(ValueError):
        csc_admm_solve(problem, relax=2.5)
    with pytest.raises(ValueError):
        csc_fista_solve(problem, variant="nesterov")
    with pytest.raises(ValueError):
        csc_fista_solve(problem, c=0.0)
    bad = CscAdmmState.fresh(2, 4, (16, 16), 1.0)
    with pytest.raises(ValueError, match="state shape"):
        csc_admm_solve(problem, state=bad)
