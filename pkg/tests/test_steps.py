"""Step-size rules, inertial sequences, and the shared fallback chain."""

import math

import numpy as np
import pytest

from consprox.steps import (ConfigError, InertialConfig, LinOp, StepConfig,
                            StepEngine, StepHistory, StepUndefinedError,
                            bb_step, cauchy_step, consensus_alpha,
                            consensus_cauchy, fista3k_step, inertial_next,
                            inertial_start, power_step_bound)

from oracles import golden_section


def _history(z, r):
    z = np.asarray(z)
    r = np.asarray(r)
    h = StepHistory()
    h.observe(np.zeros_like(z), np.zeros_like(r))
    h.observe(z, r)
    return h


class TestBarzilaiBorwein:
    def test_hand_values(self):
        h = _history([1.0, 1.0], [1.0, 2.0])
        assert bb_step(h, "v1") == pytest.approx(0.6, abs=1e-15)
        assert bb_step(h, "v2") == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert bb_step(h, "v3") == pytest.approx(math.sqrt(0.4), abs=1e-15)

    def test_v3_is_geometric_mean(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            z = rng.standard_normal(6)
            r = z + 0.3 * rng.standard_normal(6)  # keep <z, r> positive
            if np.dot(z, r) <= 0:
                continue
            h = _history(z, r)
            v1, v2, v3 = (bb_step(h, m) for m in ("v1", "v2", "v3"))
            assert abs(v3 - math.sqrt(v1 * v2)) <= 1e-12 * v3

    def test_complex_history_matches_real_ratio(self):
        # frequency-domain vectors give the same ratios up to Parseval
        rng = np.random.default_rng(1)
        z = rng.standard_normal(8)
        r = z + 0.1 * rng.standard_normal(8)
        hs = _history(z.astype(complex), r.astype(complex))
        hf = _history(np.fft.fft(z), np.fft.fft(r))
        for m in ("v1", "v2", "v3"):
            assert bb_step(hf, m) == pytest.approx(bb_step(hs, m), rel=1e-12)

    def test_undefined_cases(self):
        with pytest.raises(StepUndefinedError):
            bb_step(StepHistory())
        with pytest.raises(StepUndefinedError):
            bb_step(_history([0.0, 0.0], [1.0, 1.0]))
        with pytest.raises(StepUndefinedError):
            bb_step(_history([1.0, 0.0], [-1.0, 0.0]), "v1")
        with pytest.raises(ConfigError):
            bb_step(_history([1.0], [1.0]), "v9")


class TestCauchy:
    def test_hand_values(self):
        op = LinOp.from_matrix(np.diag([1.0, 2.0]))
        g = np.array([1.0, 1.0])
        assert cauchy_step(g, op) == pytest.approx(0.4, abs=1e-15)
        sup = np.array([True, False])
        assert cauchy_step(g, op, "support", sup) == pytest.approx(1.0,
                                                                   abs=1e-15)
        assert fista3k_step(g, op, sup) == pytest.approx(0.2, abs=1e-15)

    def test_modified_mode(self):
        op = LinOp.from_matrix(np.diag([1.0, 2.0]))
        g = np.array([1.0, 1.0])
        want = math.sqrt(2.0) / math.sqrt(17.0)  # |g| / |A^T A g|
        assert cauchy_step(g, op, "modified") == pytest.approx(want, rel=1e-14)

    def test_matches_exact_line_search(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.standard_normal((6, 4))
            x = rng.standard_normal(4)
            b = rng.standard_normal(6)
            g = a.T @ (a @ x - b)
            if np.linalg.norm(g) < 1e-8:
                continue
            op = LinOp.from_matrix(a)

            def phi(t):
                return 0.5 * np.sum((a @ (x - t * g) - b) ** 2)

            want = golden_section(phi, 0.0, 10.0)
            assert cauchy_step(g, op) == pytest.approx(want, abs=1e-6)

    def test_consensus_matches_exact_line_search(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            mats = [rng.standard_normal((5, 4)) for _ in range(3)]
            bs = [rng.standard_normal(5) for _ in range(3)]
            x = rng.standard_normal(4)
            gbar = np.mean([a.T @ (a @ x - b) for a, b in zip(mats, bs)],
                           axis=0)
            ops = [LinOp.from_matrix(a) for a in mats]

            def phi(t):
                return sum(0.5 * np.sum((a @ (x - t * gbar) - b) ** 2)
                           for a, b in zip(mats, bs))

            want = golden_section(phi, 0.0, 10.0)
            assert consensus_cauchy(gbar, ops) == pytest.approx(want, abs=1e-6)

    def test_consensus_hand_value(self):
        # two replicas, identity and doubled identity operators
        ops = [LinOp.from_matrix(np.eye(2)), LinOp.from_matrix(2 * np.eye(2))]
        assert consensus_cauchy(np.array([1.0, 0.0]), ops) == pytest.approx(
            0.4, abs=1e-15)

    def test_single_operator_reduces_to_plain(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((5, 3))
        g = rng.standard_normal(3)
        op = LinOp.from_matrix(a)
        assert consensus_cauchy(g, [op]) == pytest.approx(
            cauchy_step(g, op), rel=1e-14)

    def test_undefined_cases(self):
        op = LinOp.from_matrix(np.eye(2))
        with pytest.raises(StepUndefinedError):
            cauchy_step(np.zeros(2), op)
        with pytest.raises(StepUndefinedError):
            cauchy_step(np.ones(2), op, "support", np.zeros(2, dtype=bool))
        with pytest.raises(ConfigError):
            cauchy_step(np.ones(2), op, "nope")
        with pytest.raises(ConfigError):
            consensus_cauchy(np.ones(2), [])
        null_op = LinOp.from_matrix(np.zeros((2, 2)))
        with pytest.raises(StepUndefinedError):
            cauchy_step(np.ones(2), null_op)


class TestInertial:
    def test_hand_values(self):
        nes = InertialConfig()
        t2, g2 = inertial_next(nes, 1.0, 2)
        assert t2 == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-12)
        assert g2 == 0.0
        lin = InertialConfig(scheme="linear", b=2.0)
        assert inertial_next(lin, 1.5, 3)[0] == pytest.approx(2.0, abs=1e-15)
        gen = InertialConfig(scheme="generalized", a=50.0, b=2.0)
        assert inertial_next(gen, 1.0, 2)[0] == pytest.approx(25.5, abs=1e-15)

    @pytest.mark.parametrize("cfg", [
        InertialConfig(),
        InertialConfig(scheme="linear", b=2.0),
        InertialConfig(scheme="linear", b=3.5),
        InertialConfig(scheme="generalized", a=50.0, b=2.0),
        InertialConfig(scheme="generalized", a=80.0, b=3.0),
    ], ids=["nesterov", "linear-b2", "linear-b3.5", "gen-default", "gen-80-3"])
    def test_growth_condition_exact_to_ten_thousand(self, cfg):
        t_prev = inertial_start(cfg)
        for k in range(2, 10_001):
            t, gamma = inertial_next(cfg, t_prev, k)
            assert t * t - t <= t_prev * t_prev  # exact float comparison
            assert 0.0 <= gamma < 1.0
            t_prev = t

    def test_start_elements(self):
        assert inertial_start(InertialConfig()) == 1.0
        assert inertial_start(InertialConfig(scheme="linear", b=3.0)) == 1.0
        gen = InertialConfig(scheme="generalized", a=50.0, b=2.0)
        assert inertial_start(gen) == 25.0
        small = InertialConfig(scheme="generalized", a=1.0, b=2.0)
        assert inertial_start(small) == 1.0  # floored for the weight sign

    def test_validation(self):
        with pytest.raises(ConfigError):
            InertialConfig(scheme="other")
        with pytest.raises(ConfigError):
            InertialConfig(scheme="linear", b=1.5)
        with pytest.raises(ConfigError):
            InertialConfig(scheme="generalized", a=0.5, b=2.0)
        with pytest.raises(ValueError):
            inertial_next(InertialConfig(), 0.5, 2)
        with pytest.raises(ValueError):
            inertial_next(InertialConfig(), 1.0, 1)


class TestConsensusAlpha:
    def test_hand_values(self):
        assert consensus_alpha(1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
        assert consensus_alpha(0.1, 10.0) == pytest.approx(0.05, abs=1e-15)
        assert consensus_alpha(0.7, 0.0) == 0.7

    def test_validation(self):
        with pytest.raises(ValueError):
            consensus_alpha(0.0, 1.0)
        with pytest.raises(ValueError):
            consensus_alpha(1.0, -1.0)


class TestPowerBound:
    def test_known_spectrum(self):
        op = LinOp.from_matrix(np.diag([3.0, 1.0, 0.5]))
        got = power_step_bound([op], np.zeros(3), np.random.default_rng(0),
                               iters=200)
        assert got == pytest.approx(1.0 / 9.0, rel=1e-9)

    def test_averaged_normal_operator(self):
        ops = [LinOp.from_matrix(np.diag([2.0, 0.0])),
               LinOp.from_matrix(np.diag([0.0, 2.0]))]
        got = power_step_bound(ops, np.zeros(2), np.random.default_rng(1),
                               iters=50)
        assert got == pytest.approx(0.5, rel=1e-9)

    def test_safe_step_contract(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((8, 6))
        lam = float(np.linalg.eigvalsh(a.T @ a).max())
        got = power_step_bound([LinOp.from_matrix(a)], np.zeros(6), rng,
                               iters=300)
        assert 0.95 * got * lam <= 1.0 + 1e-9


class TestStepEngine:
    def _ops(self):
        return [LinOp.from_matrix(np.diag([1.0, 2.0]))]

    def test_first_step_falls_back_to_cauchy(self):
        engine = StepEngine(StepConfig(rule="bb3"), self._ops())
        g = np.array([1.0, 1.0])
        engine.observe(np.zeros(2), g)
        assert engine.step(g) == pytest.approx(0.4, abs=1e-15)

    def test_reuses_last_accepted_step(self):
        engine = StepEngine(StepConfig(rule="bb3"), self._ops())
        g = np.array([1.0, 1.0])
        engine.observe(np.zeros(2), g)
        first = engine.step(g)
        engine.observe(np.zeros(2), g)  # zero differences: BB undefined
        assert engine.step(g) == first

    def test_zero_gradient_reaches_power_bound(self):
        engine = StepEngine(StepConfig(rule="bb3"), self._ops())
        g = np.zeros(2)
        engine.observe(np.zeros(2), g)
        alpha = engine.step(g)
        assert alpha == pytest.approx(0.25, rel=1e-6)  # 1 / max(diag)^2

    def test_fixed_value_without_operators(self):
        engine = StepEngine(StepConfig(rule="bb3", fixed=0.125))
        engine.observe(np.zeros(2), np.ones(2))
        assert engine.step(np.ones(2)) == 0.125

    def test_exhausted_chain_raises(self):
        engine = StepEngine(StepConfig(rule="bb3"))
        engine.observe(np.zeros(2), np.ones(2))
        with pytest.raises(ConfigError):
            engine.step(np.ones(2))

    def test_fixed_rule(self):
        engine = StepEngine(StepConfig(rule="fixed", fixed=0.3))
        assert engine.step(np.ones(2)) == 0.3

    def test_bb_takes_over_once_ready(self):
        engine = StepEngine(StepConfig(rule="bb3"), self._ops())
        x0, g0 = np.zeros(2), np.array([2.0, 2.0])
        engine.observe(x0, g0)
        engine.step(g0)
        x1, g1 = np.array([1.0, 1.0]), np.array([3.0, 4.0])
        engine.observe(x1, g1)
        want = math.sqrt(2.0 / 5.0)  # |dx| / |dg|
        assert engine.step(g1) == pytest.approx(want, abs=1e-15)

    def test_fista3k_never_decreases(self):
        engine = StepEngine(StepConfig(rule="fista3k", c=0.2), self._ops())
        g = np.array([1.0, 1.0])
        engine.observe(np.zeros(2), g)
        steps = [engine.step(g, support=np.zeros(2, dtype=bool))]
        for sup in ([True, False], [False, True], [True, True]):
            engine.observe(np.zeros(2), g)
            steps.append(engine.step(g, support=np.array(sup)))
        assert all(b >= a for a, b in zip(steps, steps[1:]))
        # empty-support bootstrap equals the scaled unrestricted step
        assert steps[0] == pytest.approx(0.2 * 0.4, abs=1e-15)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            StepConfig(rule="unknown")
        with pytest.raises(ConfigError):
            StepConfig(rule="fixed")
        with pytest.raises(ConfigError):
            StepConfig(rule="bb3", c=0.0)
        with pytest.raises(ConfigError):
            StepEngine(StepConfig(rule="cauchy"))
        with pytest.raises(ConfigError):
            StepEngine(StepConfig(rule="fista3k"))
