#!/usr/bin/env python3
"""
Engine tests
Initialization, the three phases, counters, the Newton oracle and diagnostics.
"""

import numpy as np
import pytest

import engine
import objectives as obj_mod
from conftest import quadratic_problem, run_config
from engine import BitAccounting, ThresholdSchedule, Variant
from netgraph import Graph, ring_graph
from sim_errors import AssumptionError, DiagnosticError, ObjectiveError, SolverError


class TestInit:
    def test_zero_state(self, small_quadratic):
        graph, objs = small_quadratic
        sim = engine.init(graph, objs, run_config(3, seed=4))
        for a in sim.agents:
            assert not a.y_self.any() and not a.phi.any()
            assert all(not y.any() for y in a.y_neighbors.values())
            assert a.refresh_count == 1
        assert sim.record.rows[0].iter == 0
        assert sim.record.rows[0].err == pytest.approx(1.0)

    def test_seeded_start(self, small_quadratic):
        graph, objs = small_quadratic
        a = engine.init(graph, objs, run_config(3, seed=4))
        b = engine.init(graph, objs, run_config(3, seed=4))
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.Y - a.X, -a.X)

    def test_rejects_bipartite_graph(self):
        objs = obj_mod.gen_synthetic_quadratic(4, 2, seed=0)
        with pytest.raises(AssumptionError, match="L_s"):
            engine.init(ring_graph(4), objs, run_config(2))

    def test_rejects_isolated_agent(self):
        objs = obj_mod.gen_synthetic_quadratic(1, 2, seed=0)
        with pytest.raises(AssumptionError):
            engine.init(Graph(n=1, edges=frozenset()), objs, run_config(2))

    def test_dimension_checks(self, small_quadratic):
        graph, objs = small_quadratic
        with pytest.raises(ObjectiveError):
            engine.init(graph, objs[:-1], run_config(3))
        with pytest.raises(ObjectiveError, match="compressor dimension"):
            engine.init(graph, objs, run_config(4))


class TestVariants:
    @pytest.mark.parametrize("schedule,compressor,expected", [
        (ThresholdSchedule.zero(), 'identity', Variant.DQM),
        (ThresholdSchedule.geometric(1.0, 0.9), 'identity', Variant.C_DQM),
        (ThresholdSchedule.zero(), 'det_quant', Variant.Q_DQM),
        (ThresholdSchedule.geometric(1.0, 0.9), 'stoch_quant', Variant.CC_DQM),
    ])
    def test_derived_from_schedule_and_compressor(self, schedule, compressor, expected):
        assert run_config(3, compressor=compressor, schedule=schedule).variant is expected

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            ThresholdSchedule.geometric(0.0, 0.5)
        with pytest.raises(ValueError):
            ThresholdSchedule.geometric(1.0, 1.0)
        assert ThresholdSchedule.geometric(2.0, 0.5).mu(3) == pytest.approx(0.25)
        assert ThresholdSchedule.zero().mu(0) == 0.0


class TestPhases:
    def _at_fixed_point(self, graph, diagnostics=False):
        objs = obj_mod.gen_synthetic_quadratic(graph.n, 2, seed=5)
        x_star, _ = engine.centralized_solve(objs)
        cfg = run_config(2, c=2.0, diagnostics=diagnostics, tol=0.0)
        sim = engine.init(graph, objs, cfg, x0=np.tile(x_star, (graph.n, 1)), x_star=x_star)
        for i, a in enumerate(sim.agents):
            a.y_self = x_star.copy()
            a.y_neighbors = {j: x_star.copy() for j in a.neighbors}
            a.phi = -objs[i].gradient(x_star)
            a.hess_version += 1
            sim._refresh_factor(a)
        if diagnostics:
            sim.lyapunov.R = sim.lyapunov.R_star.copy()
        return sim

    def test_fixed_point_is_stationary(self, k3):
        sim = self._at_fixed_point(k3)
        for i in range(3):
            np.testing.assert_allclose(sim.local_primal_step(i), sim.x_star, atol=1e-12)

    def test_lyapunov_vanishes_at_fixed_point(self, k3):
        sim = self._at_fixed_point(k3, diagnostics=True)
        v = engine.lyapunov_diagnostics(sim)
        assert (v.primal, v.dual, v.error) == (0.0, 0.0, 0.0)

    def test_fixed_point_survives_iterations(self, k3):
        sim = self._at_fixed_point(k3, diagnostics=True)
        X_star = np.tile(sim.x_star, (3, 1))
        for _ in range(20):
            sim.iterate()
            assert np.sum((sim.X - X_star) ** 2) <= 1e-20
        assert engine.lyapunov_diagnostics(sim).total <= 1e-20

    def test_duals_sum_to_zero(self, small_logistic):
        graph, objs = small_logistic
        cfg = run_config(4, compressor='det_quant', bits=3,
                         schedule=ThresholdSchedule.geometric(0.5, 0.85), max_iter=40)
        sim = engine.init(graph, objs, cfg)
        for _ in range(40):
            sim.iterate()
            Phi = sim.Phi
            scale = max(1.0, float(np.abs(Phi).max()))
            assert np.abs(Phi.sum(axis=0)).max() <= 1e-10 * scale

    def test_innovation_equal_to_threshold_triggers(self, small_quadratic):
        graph, objs = small_quadratic
        first = engine.init(graph, objs, run_config(3))
        x_next = [first.local_primal_step(i) for i in range(graph.n)]
        # y_0 = 0, so the first innovation is x_next itself
        norm = float(np.linalg.norm(x_next[0]))
        for alpha, fired in ((norm, 1), (np.nextafter(norm, np.inf), 0)):
            cfg = run_config(3, schedule=ThresholdSchedule.geometric(alpha, 0.5))
            sim = engine.init(graph, objs, cfg, x_star=first.x_star)
            sim.trigger_and_communicate(x_next)
            assert sim.agents[0].trigger_count == fired

    def test_neighbor_copies_stay_consistent(self, small_logistic):
        graph, objs = small_logistic
        cfg = run_config(4, compressor='det_quant', bits=3,
                         schedule=ThresholdSchedule.geometric(0.5, 0.8), max_iter=25)
        sim = engine.init(graph, objs, cfg)
        for _ in range(25):
            sim.iterate()
            for a in sim.agents:
                for j in a.neighbors:
                    np.testing.assert_array_equal(sim.agents[j].y_neighbors[a.index], a.y_self)

    def test_counters_are_cumulative(self, small_logistic):
        graph, objs = small_logistic
        cfg = run_config(4, compressor='det_quant', bits=3,
                         schedule=ThresholdSchedule.geometric(0.5, 0.8), max_iter=40)
        record = engine.init(graph, objs, cfg).run()
        bits = record.column('bits_cum')
        rounds = record.column('rounds_cum')
        assert np.all(np.diff(bits) >= 0) and np.all(np.diff(rounds) >= 0)
        assert rounds[-1] == record.column('triggers')[1:].sum()

    def test_per_link_bits(self, small_quadratic):
        graph, objs = small_quadratic
        sim = engine.init(graph, objs, run_config(3, compressor='det_quant', bits=4))
        row = sim.iterate()
        assert row.triggers == graph.n
        assert row.bits_cum == (32 + 4 * 3) * int(graph.degrees.sum())

    def test_per_broadcast_bits(self, small_quadratic):
        graph, objs = small_quadratic
        cfg = run_config(3, compressor='det_quant', bits=4, bit_accounting=BitAccounting.PER_BROADCAST)
        row = engine.init(graph, objs, cfg).iterate()
        assert row.bits_cum == (32 + 4 * 3) * graph.n

    def test_large_threshold_silences_everyone(self, small_quadratic):
        graph, objs = small_quadratic
        cfg = run_config(3, schedule=ThresholdSchedule.geometric(1e9, 0.5))
        sim = engine.init(graph, objs, cfg)
        row = sim.iterate()
        assert row.triggers == 0 and row.bits_cum == 0 and row.hess_refresh == 0
        assert all(not a.y_self.any() for a in sim.agents)


class TestHessianCache:
    def _run(self, graph, objs, cache):
        cfg = run_config(4, compressor='det_quant', bits=3, cache_hessian=cache,
                         schedule=ThresholdSchedule.geometric(0.3, 0.85), max_iter=60)
        sim = engine.init(graph, objs, cfg)
        sim.run()
        return sim

    def test_cache_matches_refactorization(self, small_logistic):
        graph, objs = small_logistic
        cached = self._run(graph, objs, True)
        fresh = self._run(graph, objs, False)
        np.testing.assert_array_equal(cached.X, fresh.X)
        np.testing.assert_array_equal(cached.record.column('err'), fresh.record.column('err'))

    def test_refresh_count_is_triggers_plus_one(self, small_logistic):
        graph, objs = small_logistic
        sim = self._run(graph, objs, True)
        for a in sim.agents:
            assert a.refresh_count == a.trigger_count + 1


class TestWorkers:
    def test_pool_gives_identical_results(self, small_logistic):
        graph, objs = small_logistic
        outs = []
        for workers in (1, 3):
            cfg = run_config(4, compressor='stoch_quant', bits=3, workers=workers,
                             schedule=ThresholdSchedule.geometric(0.5, 0.8), max_iter=30, seed=2)
            sim = engine.init(graph, objs, cfg)
            sim.run()
            outs.append(sim.X)
        np.testing.assert_array_equal(outs[0], outs[1])


class TestCentralizedSolve:
    def test_quadratic_in_one_step(self):
        objs = obj_mod.gen_synthetic_quadratic(3, 4, seed=1)
        x, _ = engine.centralized_solve(objs)
        A = sum(o.A for o in objs)
        b = sum(o.b for o in objs)
        np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-10)

    def test_logistic_gradient_vanishes(self):
        objs = obj_mod.gen_synthetic_logistic(4, 10, 3, seed=2, lambda_reg=0.05)
        x, _ = engine.centralized_solve(objs)
        grad = obj_mod.total_value_grad_hess(objs, x)[1]
        assert np.linalg.norm(grad) <= 1e-10

    def test_gives_up(self):
        objs = obj_mod.gen_synthetic_logistic(2, 10, 3, seed=2, lambda_reg=0.05)
        with pytest.raises(SolverError):
            engine.centralized_solve(objs, tol=0.0, max_iter=2)

    def test_failed_line_search_raises(self, monkeypatch):
        objs = obj_mod.gen_synthetic_quadratic(2, 3, seed=0)

        def uphill(objectives, x):
            # every Newton step increases both the value and the gradient norm
            return float(x @ x), np.ones(3) * (1.0 + np.linalg.norm(x)), np.eye(3)

        monkeypatch.setattr(obj_mod, 'total_value_grad_hess', uphill)
        with pytest.raises(SolverError, match="line search"):
            engine.centralized_solve(objs)


class TestRun:
    def test_stops_at_tolerance(self, small_quadratic):
        graph, objs = small_quadratic
        record = engine.init(graph, objs, run_config(3, c=1.0, max_iter=2000, tol=1e-8)).run()
        assert record.meta['stop_reason'] == 'tol'
        assert record.final.err <= 1e-8

    def test_optimality_residuals_at_tolerance(self, small_quadratic, rng):
        graph, objs = small_quadratic
        x_star, _ = engine.centralized_solve(objs)
        x0 = np.tile(x_star, (graph.n, 1)) + 1e-3 * rng.standard_normal((graph.n, 3))
        record = engine.init(graph, objs, run_config(3, max_iter=20000, tol=1e-14),
                             x0=x0, x_star=x_star).run()
        assert record.meta['stop_reason'] == 'tol'
        done = [r for r in record.rows if r.err <= 1e-12]
        assert done
        for row in done:
            assert row.consensus_err <= 1e-6
            assert row.dual_residual <= 1e-6

    def test_on_row_callback(self, small_quadratic):
        graph, objs = small_quadratic
        seen = []
        engine.init(graph, objs, run_config(3, max_iter=5, tol=0.0)).run(on_row=seen.append)
        assert [r.iter for r in seen] == [1, 2, 3, 4, 5]

    def test_metrics_csv(self, small_quadratic, tmp_path):
        graph, objs = small_quadratic
        record = engine.init(graph, objs, run_config(3, max_iter=3, tol=0.0)).run()
        path = engine.write_metrics_csv(record, tmp_path / "m.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(engine.METRIC_COLUMNS)
        assert len(lines) == 5
        err = float(lines[2].split(',')[1])
        assert err == record.rows[1].err


class TestMatrixForm:
    def test_agrees_with_agent_loop(self):
        graph, objs = quadratic_problem(7, 3, seed=21)
        cfg = run_config(3, c=1.5, max_iter=30, tol=0.0)
        sim = engine.init(graph, objs, cfg)
        oracle = engine.dqm_oracle_trajectory(graph, objs, 1.5, sim.X, 30)
        for k in range(1, 31):
            sim.iterate()
            np.testing.assert_allclose(sim.X, oracle[k], atol=1e-10, rtol=0)


class TestDiagnostics:
    def test_dual_consistency_and_components(self, small_quadratic):
        graph, objs = small_quadratic
        cfg = run_config(3, c=1.0, diagnostics=True, max_iter=40, tol=0.0)
        sim = engine.init(graph, objs, cfg)
        sim.run()
        v = engine.lyapunov_diagnostics(sim)
        assert v.primal >= 0 and v.dual >= 0 and v.error >= 0
        assert sim.record.final.V_total == pytest.approx(v.total)

    def test_tampered_dual_is_detected(self, small_quadratic):
        graph, objs = small_quadratic
        sim = engine.init(graph, objs, run_config(3, diagnostics=True))
        sim.iterate()
        sim.agents[0].phi = sim.agents[0].phi + 1.0
        with pytest.raises(DiagnosticError):
            sim.lyapunov.check_dual(sim.Phi, sim.k)

    def test_requires_enabled_diagnostics(self, small_quadratic):
        graph, objs = small_quadratic
        with pytest.raises(DiagnosticError):
            engine.lyapunov_diagnostics(engine.init(graph, objs, run_config(3)))

    def test_error_recursion_deterministic(self, small_logistic):
        graph, objs = small_logistic
        cfg = run_config(4, compressor='det_quant', bits=5, record_trajectory=True,
                         schedule=ThresholdSchedule.geometric(0.5, 0.9), max_iter=60, tol=0.0)
        sim = engine.init(graph, objs, cfg)
        sim.run()
        report = engine.error_recursion_check([sim.trajectory], cfg.compressor.delta_bound)
        assert report.untriggered_ok
        assert report.min_slack >= -1e-3

    def test_zero_delta_with_lossy_compressor_is_flagged(self, small_logistic):
        graph, objs = small_logistic
        cfg = run_config(4, compressor='det_quant', bits=2, record_trajectory=True, max_iter=5, tol=0.0)
        sim = engine.init(graph, objs, cfg)
        sim.run()
        with pytest.raises(DiagnosticError, match="delta = 0"):
            engine.error_recursion_check([sim.trajectory], 0.0)
