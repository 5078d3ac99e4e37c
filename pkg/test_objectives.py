#!/usr/bin/env python3
"""
Local objective tests
Derivatives against finite differences, convexity constants, data ingestion.
"""

import numpy as np
import pytest

import objectives as obj_mod
from objectives import LogisticObjective, QuadraticObjective
from sim_errors import DataError, ObjectiveError


def _fd_gradient(fn, x, h=1e-6):
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


@pytest.fixture
def logistic():
    return obj_mod.gen_synthetic_logistic(1, 15, 4, seed=8, lambda_reg=0.1)[0]


class TestQuadratic:
    def test_derivatives(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        b = np.array([1.0, -1.0])
        q = QuadraticObjective(A=A, b=b)
        x = np.array([0.3, -0.7])
        value, grad, hess = obj_mod.value_grad_hess(q, x)
        assert value == pytest.approx(0.5 * x @ A @ x - b @ x)
        np.testing.assert_allclose(grad, A @ x - b)
        np.testing.assert_allclose(hess, A)

    def test_constants_are_extreme_eigenvalues(self):
        q = QuadraticObjective(A=np.diag([0.5, 3.0, 2.0]), b=np.zeros(3))
        c = obj_mod.convexity_constants(q)
        assert c.v == pytest.approx(0.5)
        assert c.ell == pytest.approx(3.0)

    def test_rejects_indefinite(self):
        with pytest.raises(ObjectiveError, match="positive definite"):
            QuadraticObjective(A=np.diag([1.0, -1.0]), b=np.zeros(2))

    def test_synthetic_spectrum(self):
        for q in obj_mod.gen_synthetic_quadratic(4, 5, seed=2, condition=8.0):
            eig = np.linalg.eigvalsh(q.A)
            assert eig[0] == pytest.approx(1.0)
            assert eig[-1] <= 8.0 + 1e-9


class TestLogistic:
    def test_gradient_matches_finite_differences(self, logistic):
        x = np.random.default_rng(0).standard_normal(4)
        fd = _fd_gradient(lambda z: logistic.evaluate(z)[0], x)
        np.testing.assert_allclose(obj_mod.gradient(logistic, x), fd, atol=1e-6)

    def test_hessian_matches_finite_differences(self, logistic):
        x = np.random.default_rng(1).standard_normal(4)
        H = obj_mod.hessian(logistic, x)
        fd = np.vstack([_fd_gradient(lambda z: logistic.gradient(z)[i], x) for i in range(4)])
        np.testing.assert_allclose(H, fd, atol=1e-6)
        np.testing.assert_allclose(H, H.T)

    def test_large_margins_stay_finite(self, logistic):
        value, grad, hess = logistic.evaluate(np.full(4, 1e4))
        assert np.isfinite(value)
        assert np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))

    def test_constants_bound_the_hessian(self, logistic):
        c = obj_mod.convexity_constants(logistic)
        assert c.v == pytest.approx(0.1)
        rng = np.random.default_rng(2)
        for _ in range(20):
            eig = np.linalg.eigvalsh(logistic.hessian(rng.standard_normal(4) * 3))
            assert c.v - 1e-12 <= eig[0]
            assert eig[-1] <= c.ell + 1e-12

    def test_unregularized_is_not_strongly_convex(self):
        obj = obj_mod.gen_synthetic_logistic(1, 5, 2, seed=0, lambda_reg=0.0)[0]
        with pytest.raises(ObjectiveError, match="not strongly convex"):
            obj_mod.convexity_constants(obj)

    def test_dimension_mismatch(self, logistic):
        with pytest.raises(ObjectiveError, match="dimension"):
            obj_mod.gradient(logistic, np.zeros(3))

    def test_labels_validated(self):
        with pytest.raises(ObjectiveError, match="labels"):
            LogisticObjective(features=np.ones((2, 2)), labels=np.array([1.0, 2.0]))

    def test_synthetic_is_seeded(self):
        a = obj_mod.gen_synthetic_logistic(3, 4, 2, seed=5)
        b = obj_mod.gen_synthetic_logistic(3, 4, 2, seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.features, y.features)
            np.testing.assert_array_equal(x.labels, y.labels)


def test_aggregate_constants():
    agg = obj_mod.aggregate_constants([obj_mod.ConvexityConstants(1.0, 4.0),
                                       obj_mod.ConvexityConstants(0.5, 2.0)])
    assert (agg.v, agg.ell) == (0.5, 4.0)


class TestCsv:
    def test_labels_and_values(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,0.5,2\n0,1.5,-1\n-1,0,0\n")
        samples = obj_mod.load_csv(path)
        assert [lab for lab, _ in samples] == [1.0, -1.0, -1.0]
        np.testing.assert_allclose(samples[1][1], [1.5, -1.0])

    @pytest.mark.parametrize("body,line,fragment", [
        ("1,0.5,2\n1,0.5\n", 2, "inconsistent dimension"),
        ("1,0.5,2\n1,abc,2\n", 2, "malformed"),
        ("3,0.5,2\n", 1, "outside"),
        ("1\n", 1, "at least one feature"),
    ])
    def test_errors_carry_line_numbers(self, tmp_path, body, line, fragment):
        path = tmp_path / "bad.csv"
        path.write_text(body)
        with pytest.raises(DataError, match=fragment) as info:
            obj_mod.load_csv(path)
        assert info.value.line == line

    def test_partition_restores_agents(self, tmp_path):
        objs = obj_mod.gen_synthetic_logistic(3, 4, 2, seed=1, lambda_reg=0.2)
        path = tmp_path / "data.csv"
        obj_mod.write_csv(obj_mod.objectives_to_samples(objs), path)
        parts = obj_mod.partition_round_robin(obj_mod.load_csv(path), 3, lambda_reg=0.2)
        for original, restored in zip(objs, parts):
            np.testing.assert_array_equal(original.features, restored.features)
            np.testing.assert_array_equal(original.labels, restored.labels)

    def test_partition_needs_a_sample_per_agent(self):
        samples = [(1.0, np.zeros(2))] * 2
        with pytest.raises(DataError):
            obj_mod.partition_round_robin(samples, 3, lambda_reg=0.1)
