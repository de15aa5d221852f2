import numpy as np
import pytest

from adfs_lab.baselines import (
    FlatProblem,
    flat_grad,
    flat_value,
    point_saga,
    pool_objectives,
    reference_optimum,
)
from adfs_lab.instances import random_objectives
from adfs_lab.objective import LossKind, Sample, primal_value
from adfs_lab.rng import generator


class TestFlatProblem:
    def test_pooled_objective_matches_distributed(self, rng):
        objs = random_objectives(rng, 3, 4, 3)
        flat = pool_objectives(objs)
        for _ in range(5):
            theta = rng.normal(size=3)
            a = flat_value(flat, theta)
            b = primal_value(objs, theta)
            assert abs(a - b) <= 1e-10 * max(1.0, abs(a))

    def test_sample_count(self, rng):
        objs = random_objectives(rng, 2, 5, 2)
        flat = pool_objectives(objs)
        assert flat.n_samples == 10


class TestPointSaga:
    def test_quadratic_single_sample(self):
        s = Sample(np.array([1.0, 0.0]), 2.0)
        flat = FlatProblem((s,), 1.0, LossKind.SQUARED)
        theta_star, f_star = reference_optimum(flat)
        record, theta = point_saga(flat, 200, seed=0, f_star=f_star, log_every=200)
        assert np.max(np.abs(theta - theta_star)) <= 1e-10

    def test_gradient_table_size(self, rng):
        objs = random_objectives(rng, 2, 3, 2)
        flat = pool_objectives(objs)
        record, _ = point_saga(flat, 10, seed=0, log_every=10)
        assert record.meta["n_samples"] == 6

    def test_reaches_target_within_budget(self):
        # nm = 100, kappa_s ~ 50: time to 1e-6 within 8 (nm + sqrt(nm kappa_s)) log(1/eps)
        rng = generator("saga-budget", 0)
        n_samp, d = 100, 5
        target_kappa = 50.0
        scale = np.sqrt((target_kappa - 1.0) * 4.0 / (n_samp * d))
        samples = tuple(
            Sample(scale * rng.normal(size=d), 1.0 if rng.random() < 0.5 else -1.0)
            for _ in range(n_samp)
        )
        flat = FlatProblem(samples, 1.0, LossKind.LOGISTIC)
        kappa_s = 1.0 + sum(0.25 * s.squared_norm for s in samples)
        assert 25 <= kappa_s <= 100  # sanity: the regime the bound targets
        theta_star, f_star = reference_optimum(flat, tol=1e-7)
        gap0 = flat_value(flat, np.zeros(d)) - f_star
        budget = int(8 * (n_samp + np.sqrt(n_samp * kappa_s)) * np.log(gap0 / 1e-6))
        record, _ = point_saga(flat, budget, seed=1, f_star=f_star, log_every=50,
                               stop_at_subopt=1e-6)
        assert record.time_to(1e-6) <= budget

    def test_agrees_with_reference_on_smooth_problems(self, rng):
        objs = random_objectives(rng, 2, 4, 2)
        flat = pool_objectives(objs)
        theta_star, f_star = reference_optimum(flat, tol=1e-9)
        _, theta = point_saga(flat, 40_000, seed=3, log_every=40_000)
        assert np.linalg.norm(theta - theta_star) <= 1e-6

    def test_nonsmooth_rejected(self, rng):
        objs = random_objectives(rng, 2, 2, 2, loss=LossKind.ABSOLUTE)
        flat = pool_objectives(objs)
        with pytest.raises(ValueError, match="smooth"):
            point_saga(flat, 10, seed=0)

    def test_unit_time_per_iteration(self, rng):
        objs = random_objectives(rng, 2, 3, 2)
        flat = pool_objectives(objs)
        record, _ = point_saga(flat, 300, seed=0, log_every=100)
        times = [r.time for r in record.rows]
        assert times == [0.0, 100.0, 200.0, 300.0]


class TestReferenceOptimum:
    def test_squared_matches_normal_equations(self, rng):
        objs = random_objectives(rng, 2, 5, 3, loss=LossKind.SQUARED)
        flat = pool_objectives(objs)
        theta, f_star = reference_optimum(flat)
        feats = flat.feature_matrix
        expect = np.linalg.solve(
            feats.T @ feats + flat.sigma_total * np.eye(3), feats.T @ flat.labels
        )
        assert np.max(np.abs(theta - expect)) <= 1e-10

    def test_gradient_norm_below_threshold(self, rng):
        objs = random_objectives(rng, 2, 4, 3)
        flat = pool_objectives(objs)
        tol = 3e-6
        theta, _ = reference_optimum(flat, tol=tol)
        assert np.linalg.norm(flat_grad(flat, theta)) <= tol * flat.sigma_total

    def test_absolute_requires_ns_problem(self, rng):
        objs = random_objectives(rng, 2, 2, 2, loss=LossKind.ABSOLUTE)
        flat = pool_objectives(objs)
        with pytest.raises(ValueError, match="non-smooth augmented problem"):
            reference_optimum(flat)

    def test_lower_envelope_for_solver_logs(self, rng):
        from adfs_lab.adfs import run_adfs
        from adfs_lab.instances import random_problem

        prob = random_problem(rng, n=3, m=3, d=2)
        flat = pool_objectives(prob.objectives)
        _, f_star = reference_optimum(flat)
        res = run_adfs(prob, 2000, seed=0, log_every=100, f_star=f_star)
        for row in res.record.rows:
            assert row.objective >= f_star - 1e-9
