"""Single-machine baselines: Point-SAGA and a deterministic reference solver.

The reference solver provides the high-accuracy optimum that every
suboptimality column is measured against; Point-SAGA is the comparison
algorithm for the idealized-time experiments (one time unit per prox).
"""

from dataclasses import dataclass

import numpy as np

from .adfs import run_ns_adfs
from .objective import LossKind, loss_grad, loss_value, prox_sample
from .records import LogRow, RunRecord
from .rng import generator
from .topology import symmetric_eigensolve

__all__ = ["FlatProblem", "pool_objectives", "flat_value", "flat_grad",
           "point_saga", "reference_optimum"]


@dataclass(frozen=True)
class FlatProblem:
    """All samples pooled on one machine; sigma_total = sum_i sigma_i keeps the
    pooled objective equal to the distributed one."""

    samples: tuple
    sigma_total: float
    loss: LossKind

    @property
    def n_samples(self):
        return len(self.samples)

    @property
    def feature_matrix(self):
        return np.stack([s.features for s in self.samples])

    @property
    def labels(self):
        return np.array([s.label for s in self.samples])


def pool_objectives(objectives) -> FlatProblem:
    loss = objectives[0].loss
    samples = tuple(s for obj in objectives for s in obj.samples)
    sigma_total = float(sum(obj.sigma for obj in objectives))
    return FlatProblem(samples=samples, sigma_total=sigma_total, loss=loss)


def flat_value(problem: FlatProblem, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    z = problem.feature_matrix @ theta
    return float(np.sum(loss_value(problem.loss, z, problem.labels))) + (
        0.5 * problem.sigma_total * float(theta @ theta)
    )


def flat_grad(problem: FlatProblem, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    feats = problem.feature_matrix
    z = feats @ theta
    return feats.T @ np.asarray(loss_grad(problem.loss, z, problem.labels)) + (
        problem.sigma_total * theta
    )


def point_saga(problem: FlatProblem, iters, seed, f_star=None, log_every=100,
               stop_at_subopt=None):
    """Variance-reduced stochastic proximal point with a gradient table.

    Splits F = (1/N) sum_k G_k with G_k = N f_k + (sigma_total/2)||.||^2, so
    each G_k is sigma_total-strongly convex and (N L_k + sigma_total)-smooth.
    Step size gamma = (sqrt((N-1)^2 + 4 N L/mu) - (N-1)) / (2 L N); the prox of
    gamma G_k reduces to the sample prox after an isotropic shrinkage.
    """
    if not problem.loss.is_smooth:
        raise ValueError("Point-SAGA needs a smooth loss")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n_samp = problem.n_samples
    d = problem.samples[0].features.shape[0]
    lg = problem.loss.scalar_smoothness
    l_each = np.array([n_samp * lg * s.squared_norm for s in problem.samples])
    big_l = float(l_each.max()) + problem.sigma_total
    mu = problem.sigma_total
    gamma = (np.sqrt((n_samp - 1.0) ** 2 + 4.0 * n_samp * big_l / mu) - (n_samp - 1.0)) / (
        2.0 * big_l * n_samp
    )
    shrink = 1.0 + gamma * problem.sigma_total
    eta_inner = gamma * n_samp / shrink

    rng = generator("point-saga", seed)
    x = np.zeros(d)
    table = np.zeros((n_samp, d))
    gbar = np.zeros(d)
    warm = np.zeros(n_samp)

    def log_row(rows, t):
        obj = flat_value(problem, x)
        sub = None if f_star is None else obj - f_star
        rows.append(LogRow(t, float(t), obj, sub, None, "computation"))
        return sub

    rows = []
    log_row(rows, 0)
    for t in range(iters):
        j = int(rng.integers(n_samp))
        w = x + gamma * (table[j] - gbar)
        s = problem.samples[j]
        x = prox_sample(s, problem.loss, w / shrink, eta_inner, warm[j])
        warm[j] = float(s.features @ x)
        g_new = (w - x) / gamma
        gbar = gbar + (g_new - table[j]) / n_samp
        table[j] = g_new
        t1 = t + 1
        if t1 % log_every == 0:
            sub = log_row(rows, t1)
            if stop_at_subopt is not None and sub is not None and sub <= stop_at_subopt:
                break
    record = RunRecord("point_saga", seed, rows,
                       {"algorithm": "point_saga", "seed": seed, "gamma": float(gamma),
                        "n_samples": n_samp})
    return record, x


def reference_optimum(problem: FlatProblem, tol=3e-6, max_iters=2_000_000,
                      ns_problem=None, ns_iters=20_000, ns_seeds=(0, 1, 2)):
    """High-accuracy optimum used as the suboptimality yardstick.

    Squared loss: exact normal-equation solve.  Logistic: deterministic
    Nesterov iteration until ||grad F|| <= tol * sigma_total (so the value gap
    is at most tol^2 sigma_total / 2).  Absolute loss: the *dual* optimum,
    estimated from long fixed-seed runs of the non-smooth solver on
    `ns_problem` (best value over several restarts); the returned vector is
    then the best primal estimate, and the value is the dual minimum.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if problem.loss is LossKind.SQUARED:
        feats = problem.feature_matrix
        d = feats.shape[1]
        mat = feats.T @ feats + problem.sigma_total * np.eye(d)
        rhs = feats.T @ problem.labels
        theta = np.linalg.solve(mat, rhs)
        return theta, flat_value(problem, theta)
    if problem.loss is LossKind.LOGISTIC:
        feats = problem.feature_matrix
        d = feats.shape[1]
        lip = symmetric_eigensolve(0.25 * (feats.T @ feats)).lambda_max + problem.sigma_total
        kappa = lip / problem.sigma_total
        momentum = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
        x = np.zeros(d)
        y = x.copy()
        target = tol * problem.sigma_total
        for _ in range(max_iters):
            g = flat_grad(problem, y)
            if np.linalg.norm(flat_grad(problem, x)) <= target:
                return x, flat_value(problem, x)
            x_new = y - g / lip
            y = x_new + momentum * (x_new - x)
            x = x_new
        raise RuntimeError(
            f"reference solver did not converge: ||grad|| = "
            f"{np.linalg.norm(flat_grad(problem, x)):.3e} > {target:.3e}"
        )
    if problem.loss is LossKind.ABSOLUTE:
        if ns_problem is None:
            raise ValueError("absolute loss: pass the non-smooth augmented problem")
        best_val = np.inf
        best_theta = None
        for sd in ns_seeds:
            res = run_ns_adfs(ns_problem, ns_iters, seed=sd, log_every=max(ns_iters // 200, 1))
            run_best = float(np.min([r.objective for r in res.record.rows]))
            if run_best < best_val:
                best_val = run_best
                best_theta = res.theta
        return best_theta, best_val
    raise ValueError(problem.loss)
