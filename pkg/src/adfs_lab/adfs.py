"""Decentralized stochastic dual solvers on the augmented graph.

Three entry points: the reference recursion (`run_adfs`), the rescaled
sparse-update form (`run_adfs_efficient`, same trajectories under a shared
stream), and the sublinear non-smooth variant (`run_ns_adfs`).  All of them
report progress on an idealized clock: one time unit per computation round,
tau per gossip round.
"""

from dataclasses import dataclass, field

import numpy as np

from . import augmented as aug
from .objective import _prox_1d_array, _tilde_coeff_batch, primal_value
from .records import LogRow, RunRecord
from .rng import BlockStream

__all__ = ["AdfsResult", "run_adfs", "run_adfs_efficient", "run_ns_adfs", "primal_estimate"]

RENORM_FLOOR = 1e-140


@dataclass
class AdfsResult:
    record: RunRecord
    theta: np.ndarray  # final primal estimate (d,)
    # per-node primal rows of the solver's return convention: Sigma^+ v_K for
    # the reference and non-smooth forms, Sigma^-1 y_K for the rescaled form
    final_primal_rows: np.ndarray
    captures: dict = field(default_factory=dict)  # t -> {"x": ..., "v": ..., "y": ...}
    max_comp_rows_touched: int = 0


def primal_estimate(problem, y_state):
    """Average of the rescaled communication rows (Sigma_comm^-1 y)."""
    return np.mean(y_state[: problem.n] / problem.sigma[:, None], axis=0)


def _sigma_dagger_rows(problem, state):
    out = np.empty_like(state)
    out[: problem.n] = state[: problem.n] / problem.sigma[:, None]
    coef = np.einsum("ij,ij->i", problem.features, state[problem.n :]) / problem.xnorm2
    if problem.smooth:
        coef = coef / problem.smooth_virtual
    else:
        coef = np.zeros_like(coef)
    out[problem.n :] = coef[:, None] * problem.features
    return out


def _log_smooth(problem, rows, t, now, y_state, f_star, kind):
    theta = primal_estimate(problem, y_state)
    obj = primal_value(problem.objectives, theta)
    sub = None if f_star is None else obj - f_star
    rows.append(LogRow(t, now, obj, sub, None, kind))
    return sub


def run_adfs(problem, iters, seed, log_every=100, f_star=None, capture_iters=(),
             stop_at_subopt=None):
    """Reference recursion of the smooth solver.

    The virtual prox runs through the conjugate-side identity with step
    eta * mu_ij^2 / p_ij; the dual step size is eta = rho / (alpha / 2),
    using the certified lower bound on the dual strong convexity.
    """
    if not problem.smooth:
        raise ValueError("run_adfs needs the smooth build; see run_ns_adfs")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n, d = problem.n, problem.d
    rho, eta, tau = problem.rho, problem.eta, problem.tau
    x = np.zeros((problem.n_rows, d))
    v = np.zeros_like(x)
    warm = np.zeros(problem.n_virtual)
    stream = BlockStream("adfs", seed)
    capture_iters = set(capture_iters)
    captures = {}

    rows = []
    _log_smooth(problem, rows, 0, 0.0, np.zeros_like(x), f_star, "")
    now = 0.0
    for t in range(iters):
        y = (x + rho * v) / (1.0 + rho)
        draw = aug.draw_block(problem, stream)
        w = (1.0 - rho) * v + rho * y
        if draw.kind == "communication":
            delta = -eta * aug.apply_comm_step(problem, y)
            v = w + delta
            x = y + rho * aug.apply_wtilde(problem, draw, delta)
            now += tau
        else:
            idx = problem.vstart[:-1] + draw.chosen
            vrows = n + idx
            xs = problem.features[idx]
            _, coef = aug.virtual_gradient(problem, draw, y)
            gvec = coef[:, None] * xs
            z_center = w[:n] - eta * gvec
            z_virt = w[vrows] + eta * gvec
            c_z = np.einsum("ij,ij->i", xs, z_virt) / problem.xnorm2[idx]
            eta_tilde = eta * problem.mu2_virtual[idx] / problem.sampling.p_marginal[idx]
            c_v, inner = _tilde_coeff_batch(
                problem.loss, c_z, problem.xnorm2[idx], problem.labels[idx],
                problem.smooth_virtual[idx], eta_tilde, warm[idx],
            )
            warm[idx] = inner
            v_virt = c_v[:, None] * xs
            v_center = z_center + (z_virt - v_virt)
            delta_virt = v_virt - w[vrows]
            delta_center = v_center - w[:n]
            v = w
            v[:n] = v_center
            v[vrows] = v_virt
            inv_p = 1.0 / problem.sampling.p_marginal[idx]
            x = y
            x[:n] = x[:n] + rho * inv_p[:, None] * delta_center
            x[vrows] = x[vrows] + rho * inv_p[:, None] * delta_virt
            now += 1.0
        if not np.isfinite(v).all():
            raise FloatingPointError(f"non-finite state at iteration {t}")
        t1 = t + 1
        if t1 in capture_iters:
            captures[t1] = {
                "x": x.copy(),
                "v": v.copy(),
                "y": (x + rho * v) / (1.0 + rho),
            }
        if t1 % log_every == 0:
            y_log = (x + rho * v) / (1.0 + rho)
            sub = _log_smooth(problem, rows, t1, now, y_log, f_star, draw.kind)
            if stop_at_subopt is not None and sub is not None and sub <= stop_at_subopt:
                break

    record = RunRecord("adfs", seed, rows, _meta(problem, "adfs", seed))
    final = _sigma_dagger_rows(problem, v)
    theta = primal_estimate(problem, (x + rho * v) / (1.0 + rho))
    return AdfsResult(record, theta, final, captures)


def run_adfs_efficient(problem, iters, seed, log_every=100, f_star=None,
                       capture_iters=(), stop_at_subopt=None):
    """Rescaled two-sequence form with sparse per-iteration updates.

    Keeps (c, U, z) with the momentum component c * U, so a computation round
    rewrites only the n sampled virtual rows and their n centers; c shrinks
    geometrically and is folded into U when it underflows toward 1e-140.
    """
    if not problem.smooth:
        raise ValueError("run_adfs_efficient needs the smooth build")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n, d = problem.n, problem.d
    rho, eta, tau = problem.rho, problem.eta, problem.tau
    phi = (1.0 - rho) / (1.0 + rho)
    big_u = np.zeros((problem.n_rows, d))
    z = np.zeros_like(big_u)
    c = 1.0
    warm = np.zeros(problem.n_virtual)
    stream = BlockStream("adfs", seed)
    capture_iters = set(capture_iters)
    captures = {}
    max_touched = 0

    rows = []
    _log_smooth(problem, rows, 0, 0.0, np.zeros_like(big_u), f_star, "")
    now = 0.0
    for t in range(iters):
        draw = aug.draw_block(problem, stream)
        if draw.kind == "communication":
            y_comm = c * big_u[:n] + z[:n]
            g = (eta / problem.sampling.p_comm) * (
                problem.laplacian_comm @ (y_comm / problem.sigma[:, None])
            )
            h = -g
            wt = h / problem.sampling.p_comm
            big_u[:n] -= (h - rho * wt) / (2.0 * c)
            z[:n] += 0.5 * (h + rho * wt)
            now += tau
        else:
            idx = problem.vstart[:-1] + draw.chosen
            vrows = n + idx
            xs = problem.features[idx]
            y_c = c * big_u[:n] + z[:n]
            y_v = c * big_u[vrows] + z[vrows]
            center_part = np.einsum("ij,ij->i", xs, y_c) / problem.sigma
            virt_part = np.einsum("ij,ij->i", xs, y_v) / problem.smooth_virtual[idx]
            coef = (problem.mu2_virtual[idx] / problem.sampling.p_marginal[idx]) * (
                (center_part - virt_part) / problem.xnorm2[idx]
            )
            w_v = -c * big_u[vrows] + z[vrows]
            c_w = np.einsum("ij,ij->i", xs, w_v) / problem.xnorm2[idx]
            c_in = c_w + eta * coef  # w - g along the feature direction
            eta_tilde = eta * problem.mu2_virtual[idx] / problem.sampling.p_marginal[idx]
            c_prox, inner = _tilde_coeff_batch(
                problem.loss, c_in, problem.xnorm2[idx], problem.labels[idx],
                problem.smooth_virtual[idx], eta_tilde, warm[idx],
            )
            warm[idx] = inner
            c_h = c_prox - c_w
            h_v = c_h[:, None] * xs
            inv_p = (1.0 / problem.sampling.p_marginal[idx])[:, None]
            big_u[vrows] -= (h_v - rho * inv_p * h_v) / (2.0 * c)
            z[vrows] += 0.5 * (h_v + rho * inv_p * h_v)
            big_u[:n] -= (-h_v + rho * inv_p * h_v) / (2.0 * c)
            z[:n] += 0.5 * (-h_v - rho * inv_p * h_v)
            max_touched = max(max_touched, 2 * n)
            now += 1.0
        c *= phi
        if c < RENORM_FLOOR:
            big_u *= c
            c = 1.0
        if not np.isfinite(z).all():
            raise FloatingPointError(f"non-finite state at iteration {t}")
        t1 = t + 1
        if t1 in capture_iters:
            ut = c * big_u
            captures[t1] = {"x": ut / phi + z, "v": -ut / phi + z, "y": ut + z}
        if t1 % log_every == 0:
            y_log = c * big_u + z
            sub = _log_smooth(problem, rows, t1, now, y_log, f_star, draw.kind)
            if stop_at_subopt is not None and sub is not None and sub <= stop_at_subopt:
                break

    record = RunRecord("adfs_efficient", seed, rows, _meta(problem, "adfs_efficient", seed))
    y_final = c * big_u + z  # phi^(K+1) u_K + z_K, the return convention of this form
    final = _sigma_dagger_rows(problem, y_final)
    theta = primal_estimate(problem, y_final)
    return AdfsResult(record, theta, final, captures, max_comp_rows_touched=max_touched)


def run_ns_adfs(problem, iters, seed, log_every=100, f_star=None, capture_iters=(),
                stop_at_subopt=None):
    """Non-smooth solver: decreasing-momentum schedule, conjugate prox via the
    Moreau identity, dual objective logged (the controlled quantity)."""
    if problem.smooth:
        raise ValueError("run_ns_adfs needs the non-smooth build; see run_adfs")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n, d = problem.n, problem.d
    tau = problem.tau
    s_sq = problem.s_squared
    alpha = float(problem.sampling.p_marginal.min())
    x = np.zeros((problem.n_rows, d))
    v = np.zeros_like(x)
    warm = np.zeros(problem.n_virtual)
    stream = BlockStream("ns-adfs", seed)
    capture_iters = set(capture_iters)
    captures = {}

    def log_row(rows, t, now, kind):
        dual = aug.dual_objective(problem, x)
        sub = None if f_star is None else dual - f_star
        rows.append(LogRow(t, now, dual, sub, dual, kind))
        return sub

    rows = []
    log_row(rows, 0, 0.0, "")
    now = 0.0
    alphas = [alpha]
    for t in range(iters):
        eta = 1.0 / (alpha * s_sq)
        y = (1.0 - alpha) * x + alpha * v
        draw = aug.draw_block(problem, stream)
        if draw.kind == "communication":
            delta = -eta * aug.apply_comm_step(problem, y)
            v = v + delta
            x = y + alpha * aug.apply_wtilde(problem, draw, delta)
            now += tau
        else:
            idx = problem.vstart[:-1] + draw.chosen
            vrows = n + idx
            xs = problem.features[idx]
            _, coef = aug.virtual_gradient(problem, draw, y)
            gvec = coef[:, None] * xs
            z_center = v[:n] - eta * gvec
            z_virt = v[vrows] + eta * gvec
            c_z = np.einsum("ij,ij->i", xs, z_virt) / problem.xnorm2[idx]
            eta_tilde = eta * problem.mu2_virtual[idx] / problem.sampling.p_marginal[idx]
            # prox of eta~ f* via Moreau: x - eta~ prox_(1/eta~) f (x / eta~)
            z1d = c_z * problem.xnorm2[idx] / eta_tilde
            p_star = _prox_1d_array(
                problem.loss, z1d, problem.labels[idx],
                problem.xnorm2[idx] / eta_tilde, warm[idx],
            )
            warm[idx] = p_star
            c_v = c_z - eta_tilde * p_star / problem.xnorm2[idx]
            v_virt = c_v[:, None] * xs
            v_center = z_center + (z_virt - v_virt)
            delta_virt = v_virt - v[vrows]
            delta_center = v_center - v[:n]
            v = v.copy()
            v[:n] = v_center
            v[vrows] = v_virt
            inv_p = 1.0 / problem.sampling.p_marginal[idx]
            x = y
            x[:n] = x[:n] + alpha * inv_p[:, None] * delta_center
            x[vrows] = x[vrows] + alpha * inv_p[:, None] * delta_virt
            now += 1.0
        if not np.isfinite(v).all():
            raise FloatingPointError(f"non-finite state at iteration {t}")
        alpha = (np.sqrt(alpha**4 + 4.0 * alpha**2) - alpha**2) / 2.0
        alphas.append(alpha)
        t1 = t + 1
        if t1 in capture_iters:
            captures[t1] = {"x": x.copy(), "v": v.copy(), "y": None}
        if t1 % log_every == 0:
            sub = log_row(rows, t1, now, draw.kind)
            if stop_at_subopt is not None and sub is not None and sub <= stop_at_subopt:
                break

    meta = _meta(problem, "ns_adfs", seed)
    meta["alphas_head"] = [float(a) for a in alphas[:4]]
    record = RunRecord("ns_adfs", seed, rows, meta)
    final = np.empty_like(v)
    final[:n] = v[:n] / problem.sigma[:, None]
    final[n:] = 0.0  # conjugate curvature is zero on virtual rows
    theta = np.mean(final[:n], axis=0)
    return AdfsResult(record, theta, final, captures)


def _meta(problem, algorithm, seed):
    return {
        "algorithm": algorithm,
        "seed": seed,
        "rho": problem.rho,
        "p_comm": problem.sampling.p_comm,
        "tau": problem.tau,
        "n": problem.n,
        "m": problem.m_max,
        "d": problem.d,
    }
