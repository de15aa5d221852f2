"""Generalized block accelerated proximal coordinate gradient.

Works with arbitrary sampling of blocks of coordinates, strong convexity
restricted to the orthogonal complement of a constraint kernel, and separable
proximal terms.  The didactic recursion and the rescaled efficient forms are
both provided; the efficient forms are validated against the didactic one in
the test-suite.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import generator

__all__ = ["CompositeProblem", "ApcgState", "run_apcg", "run_apcg_efficient", "lyapunov_value"]


@dataclass
class CompositeProblem:
    """Oracle bundle for min q_A(x) + sum_i psi_i(x_i).

    `projector_apply` applies the projector onto Ker(A)^perp; coordinates with
    a proximal term must be fixed points of it.  `ess_bound` is any S with
    S^2 >= lambda_max(proj P_b^+ M P_b^+ proj) over all blocks; `marginals`
    are the per-coordinate inclusion probabilities and `sample_block(rng)`
    returns the coordinate indices of one drawn block.
    """

    dim: int
    smooth_grad: callable
    projector_apply: callable
    sigma_a: float
    ess_bound: float
    marginals: np.ndarray
    sample_block: callable
    prox_coord: callable = None  # (i, x, step) -> argmin (v-x)^2/(2 step) + psi_i(v)
    has_psi: np.ndarray = None  # bool mask; default: no proximal terms
    smooth_value: callable = None  # optional, for Lyapunov evaluation
    psi_value: callable = None  # optional, (i, x_i) -> psi_i(x_i)

    def __post_init__(self):
        if self.has_psi is None:
            self.has_psi = np.zeros(self.dim, dtype=bool)
        self.marginals = np.asarray(self.marginals, dtype=float)
        if self.marginals.shape != (self.dim,):
            raise ValueError("marginals must have one entry per coordinate")
        if np.any(self.has_psi) and self.prox_coord is None:
            raise ValueError("prox_coord required when some psi_i != 0")

    @property
    def p_min(self):
        """Smallest inclusion probability over proximal coordinates."""
        if np.any(self.has_psi):
            return float(self.marginals[self.has_psi].min())
        return float(self.marginals.min())


@dataclass
class ApcgState:
    x: np.ndarray
    v: np.ndarray
    t: int
    alpha: float
    beta: float
    eta: float
    a_big: float  # A_t
    b_big: float  # B_t
    u: np.ndarray = field(default=None)  # efficient-form components, if any
    z: np.ndarray = field(default=None)


def _check_schedule(problem, mode, alpha0, beta0):
    idx = np.nonzero(problem.has_psi)[0]
    for i in idx:
        p = problem.marginals[i]
        ok = (1.0 - alpha0 / p >= -1e-12) if mode == "strongly_convex" else (
            1.0 - beta0 - alpha0 / p >= -1e-12
        )
        if not ok:
            raise ValueError(
                f"schedule condition violated at coordinate {i}: "
                f"alpha={alpha0:.3e} exceeds probability {p:.3e}"
            )


def _resolve_rng(rng_seed):
    if isinstance(rng_seed, (int, np.integer)):
        return generator("apcg", int(rng_seed))
    return rng_seed  # caller-supplied stream object, passed to sample_block


def _alpha_next(alpha):
    return (np.sqrt(alpha**4 + 4.0 * alpha**2) - alpha**2) / 2.0


def run_apcg(problem, mode, iters, rng_seed, alpha0=None):
    """Didactic recursion; returns the trajectory of states (t = 0 .. iters).

    strongly_convex mode keeps alpha_t = beta_t = sqrt(sigma_A)/S constant;
    convex mode runs beta_t = 0 with the decreasing alpha_t recursion started
    at the smallest proximal-coordinate probability.
    """
    if mode not in ("strongly_convex", "convex"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _resolve_rng(rng_seed)
    dim = problem.dim
    x = np.zeros(dim)
    v = np.zeros(dim)
    s_const = problem.ess_bound

    if mode == "strongly_convex":
        if problem.sigma_a <= 0:
            raise ValueError("strongly_convex mode needs sigma_a > 0")
        rho = np.sqrt(problem.sigma_a) / s_const
        alpha = beta = rho
        eta = rho / problem.sigma_a
        a_big, b_big = 1.0, problem.sigma_a
    else:
        alpha = problem.p_min if alpha0 is None else float(alpha0)
        beta = 0.0
        b_big = 1.0
        a_big = ((2.0 / alpha - 1.0) ** 2 - 1.0) * b_big / (4.0 * s_const**2)
        eta = 1.0 / (alpha * s_const**2)
    _check_schedule(problem, mode, alpha, beta)

    out = [ApcgState(x.copy(), v.copy(), 0, alpha, beta, eta, a_big, b_big)]
    for t in range(iters):
        if mode == "strongly_convex":
            y = (x + alpha * v) / (1.0 + alpha)
        else:
            y = (1.0 - alpha) * x + alpha * v
        block = tuple(problem.sample_block(rng))
        grad = problem.smooth_grad(y)
        w = (1.0 - beta) * v + beta * y
        v_next = w.copy()
        for i in block:
            step = eta / problem.marginals[i]
            gi = w[i] - step * grad[i]
            v_next[i] = problem.prox_coord(i, gi, step) if problem.has_psi[i] else gi
        if not np.all(np.isfinite(v_next)):
            raise FloatingPointError(f"non-finite iterate at iteration {t}")
        scaled = np.zeros(dim)
        for i in block:
            scaled[i] = (v_next[i] - w[i]) / problem.marginals[i]
        x = y + alpha * problem.projector_apply(scaled)
        v = v_next
        if mode == "strongly_convex":
            a_big = a_big / (1.0 - alpha) if alpha < 1.0 else np.inf
            b_big = problem.sigma_a * a_big
        else:
            a_big += b_big / (alpha * s_const**2)
            alpha = _alpha_next(alpha)
            eta = 1.0 / (alpha * s_const**2)
        out.append(ApcgState(x.copy(), v.copy(), t + 1, alpha, beta, eta, a_big, b_big))
    return out


def run_apcg_efficient(problem, mode, iters, rng_seed, alpha0=None):
    """Efficient forms avoiding dense convex combinations.

    The strongly convex form maintains the rescaled pair (phi^(t+1) u_t, z_t);
    the convex form keeps (u_t, z_t) with x_t = alpha_(t-1)^2 u_t + z_t.
    Reconststructed (x, v) trajectories match run_apcg under a shared stream.
    """
    if mode not in ("strongly_convex", "convex"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _resolve_rng(rng_seed)
    dim = problem.dim
    s_const = problem.ess_bound

    if mode == "strongly_convex":
        if problem.sigma_a <= 0:
            raise ValueError("strongly_convex mode needs sigma_a > 0")
        rho = np.sqrt(problem.sigma_a) / s_const
        phi = (1.0 - rho) / (1.0 + rho)
        eta = rho / problem.sigma_a
        _check_schedule(problem, mode, rho, rho)
        ut = np.zeros(dim)  # rescaled: phi^(t+1) u_t
        z = np.zeros(dim)
        a_big, b_big = 1.0, problem.sigma_a
        out = [ApcgState(np.zeros(dim), np.zeros(dim), 0, rho, rho, eta, a_big, b_big,
                         u=ut.copy(), z=z.copy())]
        for t in range(iters):
            y = ut + z
            w = -ut + z
            block = tuple(problem.sample_block(rng))
            grad = problem.smooth_grad(y)
            h = np.zeros(dim)
            for i in block:
                step = eta / problem.marginals[i]
                gi = w[i] - step * grad[i]
                h[i] = (problem.prox_coord(i, gi, step) if problem.has_psi[i] else gi) - w[i]
            scaled = np.zeros(dim)
            for i in block:
                scaled[i] = h[i] / problem.marginals[i]
            proj = problem.projector_apply(scaled)
            ut = phi * (ut - 0.5 * (h - rho * proj))
            z = z + 0.5 * (h + rho * proj)
            if not (np.all(np.isfinite(ut)) and np.all(np.isfinite(z))):
                raise FloatingPointError(f"non-finite iterate at iteration {t}")
            a_big /= 1.0 - rho
            b_big = problem.sigma_a * a_big
            x_rec = ut / phi + z
            v_rec = -ut / phi + z
            out.append(ApcgState(x_rec, v_rec, t + 1, rho, rho, eta, a_big, b_big,
                                 u=ut.copy(), z=z.copy()))
        return out

    alpha = problem.p_min if alpha0 is None else float(alpha0)
    _check_schedule(problem, mode, alpha, 0.0)
    u = np.zeros(dim)
    z = np.zeros(dim)
    b_big = 1.0
    a_big = ((2.0 / alpha - 1.0) ** 2 - 1.0) * b_big / (4.0 * s_const**2)
    out = [ApcgState(np.zeros(dim), np.zeros(dim), 0, alpha, 0.0,
                     1.0 / (alpha * s_const**2), a_big, b_big, u=u.copy(), z=z.copy())]
    for t in range(iters):
        eta = 1.0 / (alpha * s_const**2)
        y = alpha**2 * u + z
        block = tuple(problem.sample_block(rng))
        grad = problem.smooth_grad(y)
        h = np.zeros(dim)
        for i in block:
            step = eta / problem.marginals[i]
            gi = z[i] - step * grad[i]
            h[i] = (problem.prox_coord(i, gi, step) if problem.has_psi[i] else gi) - z[i]
        scaled = np.zeros(dim)
        for i in block:
            scaled[i] = h[i] / problem.marginals[i]
        proj = problem.projector_apply(scaled)
        u = u - (h - alpha * proj) / alpha**2
        z = z + h
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
            raise FloatingPointError(f"non-finite iterate at iteration {t}")
        x_rec = alpha**2 * u + z
        a_big += b_big / (alpha * s_const**2)
        alpha = _alpha_next(alpha)
        out.append(ApcgState(x_rec, z.copy(), t + 1, alpha, 0.0,
                             1.0 / (alpha * s_const**2), a_big, b_big, u=u.copy(), z=z.copy()))
    return out


def lyapunov_value(problem, state, theta_star, f_star):
    """B_t ||v_t - theta*||^2 in the projector seminorm + 2 A_t (F(x_t) - F*)."""
    if problem.smooth_value is None:
        raise ValueError("problem lacks value oracles (smooth_value / psi_value)")
    diff = state.v - theta_star
    sq = float(diff @ problem.projector_apply(diff))
    fx = problem.smooth_value(state.x)
    if problem.psi_value is not None:
        for i in np.nonzero(problem.has_psi)[0]:
            fx += problem.psi_value(i, state.x[i])
    return state.b_big * sq + 2.0 * state.a_big * (fx - f_star)
