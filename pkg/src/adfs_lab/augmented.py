"""Augmented-graph dual problem: constraint operator, parameters, sampling.

Each physical node is replaced by a star: a center carrying the quadratic
regularizer plus one virtual node per local sample.  Dual coordinates live on
the edges of this augmented graph.  This module builds the problem object with
the derived constants (virtual-edge weights, sampling probabilities, rate),
provides the fast edge-wise operator applications used by the solvers, and the
dense matrices used as test oracles.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .objective import LossKind, condition_numbers, loss_conjugate, loss_grad
from .topology import CommunicationGraph, laplacian, symmetric_eigensolve

__all__ = [
    "SamplingScheme",
    "BlockDraw",
    "AugmentedProblem",
    "build_augmented",
    "build_augmented_ns",
    "rate_branches",
    "rate_rho",
    "balanced_p_comm",
    "expected_time",
    "draw_block",
    "apply_comm_step",
    "virtual_gradient",
    "apply_wtilde",
    "dual_objective",
    "lift_primal_point",
    "dense_A",
    "dense_sigma_diag",
    "dense_sigma_dagger_diag",
    "dense_sigma_dagger_sq_diag",
    "dense_pb_dagger_diag",
    "dense_pinv",
    "dense_c0_constant",
]

log = logging.getLogger("adfs_lab")

DENSE_ROW_GUARD = 5000


@dataclass(frozen=True)
class SamplingScheme:
    """Synchronous block distribution: one gossip block vs one sample per node."""

    p_comm: float
    p_virtual: tuple  # per node, probabilities over its samples (each sums to 1)
    p_marginal: np.ndarray  # flattened absolute probabilities p_ij
    s_norms: np.ndarray  # per-node normalizers S_i

    @property
    def p_comp(self):
        return 1.0 - self.p_comm


@dataclass(frozen=True)
class BlockDraw:
    kind: str  # "communication" | "computation"
    chosen: np.ndarray = None  # local sample index per node (computation only)


@dataclass(frozen=True)
class AugmentedProblem:
    """Solver input: graph, losses, and every derived constant of the method.

    State matrices have one row per augmented-graph node: rows 0..n-1 are the
    centers, row n + vstart[i] + j is virtual node (i, j).
    """

    graph: CommunicationGraph
    objectives: tuple
    loss: LossKind
    smooth: bool
    tau: float
    sigma: np.ndarray  # (n,)
    vstart: np.ndarray  # (n+1,) virtual row offsets
    features: np.ndarray  # (V, d) stacked virtual features
    labels: np.ndarray  # (V,)
    xnorm2: np.ndarray  # (V,)
    smooth_virtual: np.ndarray  # (V,) L_ij; None for the non-smooth build
    mu2_virtual: np.ndarray  # (V,) virtual edge weights squared
    mu2_comm: np.ndarray  # (E,)
    laplacian_comm: np.ndarray  # (n, n) weighted
    alpha: float
    gamma: float  # None when the graph has no edges
    kappa_comm: float  # None when the graph has no edges
    kappa_s: float
    kappa_b: np.ndarray
    kappa_i: np.ndarray
    dm: np.ndarray
    dm_tilde: np.ndarray
    sampling: SamplingScheme
    rho: float
    rho_unclamped: float
    s_squared: float = None  # non-smooth ESO bound
    s_max_bound: float = None  # m + sqrt(m kappa_s)
    sigma_a_exact: float = None  # dense value, filled by with_exact_sigma_a

    @property
    def n(self):
        return self.graph.n

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def n_virtual(self):
        return self.features.shape[0]

    @property
    def n_rows(self):
        return self.n + self.n_virtual

    @property
    def m_per_node(self):
        return np.diff(self.vstart)

    @property
    def m_max(self):
        return int(self.m_per_node.max())

    def virtual_row(self, i, j):
        return self.n + int(self.vstart[i]) + j

    @property
    def owner(self):
        """Center node of each virtual index."""
        return np.repeat(np.arange(self.n), self.m_per_node)

    @property
    def sigma_a_bound(self):
        """Certified lower bound alpha/2 on the dual strong convexity."""
        return 0.5 * self.alpha

    @property
    def eta(self):
        """Dual step size rho / sigma_A.

        Uses the certified bound alpha/2 unless the exact dense value was
        substituted through with_exact_sigma_a (validation runs only).
        """
        sigma_a = self.sigma_a_exact if self.sigma_a_exact is not None else self.sigma_a_bound
        return self.rho / sigma_a


def _stack_objectives(objectives):
    d = objectives[0].samples[0].features.shape[0]
    feats, labels, xnorm2 = [], [], []
    vstart = [0]
    for obj in objectives:
        for s in obj.samples:
            if s.features.shape[0] != d:
                raise ValueError("all samples must share the feature dimension")
            feats.append(s.features)
            labels.append(s.label)
            xnorm2.append(s.squared_norm)
        vstart.append(vstart[-1] + obj.m)
    out = (
        np.stack(feats),
        np.array(labels),
        np.array(xnorm2),
        np.array(vstart, dtype=int),
    )
    for arr in out:
        arr.flags.writeable = False
    return (*out, d)


def _graph_spectra(graph, dm_tilde, sigma):
    """(gamma, kappa_comm, alpha) from the n x n congruences of the Laplacian."""
    lap = laplacian(graph)
    if graph.n_edges == 0:
        # single node (or edgeless): no gossip, alpha only rescales mu and cancels
        return lap, None, None, 1.0
    spec = symmetric_eigensolve(lap)
    if spec.kernel_dim != 1:
        raise ValueError("communication Laplacian kernel is not 1-dimensional")
    gamma = spec.lambda_min_pos / spec.lambda_max

    dt_isqrt = 1.0 / np.sqrt(dm_tilde)
    spec_dt = symmetric_eigensolve(dt_isqrt[:, None] * lap * dt_isqrt[None, :])
    if spec_dt.kernel_dim != 1:
        raise ValueError("scaled Laplacian kernel is not 1-dimensional")
    alpha = 2.0 * spec_dt.lambda_min_pos

    s_isqrt = 1.0 / np.sqrt(sigma)
    spec_s = symmetric_eigensolve(s_isqrt[:, None] * lap * s_isqrt[None, :])
    kappa_comm = (spec_s.lambda_max / spec.lambda_max) / (
        spec_dt.lambda_min_pos / spec.lambda_min_pos
    )
    return lap, gamma, kappa_comm, alpha


def balanced_p_comm(gamma, kappa_comm, s_max_bound):
    """Communication probability equalizing the two rate branches."""
    return 1.0 / (1.0 + np.sqrt(2.0 * gamma / kappa_comm) * s_max_bound)


def rate_branches(problem, p_comm):
    """(rho_comm, rho_comp) before clamping; rho_comm is inf with no edges."""
    if problem.gamma is None:
        rho_comm = np.inf
    else:
        rho_comm = np.sqrt(problem.gamma / problem.kappa_comm) * p_comm
    rho_comp = (1.0 - p_comm) / (np.sqrt(2.0) * problem.s_max_bound)
    return rho_comm, rho_comp


def _marginals(objectives, p_comp):
    """Assumption-style virtual-edge probabilities p_ij and normalizers S_i."""
    p_virtual, s_norms, marg = [], [], []
    for obj in objectives:
        w = np.sqrt(1.0 + obj.smoothness / obj.sigma)
        s_i = float(w.sum())
        p_virtual.append(w / s_i)
        s_norms.append(s_i)
        marg.append(p_comp * w / s_i)
    return tuple(p_virtual), np.array(s_norms), np.concatenate(marg)


def rate_rho(problem, p_comm):
    """min of the two branch rates, clamped so 2 rho <= min_ij p_ij."""
    rho_comm, rho_comp = rate_branches(problem, p_comm)
    rho = min(rho_comm, rho_comp)
    if problem.smooth:
        _, _, marg = _marginals(problem.objectives, 1.0 - p_comm)
        cap = 0.5 * float(marg.min())
        if rho > cap:
            log.warning(
                "rate clamped from %.3e to %.3e to keep the conjugate prox valid",
                rho,
                cap,
            )
            rho = cap
    return float(rho)


def expected_time(problem, iters):
    """Idealized time of `iters` iterations: 1 per computation, tau per gossip."""
    if iters < 0:
        raise ValueError("iteration count must be >= 0")
    p_comm = problem.sampling.p_comm
    return (1.0 - p_comm + problem.tau * p_comm) * iters


def build_augmented(graph, objectives, tau, p_comm_override=None):
    """Assemble the smooth dual problem with the default parameter choices.

    Virtual-edge weights are mu_ij^2 = alpha * L_ij with alpha twice the
    smallest positive eigenvalue of the tilde-scaled gossip matrix, sampling
    probabilities are proportional to sqrt(1 + L_ij / sigma_i), and p_comm
    defaults to the value balancing the communication / computation rates.
    """
    objectives = tuple(objectives)
    if len(objectives) != graph.n:
        raise ValueError(f"need one local objective per node ({graph.n}), got {len(objectives)}")
    loss = objectives[0].loss
    if any(o.loss is not loss for o in objectives):
        raise ValueError("all nodes must share the loss kind")
    if not loss.is_smooth:
        raise ValueError("non-smooth loss: use build_augmented_ns")
    if tau < 0:
        raise ValueError("tau must be >= 0")

    feats, labels, xnorm2, vstart, d = _stack_objectives(objectives)
    sigma = np.array([o.sigma for o in objectives])
    report = condition_numbers(objectives)
    dm = sigma + report.lam_sum_max
    dm_tilde = sigma + 2.0 * report.lam_sum_max

    lap, gamma, kappa_comm, alpha = _graph_spectra(graph, dm_tilde, sigma)
    if alpha <= 0:
        raise ValueError("alpha <= 0: spectral computation failed")

    lg = loss.scalar_smoothness
    smooth_virtual = lg * xnorm2
    mu2_virtual = alpha * smooth_virtual
    mu2_comm = graph.edge_weights**2

    m_max = int(max(o.m for o in objectives))
    s_max = m_max + np.sqrt(m_max * report.kappa_s)

    if p_comm_override is not None:
        p_comm = float(p_comm_override)
    elif gamma is None:
        p_comm = 0.0
    else:
        p_comm = float(balanced_p_comm(gamma, kappa_comm, s_max))
    if graph.n_edges > 0 and not (0.0 < p_comm < 1.0):
        raise ValueError(f"p_comm must lie in (0, 1), got {p_comm}")
    if graph.n_edges == 0 and p_comm != 0.0:
        raise ValueError("p_comm must be 0 for a graph with no edges")

    p_virtual, s_norms, marg = _marginals(objectives, 1.0 - p_comm)
    sampling = SamplingScheme(
        p_comm=p_comm, p_virtual=p_virtual, p_marginal=marg, s_norms=s_norms
    )

    problem = AugmentedProblem(
        graph=graph,
        objectives=objectives,
        loss=loss,
        smooth=True,
        tau=float(tau),
        sigma=sigma,
        vstart=vstart,
        features=feats,
        labels=labels,
        xnorm2=xnorm2,
        smooth_virtual=smooth_virtual,
        mu2_virtual=mu2_virtual,
        mu2_comm=mu2_comm,
        laplacian_comm=lap,
        alpha=float(alpha),
        gamma=gamma,
        kappa_comm=kappa_comm,
        kappa_s=report.kappa_s,
        kappa_b=report.kappa_b,
        kappa_i=report.kappa_i,
        dm=dm,
        dm_tilde=dm_tilde,
        sampling=sampling,
        rho=0.0,
        rho_unclamped=0.0,
        s_max_bound=float(s_max),
    )
    rho_comm, rho_comp = rate_branches(problem, p_comm)
    rho_unclamped = min(rho_comm, rho_comp)
    rho = rate_rho(problem, p_comm)
    return replace(problem, rho=float(rho), rho_unclamped=float(rho_unclamped))


def build_augmented_ns(graph, objectives, tau=1.0, p_comm_override=None):
    """Non-smooth variant: zero conjugate curvature, uniform virtual sampling.

    Virtual weights become mu_ij^2 = lambda_min_pos(L) / (1 + m), probabilities
    p_ij = p_comp / m_i, and the schedule is driven by the explicit bound on
    the sampling-smoothness constant S^2.
    """
    objectives = tuple(objectives)
    if len(objectives) != graph.n:
        raise ValueError(f"need one local objective per node ({graph.n}), got {len(objectives)}")
    loss = objectives[0].loss
    if loss.is_smooth:
        raise ValueError("smooth loss: use build_augmented for the linearly convergent solver")
    if graph.n_edges == 0:
        raise ValueError("the non-smooth build needs a graph with at least one edge")

    feats, labels, xnorm2, vstart, d = _stack_objectives(objectives)
    sigma = np.array([o.sigma for o in objectives])
    lap = laplacian(graph)
    spec = symmetric_eigensolve(lap)
    if spec.kernel_dim != 1:
        raise ValueError("communication Laplacian kernel is not 1-dimensional")
    lam_min, lam_max = spec.lambda_min_pos, spec.lambda_max
    gamma = lam_min / lam_max

    m_max = int(max(o.m for o in objectives))
    if p_comm_override is not None:
        p_comm = float(p_comm_override)
    else:
        p_comm = 1.0 / (1.0 + np.sqrt(gamma * m_max))
    if not (0.0 < p_comm < 1.0):
        raise ValueError(f"p_comm must lie in (0, 1), got {p_comm}")
    p_comp = 1.0 - p_comm

    mu2_virtual = np.full(feats.shape[0], lam_min / (1.0 + m_max))
    p_virtual = tuple(np.full(o.m, 1.0 / o.m) for o in objectives)
    marg = np.concatenate([p_comp * pv for pv in p_virtual])
    s_squared = (1.0 / sigma.min()) * max(
        lam_max / p_comm**2,
        lam_min * m_max**2 / ((m_max + 1.0) * p_comp**2),
    )

    sampling = SamplingScheme(
        p_comm=p_comm,
        p_virtual=p_virtual,
        p_marginal=marg,
        s_norms=np.array([float(o.m) for o in objectives]),
    )
    return AugmentedProblem(
        graph=graph,
        objectives=objectives,
        loss=loss,
        smooth=False,
        tau=float(tau),
        sigma=sigma,
        vstart=vstart,
        features=feats,
        labels=labels,
        xnorm2=xnorm2,
        smooth_virtual=None,
        mu2_virtual=mu2_virtual,
        mu2_comm=graph.edge_weights**2,
        laplacian_comm=lap,
        alpha=float(lam_min / (1.0 + m_max)),
        gamma=gamma,
        kappa_comm=None,
        kappa_s=None,
        kappa_b=None,
        kappa_i=None,
        dm=None,
        dm_tilde=None,
        sampling=sampling,
        rho=None,
        rho_unclamped=None,
        s_squared=float(s_squared),
    )


def with_exact_sigma_a(problem) -> AugmentedProblem:
    """Copy of the problem whose step size uses the dense exact dual strong
    convexity instead of the certified alpha/2 bound (small instances only)."""
    a = dense_A(problem)
    quad = a.T @ dense_sigma_dagger_diag(problem) @ a
    exact = symmetric_eigensolve(quad).lambda_min_pos
    return replace(problem, sigma_a_exact=float(exact))


def draw_block(problem, stream) -> BlockDraw:
    """One synchronous block draw from the two substreams of `stream`."""
    scheme = problem.sampling
    if scheme.p_comm > 0.0 and stream.kind_rng.random() < scheme.p_comm:
        return BlockDraw(kind="communication")
    u = stream.pick_rng.random(problem.n)
    chosen = np.empty(problem.n, dtype=int)
    for i, pv in enumerate(scheme.p_virtual):
        chosen[i] = min(int(np.searchsorted(np.cumsum(pv), u[i])), len(pv) - 1)
    return BlockDraw(kind="computation", chosen=chosen)


def apply_comm_step(problem, state):
    """W_comm Sigma^dagger applied to a state matrix (gossip gradient term).

    Only communication rows are touched: each edge (k, l) moves weight
    mu_kl^2 ((Sigma^-1 y)_k - (Sigma^-1 y)_l) between its endpoints, and the
    whole block is scaled by 1 / p_comm.
    """
    p_comm = problem.sampling.p_comm
    if p_comm <= 0.0:
        raise ValueError("no communication block exists (p_comm = 0)")
    out = np.zeros_like(state)
    scaled = state[: problem.n] / problem.sigma[:, None]
    out[: problem.n] = (problem.laplacian_comm @ scaled) / p_comm
    return out


def virtual_gradient(problem, draw, state):
    """Gradient coefficients of the sampled virtual edges.

    Returns (virtual_rows, coefs): the gradient term of W_b Sigma^dagger state
    is +coef_i * X on center row i and -coef_i * X at virtual_rows[i].
    """
    if draw.kind != "computation":
        raise ValueError("expected a computation draw")
    idx = problem.vstart[:-1] + draw.chosen
    rows = problem.n + idx
    x = problem.features[idx]
    center_part = np.einsum("ij,ij->i", x, state[: problem.n]) / problem.sigma
    if problem.smooth:
        virt_part = np.einsum("ij,ij->i", x, state[rows]) / problem.smooth_virtual[idx]
    else:
        virt_part = 0.0
    coef = (problem.mu2_virtual[idx] / problem.sampling.p_marginal[idx]) * (
        (center_part - virt_part) / problem.xnorm2[idx]
    )
    return rows, coef


def apply_wtilde(problem, draw, delta, debug=False):
    """A P_b^dagger A^dagger applied to an update known to lie in range(A U_b).

    For the gossip block this is a 1/p_comm rescaling of the communication
    rows; for a computation block, virtual row (i, j) and its center row are
    both rescaled by 1/p_ij.  With debug=True the range precondition is
    verified and the result is computed through the dense pseudo-inverse
    instead of the scaling shortcut (small instances only).
    """
    if debug:
        _check_wtilde_range(problem, draw, delta)
        a = dense_A(problem)
        pb = np.diag(dense_pb_dagger_diag(problem, draw))
        return (a @ pb @ dense_pinv(a) @ delta.ravel()).reshape(delta.shape)
    out = np.zeros_like(delta)
    if draw.kind == "communication":
        out[: problem.n] = delta[: problem.n] / problem.sampling.p_comm
        return out
    idx = problem.vstart[:-1] + draw.chosen
    rows = problem.n + idx
    inv_p = 1.0 / problem.sampling.p_marginal[idx]
    out[rows] = delta[rows] * inv_p[:, None]
    out[: problem.n] = delta[: problem.n] * inv_p[:, None]
    return out


def _check_wtilde_range(problem, draw, delta, tol=1e-6):
    """Verify delta lies in range(A U_b) by projecting onto the block columns."""
    a = dense_A(problem)
    d = problem.d
    cols = []
    if draw.kind == "communication":
        cols = list(range(problem.graph.n_edges * d))
    else:
        for g in problem.vstart[:-1] + draw.chosen:
            cols.extend(range((problem.graph.n_edges + g) * d,
                              (problem.graph.n_edges + g + 1) * d))
    sub = a[:, cols]
    proj = sub @ dense_pinv(sub)
    vec = delta.ravel()
    resid = float(np.linalg.norm(vec - proj @ vec))
    if resid > tol * max(1.0, float(np.linalg.norm(vec))):
        raise ValueError(
            f"update lies outside range(A U_b): residual norm {resid:.3e}"
        )


def dual_objective(problem, state, domain_tol=1e-6):
    """Dual objective in node coordinates: sum ||v_i||^2/(2 sigma_i) + sum f*_ij.

    Virtual rows are read as coefficients along their feature; coefficients
    outside the conjugate domain by more than `domain_tol` give +inf.
    """
    total = 0.5 * float(
        np.sum(np.sum(state[: problem.n] ** 2, axis=1) / problem.sigma)
    )
    coef = np.einsum("ij,ij->i", problem.features, state[problem.n :]) / problem.xnorm2
    if problem.loss is LossKind.ABSOLUTE:
        if np.any(np.abs(coef) > 1.0 + domain_tol):
            return np.inf
        coef = np.clip(coef, -1.0, 1.0)
    elif problem.loss is LossKind.LOGISTIC:
        u = -problem.labels * coef
        if np.any(u < -domain_tol) or np.any(u > 1.0 + domain_tol):
            return np.inf
        coef = -problem.labels * np.clip(u, 0.0, 1.0)
    vals = loss_conjugate(problem.loss, coef, problem.labels)
    return total + float(np.sum(vals))


def lift_primal_point(problem, theta):
    """Node-space image of a primal point: sigma_i theta on centers,
    grad f_ij(theta) on virtual rows.  At theta* this is the dual optimum
    mapped through the constraint operator."""
    if not problem.smooth:
        raise ValueError("lift needs sample gradients; non-smooth losses have none")
    theta = np.asarray(theta, dtype=float)
    out = np.empty((problem.n_rows, theta.shape[0]))
    out[: problem.n] = problem.sigma[:, None] * theta[None, :]
    slope = loss_grad(problem.loss, problem.features @ theta, problem.labels)
    out[problem.n :] = np.asarray(slope)[:, None] * problem.features
    return out


# ---------------------------------------------------------------------------
# dense oracles (small instances only)


def _projector(problem, idx):
    x = problem.features[idx]
    return np.outer(x, x) / problem.xnorm2[idx]


def dense_A(problem):
    """Dense constraint operator, shape (n_rows * d, (E + V) * d).

    Communication-edge columns are mu_kl (e_k - e_l) (x) I_d; virtual-edge
    columns are mu_ij (e_i - e_(i,j)) (x) P_ij with the rank-one feature
    projector P_ij.  Guarded to small instances.
    """
    d = problem.d
    rows = problem.n_rows * d
    if rows > DENSE_ROW_GUARD:
        raise ValueError(f"dense operator would have {rows} rows (> {DENSE_ROW_GUARD})")
    cols = (problem.graph.n_edges + problem.n_virtual) * d
    a = np.zeros((rows, cols))
    eye = np.eye(d)
    for e, ((k, l), mu) in enumerate(zip(problem.graph.edges, problem.graph.edge_weights)):
        blk = mu * eye
        a[k * d : (k + 1) * d, e * d : (e + 1) * d] = blk
        a[l * d : (l + 1) * d, e * d : (e + 1) * d] = -blk
    off = problem.graph.n_edges
    for g in range(problem.n_virtual):
        i = problem.owner[g]
        r = problem.n + g
        blk = np.sqrt(problem.mu2_virtual[g]) * _projector(problem, g)
        a[i * d : (i + 1) * d, (off + g) * d : (off + g + 1) * d] = blk
        a[r * d : (r + 1) * d, (off + g) * d : (off + g + 1) * d] = -blk
    return a


def dense_sigma_diag(problem):
    """Dense Sigma as a (n_rows d) x (n_rows d) block-diagonal matrix."""
    d = problem.d
    out = np.zeros((problem.n_rows * d, problem.n_rows * d))
    for i in range(problem.n):
        out[i * d : (i + 1) * d, i * d : (i + 1) * d] = problem.sigma[i] * np.eye(d)
    for g in range(problem.n_virtual):
        r = problem.n + g
        if problem.smooth:
            out[r * d : (r + 1) * d, r * d : (r + 1) * d] = (
                problem.smooth_virtual[g] * _projector(problem, g)
            )
    return out


def _sigma_dagger_blocks(problem, power):
    d = problem.d
    out = np.zeros((problem.n_rows * d, problem.n_rows * d))
    for i in range(problem.n):
        out[i * d : (i + 1) * d, i * d : (i + 1) * d] = problem.sigma[i] ** (-power) * np.eye(d)
    if problem.smooth:
        for g in range(problem.n_virtual):
            r = problem.n + g
            out[r * d : (r + 1) * d, r * d : (r + 1) * d] = (
                problem.smooth_virtual[g] ** (-power) * _projector(problem, g)
            )
    return out


def dense_sigma_dagger_diag(problem):
    return _sigma_dagger_blocks(problem, 1)


def dense_sigma_dagger_sq_diag(problem):
    return _sigma_dagger_blocks(problem, 2)


def dense_pb_dagger_diag(problem, draw):
    """Diagonal of P_b^dagger over edge coordinates (zero off the block)."""
    d = problem.d
    n_edges = problem.graph.n_edges
    diag = np.zeros((n_edges + problem.n_virtual) * d)
    if draw.kind == "communication":
        diag[: n_edges * d] = 1.0 / problem.sampling.p_comm
    else:
        idx = problem.vstart[:-1] + draw.chosen
        for g in idx:
            c = (n_edges + g) * d
            diag[c : c + d] = 1.0 / problem.sampling.p_marginal[g]
    return diag


def dense_pinv(mat, zero_tol=1e-9):
    """Moore-Penrose pseudo-inverse through the symmetric eigensolver."""
    mat = np.asarray(mat, dtype=float)
    gram = mat.T @ mat
    spec = symmetric_eigensolve(gram, zero_tol=zero_tol, eigenvectors=True)
    vals, vecs = spec.eigenvalues, spec.eigenvectors
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    inv = np.where(np.abs(vals) > zero_tol * scale, 1.0 / np.where(vals != 0, vals, 1.0), 0.0)
    return (vecs * inv[None, :]) @ vecs.T @ mat.T


def dense_c0_constant(problem, theta_star):
    """Dense Lyapunov constant of the linear-rate guarantee.

    C0 = lambda_max(A^T Sigma^-2 A) [ ||A^dagger v*||^2
         + 2 sigma_A^-1 (F*(0) - F*(v*)) ]
    with v* the lifted primal optimum and sigma_A the exact dual strong
    convexity (dense eigensolve).  Small instances only.
    """
    a = dense_A(problem)
    sig_dag = dense_sigma_dagger_diag(problem)
    quad = a.T @ sig_dag @ a
    sigma_a = symmetric_eigensolve(quad).lambda_min_pos
    lam = symmetric_eigensolve(a.T @ dense_sigma_dagger_sq_diag(problem) @ a).lambda_max
    v_star = lift_primal_point(problem, theta_star)
    proj_dual = dense_pinv(a) @ v_star.ravel()
    gap = dual_objective(problem, np.zeros_like(v_star)) - dual_objective(problem, v_star)
    return float(lam * (proj_dual @ proj_dual + 2.0 / sigma_a * gap))
