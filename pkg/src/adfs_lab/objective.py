"""Per-sample losses, proximal oracles, and condition numbers.

Losses are generalized linear models loss(X^T theta, label); every proximal
step therefore reduces to a one-dimensional problem along the sample's feature
direction.  The conjugate-side prox (used by the dual solvers) is evaluated
through the primal prox via the Moreau-identity reduction, with a closed-form
boundary case when the step hits the smoothness limit.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .topology import symmetric_eigensolve

__all__ = [
    "LossKind",
    "Sample",
    "LocalObjective",
    "ConditionReport",
    "loss_value",
    "loss_grad",
    "loss_conjugate",
    "loss_prox_1d",
    "prox_sample",
    "prox_tilde_fstar",
    "condition_numbers",
    "primal_value",
    "primal_grad",
]

NEWTON_ITERS = 10
NEWTON_TOL = 1e-12
BISECTION_STEPS = 30


class LossKind(enum.Enum):
    LOGISTIC = "logistic"
    SQUARED = "squared"
    ABSOLUTE = "absolute"

    @property
    def scalar_smoothness(self):
        """Smoothness constant of the scalar loss; None if non-smooth."""
        return {LossKind.LOGISTIC: 0.25, LossKind.SQUARED: 1.0, LossKind.ABSOLUTE: None}[self]

    @property
    def is_smooth(self):
        return self.scalar_smoothness is not None


def _check_finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite {name}")


def _inv_one_plus_exp(u):
    """1 / (1 + exp(u)) without overflow for large |u|."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u > 0
    eu = np.exp(-np.abs(u))
    out[pos] = eu[pos] / (1.0 + eu[pos])
    out[~pos] = 1.0 / (1.0 + eu[~pos])
    return out


def loss_value(kind, z, label):
    """Scalar loss value; `z` and `label` may be arrays (broadcast)."""
    z = np.asarray(z, dtype=float)
    label = np.asarray(label, dtype=float)
    if kind is LossKind.LOGISTIC:
        u = -label * z
        out = np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))
    elif kind is LossKind.SQUARED:
        out = 0.5 * (z - label) ** 2
    elif kind is LossKind.ABSOLUTE:
        out = np.abs(z - label)
    else:  # pragma: no cover
        raise ValueError(kind)
    return out if out.ndim else float(out)


def loss_grad(kind, z, label):
    z = np.asarray(z, dtype=float)
    label = np.asarray(label, dtype=float)
    if kind is LossKind.LOGISTIC:
        out = -label * _inv_one_plus_exp(label * z)
    elif kind is LossKind.SQUARED:
        out = z - label
    else:
        raise ValueError(f"{kind} loss has no gradient (non-smooth)")
    return out if out.ndim else float(out)


def loss_conjugate(kind, s, label):
    """Fenchel conjugate of the scalar loss, +inf outside its domain."""
    s = np.asarray(s, dtype=float)
    label = np.asarray(label, dtype=float)
    if kind is LossKind.LOGISTIC:
        u = -label * s
        inside = (u >= 0.0) & (u <= 1.0)
        uc = np.clip(u, 0.0, 1.0)
        ent = np.where(uc > 0.0, uc * np.log(np.where(uc > 0.0, uc, 1.0)), 0.0)
        ent = ent + np.where(uc < 1.0, (1 - uc) * np.log(np.where(uc < 1.0, 1 - uc, 1.0)), 0.0)
        out = np.where(inside, ent, np.inf)
    elif kind is LossKind.SQUARED:
        out = 0.5 * s * s + s * label
    elif kind is LossKind.ABSOLUTE:
        out = np.where(np.abs(s) <= 1.0, s * label, np.inf)
    else:  # pragma: no cover
        raise ValueError(kind)
    return out if out.ndim else float(out)


def _prox_1d_array(kind, z, label, step, warm):
    """Vectorized argmin_p (p-z)^2/(2 step) + loss(p, label)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    label = np.broadcast_to(np.asarray(label, dtype=float), z.shape)
    step = np.broadcast_to(np.asarray(step, dtype=float), z.shape).astype(float)
    warm = np.broadcast_to(np.asarray(warm, dtype=float), z.shape).astype(float)
    if np.any(step <= 0):
        raise ValueError("prox step must be > 0")
    _check_finite("prox input", z, label, step)

    if kind is LossKind.SQUARED:
        return (z + step * label) / (1.0 + step)
    if kind is LossKind.ABSOLUTE:
        shifted = z - label
        return label + np.sign(shifted) * np.maximum(np.abs(shifted) - step, 0.0)
    if kind is not LossKind.LOGISTIC:  # pragma: no cover
        raise ValueError(kind)

    def dphi(p, zz, ll, ss):
        return (p - zz) / ss - ll * _inv_one_plus_exp(ll * p)

    lo_guard = np.minimum(z, warm) - 10.0 * step
    hi_guard = np.maximum(z, warm) + 10.0 * step
    p = warm.copy()
    active = np.ones(z.shape, dtype=bool)
    failed = np.zeros(z.shape, dtype=bool)
    for _ in range(NEWTON_ITERS):
        if not active.any():
            break
        pa, za, la, sa = p[active], z[active], label[active], step[active]
        sig = _inv_one_plus_exp(la * pa)
        step_newton = -dphi(pa, za, la, sa) / (1.0 / sa + sig * (1.0 - sig))
        delta = np.zeros_like(p)
        delta[active] = step_newton
        p = p + delta
        out_of_guard = active & ((p < lo_guard) | (p > hi_guard))
        failed |= out_of_guard
        active &= ~out_of_guard
        active &= np.abs(delta) > NEWTON_TOL
    failed |= active  # never met the tolerance inside the iteration budget

    if failed.any():
        # |loss'| <= 1 for the logistic loss, so the root is inside z +- step
        lo = (z - step)[failed]
        hi = (z + step)[failed]
        zl, ll, sl = z[failed], label[failed], step[failed]
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            val = dphi(mid, zl, ll, sl)
            neg = val < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        pf = 0.5 * (lo + hi)
        for _ in range(4):  # polish inside the certified bracket
            sig = _inv_one_plus_exp(ll * pf)
            pf = pf - dphi(pf, zl, ll, sl) / (1.0 / sl + sig * (1.0 - sig))
        p[failed] = pf
    return p


def loss_prox_1d(kind, z, label, step, warm=0.0):
    """argmin_p (1/(2 step))(p - z)^2 + loss(p, label), warm-startable."""
    return float(_prox_1d_array(kind, z, label, step, warm)[0])


@dataclass(frozen=True)
class Sample:
    """One training example of a linear model; zero feature vectors are rejected."""

    features: np.ndarray
    label: float
    squared_norm: float = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 1:
            raise ValueError(f"features must be a vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)) or not np.isfinite(self.label):
            raise ValueError("non-finite sample")
        sq = float(x @ x)
        if sq <= 0.0:
            raise ValueError("zero feature vector: its projector is undefined")
        x = x.copy()
        x.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "label", float(self.label))
        object.__setattr__(self, "squared_norm", sq)


@dataclass(frozen=True)
class LocalObjective:
    """f_i(theta) = sum_j loss(X_ij^T theta, label_ij) + (sigma/2) ||theta||^2."""

    samples: tuple
    sigma: float
    loss: LossKind

    def __post_init__(self):
        if self.sigma <= 0 or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma}")
        if len(self.samples) == 0:
            raise ValueError("a node needs at least one sample")
        object.__setattr__(self, "samples", tuple(self.samples))

    @property
    def m(self):
        return len(self.samples)

    @property
    def smoothness(self):
        """Per-sample smoothness L_ij = L_g * ||X_ij||^2 (smooth losses only)."""
        lg = self.loss.scalar_smoothness
        if lg is None:
            raise ValueError("smoothness undefined for non-smooth loss")
        return np.array([lg * s.squared_norm for s in self.samples])

    @property
    def feature_matrix(self):
        return np.stack([s.features for s in self.samples])

    @property
    def labels(self):
        return np.array([s.label for s in self.samples])


def prox_sample(sample, kind, v, eta, warm=0.0):
    """Exact d-dimensional prox of eta * loss(X^T ., label) at v.

    The minimizer moves only along the feature direction, so it reduces to
    the 1D prox with step eta * ||X||^2.
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    v = np.asarray(v, dtype=float)
    _check_finite("prox input", v)
    x = sample.features
    zz = float(x @ v)
    p_star = loss_prox_1d(kind, zz, sample.label, eta * sample.squared_norm, warm)
    return v + ((p_star - zz) / sample.squared_norm) * x


def _tilde_coeff_batch(kind, c_x, xnorm2, labels, smooth, eta_tilde, warm):
    """Coefficient form of prox_{eta_tilde * ftilde*} along each feature.

    Inputs/outputs are coefficients c such that the vector is c * X.  Returns
    (c_out, inner) with `inner` the 1D primal prox solution for warm caching
    (unchanged where the boundary branch was taken).
    """
    c_x = np.atleast_1d(np.asarray(c_x, dtype=float))
    ratio = eta_tilde / smooth
    if np.any(ratio > 1.0 + 1e-9):
        raise ValueError("eta_tilde exceeds the sample smoothness: prox identity breaks")
    boundary = ratio >= 1.0 - 1e-9
    c_out = np.empty_like(c_x)
    inner = np.array(warm, dtype=float, copy=True)
    if boundary.any():
        # limit eta_tilde -> L: prox equals the primal gradient at x / L
        zb = c_x[boundary] * xnorm2[boundary] / smooth[boundary]
        c_out[boundary] = loss_grad(kind, zb, labels[boundary])
    reg = ~boundary
    if reg.any():
        et = eta_tilde[reg]
        ll = smooth[reg]
        gamma = (ll - et) / (et * ll)
        z1d = c_x[reg] * xnorm2[reg] / et
        p_star = _prox_1d_array(kind, z1d, labels[reg], gamma * xnorm2[reg], warm[reg])
        c_out[reg] = (c_x[reg] - et * p_star / xnorm2[reg]) / (1.0 - et / ll)
        inner[reg] = p_star
    return c_out, inner


def prox_tilde_fstar(sample, kind, x, eta_tilde, warm=0.0):
    """prox of ftilde* = f* - (1/(2L)) ||.||^2 at x (x in span of the feature).

    Computed through the primal prox only; requires eta_tilde <= L and x to
    have no feature-orthogonal component beyond 1e-8 relative.
    """
    if not kind.is_smooth:
        raise ValueError("conjugate-side prox needs a smooth loss")
    if eta_tilde <= 0:
        raise ValueError("eta_tilde must be > 0")
    x = np.asarray(x, dtype=float)
    _check_finite("prox input", x)
    smooth = kind.scalar_smoothness * sample.squared_norm
    if eta_tilde > smooth * (1.0 + 1e-9):
        raise ValueError(
            f"eta_tilde={eta_tilde:.3e} >= smoothness {smooth:.3e}: prox identity breaks"
        )
    c_x = float(sample.features @ x) / sample.squared_norm
    resid = x - c_x * sample.features
    nrm = float(np.linalg.norm(x))
    if float(np.linalg.norm(resid)) > 1e-8 * max(nrm, 1e-300):
        raise ValueError("input has a component outside the span of the sample feature")
    c_out, _ = _tilde_coeff_batch(
        kind,
        np.array([c_x]),
        np.array([sample.squared_norm]),
        np.array([sample.label]),
        np.array([smooth]),
        np.array([float(eta_tilde)]),
        np.array([float(warm)]),
    )
    return c_out[0] * sample.features


@dataclass(frozen=True)
class ConditionReport:
    """Batch vs finite-sum condition numbers, per node and aggregated."""

    kappa_i: np.ndarray  # 1 + sigma_i^-1 sum_j L_ij
    kappa_b: np.ndarray  # (sigma_i + lambda_max(sum_j L_ij P_ij)) / sigma_i
    kappa_s: float  # max_i kappa_i
    lam_sum_max: np.ndarray  # lambda_max(sum_j L_ij P_ij) per node


def condition_numbers(objectives) -> ConditionReport:
    if not objectives[0].loss.is_smooth:
        raise ValueError("condition numbers undefined for non-smooth losses")
    lg = objectives[0].loss.scalar_smoothness
    kappa_i, kappa_b, lam = [], [], []
    for obj in objectives:
        feats = obj.feature_matrix
        gram = lg * (feats.T @ feats)  # sum_j L_ij P_ij for rank-1 projectors
        lmax = symmetric_eigensolve(gram).lambda_max
        kappa_i.append(1.0 + obj.smoothness.sum() / obj.sigma)
        kappa_b.append((obj.sigma + lmax) / obj.sigma)
        lam.append(lmax)
    return ConditionReport(
        kappa_i=np.array(kappa_i),
        kappa_b=np.array(kappa_b),
        kappa_s=float(max(kappa_i)),
        lam_sum_max=np.array(lam),
    )


def primal_value(objectives, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    total = 0.0
    for obj in objectives:
        z = obj.feature_matrix @ theta
        total += float(np.sum(loss_value(obj.loss, z, obj.labels)))
        total += 0.5 * obj.sigma * float(theta @ theta)
    return total


def primal_grad(objectives, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for obj in objectives:
        feats = obj.feature_matrix
        z = feats @ theta
        grad += feats.T @ np.asarray(loss_grad(obj.loss, z, obj.labels))
        grad += obj.sigma * theta
    return grad
