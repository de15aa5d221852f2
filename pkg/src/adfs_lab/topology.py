"""Communication graphs, their Laplacians, and dense symmetric eigensolves.

Everything downstream (virtual-edge weights, convergence rates, sampling
probabilities) is driven by the spectrum of the weighted graph Laplacian, so
this module also hosts the cyclic-Jacobi eigensolver used throughout the
package.  Graphs are immutable after construction and must be connected.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GraphConstructionError",
    "CommunicationGraph",
    "SymmetricSpectrum",
    "build_topology",
    "laplacian",
    "incidence",
    "symmetric_eigensolve",
    "spectral_gap",
]

DEFAULT_ZERO_TOL = 1e-9


class GraphConstructionError(ValueError):
    pass


class EigensolveError(RuntimeError):
    pass


def _union_find_components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k, l in edges:
        ra, rb = find(k), find(l)
        if ra != rb:
            parent[ra] = rb
    roots = {}
    for v in range(n):
        roots.setdefault(find(v), []).append(v)
    return list(roots.values())


@dataclass(frozen=True)
class CommunicationGraph:
    """Undirected simple connected graph with positive per-edge weights.

    `edge_weights[e]` is the gossip weight mu of edge `edges[e]`; the weighted
    Laplacian uses mu**2.  Unit weights reproduce the standard Laplacian.
    """

    n: int
    edges: tuple
    edge_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n < 1:
            raise GraphConstructionError(f"node count must be >= 1, got {self.n}")
        norm_edges = []
        seen = set()
        for e in self.edges:
            if len(e) != 2:
                raise GraphConstructionError(f"malformed edge {e!r}")
            k, l = int(e[0]), int(e[1])
            if k == l:
                raise GraphConstructionError(f"self-loop on node {k}")
            if not (0 <= k < self.n and 0 <= l < self.n):
                raise GraphConstructionError(f"edge ({k},{l}) out of range for n={self.n}")
            key = (min(k, l), max(k, l))
            if key in seen:
                raise GraphConstructionError(f"duplicate edge ({key[0]},{key[1]})")
            seen.add(key)
            norm_edges.append(key)
        object.__setattr__(self, "edges", tuple(norm_edges))
        if self.edge_weights is None:
            w = np.ones(len(norm_edges))
        else:
            w = np.asarray(self.edge_weights, dtype=float).copy()
        if w.shape != (len(norm_edges),):
            raise GraphConstructionError(
                f"expected {len(norm_edges)} edge weights, got shape {w.shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            bad = int(np.argmin(w))
            raise GraphConstructionError(
                f"edge weight for {norm_edges[bad]} must be finite and > 0"
            )
        w.flags.writeable = False
        object.__setattr__(self, "edge_weights", w)
        comps = _union_find_components(self.n, norm_edges)
        if len(comps) > 1:
            comps.sort(key=len)
            raise GraphConstructionError(
                f"graph is disconnected: component {comps[0]} unreachable from the rest"
            )

    @property
    def n_edges(self):
        return len(self.edges)

    def neighbors(self, k):
        out = []
        for a, b in self.edges:
            if a == k:
                out.append(b)
            elif b == k:
                out.append(a)
        return sorted(out)


def build_topology(kind, **params) -> CommunicationGraph:
    """Construct one of the named graph families (or a custom edge list).

    kind: "line" (params: n), "grid2d" (rows, cols), "complete" (n),
    "custom" (n, edges, optional weights).  Edge weights default to 1.
    """
    weights = params.pop("weights", None)
    if kind == "line":
        n = int(params.pop("n"))
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "complete":
        n = int(params.pop("n"))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "grid2d":
        rows, cols = int(params.pop("rows")), int(params.pop("cols"))
        if rows < 1 or cols < 1:
            raise GraphConstructionError("grid2d needs rows >= 1 and cols >= 1")
        n = rows * cols
        edges = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    edges.append((v, v + 1))
                if r + 1 < rows:
                    edges.append((v, v + cols))
    elif kind == "custom":
        edges = [tuple(e) for e in params.pop("edges")]
        if "n" in params:
            n = int(params.pop("n"))
        elif edges:
            n = max(max(e) for e in edges) + 1
        else:
            raise GraphConstructionError("custom topology needs n or a non-empty edge list")
    else:
        raise GraphConstructionError(f"unknown topology kind {kind!r}")
    if params:
        raise GraphConstructionError(f"unexpected topology parameters {sorted(params)}")
    return CommunicationGraph(n=n, edges=tuple(edges), edge_weights=weights)


def laplacian(g: CommunicationGraph) -> np.ndarray:
    """Weighted Laplacian: L_kk = sum mu^2 over incident edges, L_kl = -mu_kl^2."""
    lap = np.zeros((g.n, g.n))
    for (k, l), mu in zip(g.edges, g.edge_weights):
        w = mu * mu
        lap[k, k] += w
        lap[l, l] += w
        lap[k, l] -= w
        lap[l, k] -= w
    return lap


def incidence(g: CommunicationGraph) -> np.ndarray:
    """n x E map whose column for edge (k,l) is mu_kl * (e_k - e_l)."""
    inc = np.zeros((g.n, g.n_edges))
    for col, ((k, l), mu) in enumerate(zip(g.edges, g.edge_weights)):
        inc[k, col] = mu
        inc[l, col] = -mu
    return inc


@dataclass(frozen=True)
class SymmetricSpectrum:
    """Eigenvalues sorted ascending plus the count treated as numerically zero."""

    eigenvalues: np.ndarray
    kernel_dim: int
    eigenvectors: np.ndarray = None  # columns follow eigenvalue order

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def lambda_min_pos(self) -> float:
        """Smallest eigenvalue above the zero threshold."""
        scale = float(np.max(np.abs(self.eigenvalues))) if self.eigenvalues.size else 0.0
        pos = self.eigenvalues[self.eigenvalues > self._threshold(scale)]
        if pos.size == 0:
            raise EigensolveError("matrix has no eigenvalue above the zero threshold")
        return float(pos[0])

    def _threshold(self, scale):
        return self._zero_tol * scale

    @property
    def _zero_tol(self):
        return getattr(self, "__zero_tol", DEFAULT_ZERO_TOL)


def symmetric_eigensolve(
    mat,
    zero_tol: float = DEFAULT_ZERO_TOL,
    eigenvectors: bool = False,
    max_sweeps: int = 64,
) -> SymmetricSpectrum:
    """Cyclic Jacobi diagonalization of a dense symmetric matrix.

    Eigenvalues come back sorted ascending; those with |lam| <= zero_tol * max|lam|
    count toward kernel_dim.  Raises on asymmetric input (beyond 1e-10 relative)
    and on failure to converge within `max_sweeps` sweeps.
    """
    a = np.array(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EigensolveError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = float(np.max(np.abs(a))) if n else 0.0
    if scale > 0 and float(np.max(np.abs(a - a.T))) > 1e-10 * scale:
        raise EigensolveError("matrix is not symmetric within 1e-10 relative tolerance")
    a = 0.5 * (a + a.T)
    vecs = np.eye(n) if eigenvectors else None

    if n <= 1 or scale == 0.0:
        vals = np.diag(a).copy() if n else np.zeros(0)
        return _finish_spectrum(vals, vecs, zero_tol)

    def offdiag_norm(mat):
        stripped = mat.copy()
        np.fill_diagonal(stripped, 0.0)
        return float(np.sqrt((stripped * stripped).sum()))

    frob = float(np.sqrt((a * a).sum()))
    stop = 1e-14 * frob
    # skipping only entries below stop/n keeps the sweep productive: a sweep
    # with no rotation implies off-diagonal Frobenius <= stop
    thresh = stop / n
    for _ in range(max_sweeps):
        off = offdiag_norm(a)
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < thresh:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                if vecs is not None:
                    vp = vecs[:, p].copy()
                    vq = vecs[:, q].copy()
                    vecs[:, p] = c * vp - s * vq
                    vecs[:, q] = s * vp + c * vq
    else:
        raise EigensolveError(
            f"Jacobi sweeps did not converge: off-diagonal residual "
            f"{offdiag_norm(a):.3e} after {max_sweeps} sweeps"
        )
    return _finish_spectrum(np.diag(a).copy(), vecs, zero_tol)


def _finish_spectrum(vals, vecs, zero_tol):
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    if vecs is not None:
        vecs = vecs[:, order]
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    kernel = int(np.sum(np.abs(vals) <= zero_tol * scale)) if scale > 0 else vals.size
    spec = SymmetricSpectrum(eigenvalues=vals, kernel_dim=kernel, eigenvectors=vecs)
    object.__setattr__(spec, "__zero_tol", zero_tol)
    return spec


def spectral_gap(g: CommunicationGraph, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """gamma = lambda_min_pos(L) / lambda_max(L) of the weighted Laplacian."""
    if g.n_edges == 0:
        raise EigensolveError("spectral gap undefined for a graph with no edges")
    spec = symmetric_eigensolve(laplacian(g), zero_tol=zero_tol)
    if spec.kernel_dim != 1:
        raise EigensolveError(
            f"Laplacian kernel dimension {spec.kernel_dim} != 1; graph looks disconnected"
        )
    return spec.lambda_min_pos / spec.lambda_max
