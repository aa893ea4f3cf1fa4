"""The magnetic operator ``-lap + W`` linearized at a harmonic map, and its lowest eigenvalue.

Unknowns are the two frame components of a field at every interior node,
interleaved: index ``2 p + c`` for interior node ``p`` (row-major, ``x1``
fastest) and component ``c``.  Boundary nodes carry the Dirichlet value 0.

The operator is assembled from its quadratic form.  With ``w`` the node
volumes, ``S`` is the symmetric stiffness matrix with
``f^T S f = <f, (-lap + W) f>_{L2}`` and the returned matrix is
``M = w^{-1/2} S w^{-1/2}``, whose Rayleigh quotient equals the L2 one.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError
from .gauge import limit_connection
from .grid import MIN_NODES, Grid, MapField


@dataclass
class OperatorMatrix:
    matrix: sp.csr_matrix
    stiffness: sp.csr_matrix
    weights: np.ndarray  # node volumes, interior nodes in unknown order
    grid: Grid
    with_W: bool = True
    split: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def to_field(self, x):
        """Unknown vector (in ``M`` scaling) -> field ``(2, n2, n1)`` with zero boundary."""
        g = self.grid
        f = np.zeros((2,) + g.shape)
        v = np.asarray(x) / np.repeat(np.sqrt(self.weights), 2)
        f[:, 1:-1, 1:-1] = v.reshape(g.n2 - 2, g.n1 - 2, 2).transpose(2, 0, 1)
        return f

    def from_field(self, f):
        """Field ``(2, n2, n1)`` -> unknown vector (interior values times ``sqrt(w)``)."""
        v = np.asarray(f)[:, 1:-1, 1:-1].transpose(1, 2, 0).ravel()
        return v * np.repeat(np.sqrt(self.weights), 2)

    def apply(self, f):
        """Discrete ``(-lap + W) f`` for a field with zero boundary values."""
        v = np.asarray(f)[:, 1:-1, 1:-1].transpose(1, 2, 0).ravel()
        r = (self.stiffness @ v) / np.repeat(self.weights, 2)
        g = self.grid
        out = np.zeros((2,) + g.shape)
        out[:, 1:-1, 1:-1] = r.reshape(g.n2 - 2, g.n1 - 2, 2).transpose(2, 0, 1)
        return out

    def to_coo_text(self, path):
        """One ``row col value`` line per stored entry, in row-major order."""
        m = self.matrix.tocoo()
        order = np.lexsort((m.col, m.row))
        with open(path, "w", encoding="utf-8") as fh:
            for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
                fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")


class _Builder:
    def __init__(self, n):
        self.rows, self.cols, self.vals = [], [], []
        self.n = n

    def add(self, r, c, v):
        self.rows.append(np.asarray(r).ravel())
        self.cols.append(np.asarray(c).ravel())
        self.vals.append(np.asarray(v, dtype=float).ravel())

    def add_sym(self, r, c, v):
        # value computed once, placed at (r, c) and (c, r)
        self.add(r, c, v)
        self.add(c, r, v)

    def build(self):
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return sp.coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()


def _node_fields(Q: MapField):
    L = limit_connection(Q)
    return L.a1, L.a2, L.phi1, L.phi2, L


def assemble_magnetic_operator(Q: MapField, with_W=True, split=True,
                               harmonic_tol=1e-2) -> OperatorMatrix:
    """Dirichlet ``-lap + W`` at ``Q`` with ``W`` built from the limit connection of ``Q``.

    ``W f = -2 h^ii A_i d_i f - h^ii A_i A_i f - h^ii (f ^ phi_i) phi_i
    - h^ii (d_i A_i - G^k_ii A_k) f``.  With ``split`` the first-order part
    is assembled from the edge-averaged form ``-(K_p + K_q) / (2 dx)``,
    ``K = w h A``, which is exactly symmetric; with ``split=False`` the
    pointwise (unsymmetric) discretization is used instead, for comparison.
    """
    g = Q.grid
    if g.n1 - 2 < MIN_NODES or g.n2 - 2 < MIN_NODES:
        raise ConfigError(f"operator needs at least {MIN_NODES}x{MIN_NODES} interior nodes")
    m1, m2 = g.n1 - 2, g.n2 - 2
    node = np.arange(m1 * m2).reshape(m2, m1)
    w_full = g.vol_weights
    w = w_full[1:-1, 1:-1]
    x2 = g.x2
    hb = _Builder(2 * m1 * m2)
    meta = {"n_interior": int(m1 * m2)}

    # -lap: x1 edges (coefficient e^{x2} dx2 / dx1), x2 edges (e^{-x2 mid} dx1 / dx2)
    c1 = (np.exp(x2) * g.dx2 / g.dx1)[1:-1, None] * np.ones((1, m1 + 1))
    mid = 0.5 * (x2[1:] + x2[:-1])
    c2 = (np.exp(-mid) * g.dx1 / g.dx2)[:, None] * np.ones((1, m1))
    diag = c1[:, :-1] + c1[:, 1:] + c2[:-1] + c2[1:]
    for comp in range(2):
        hb.add(2 * node + comp, 2 * node + comp, diag)
        hb.add_sym(2 * node[:, :-1] + comp, 2 * node[:, 1:] + comp, -c1[:, 1:-1])
        hb.add_sym(2 * node[:-1] + comp, 2 * node[1:] + comp, -c2[1:-1])

    if with_W:
        a1, a2, p1, p2, L = _node_fields(Q)
        if L.tension_sup > harmonic_tol:
            warnings.warn(L.warning, RuntimeWarning, stacklevel=2)
            meta["warning"] = L.warning
        h = np.broadcast_to(g.hinv11, g.shape)
        # zeroth order: h (a^2 I + |phi|^2 I - phi phi^T), symmetric 2x2 per node
        z11 = np.zeros(g.shape)
        z22 = np.zeros(g.shape)
        z12 = np.zeros(g.shape)
        for hh, a, p in ((h, a1, p1), (1.0, a2, p2)):
            z11 += hh * (a * a + p[1] * p[1])
            z22 += hh * (a * a + p[0] * p[0])
            z12 += -hh * p[0] * p[1]
        sl = (slice(1, -1), slice(1, -1))
        hb.add(2 * node, 2 * node, (w_full * z11)[sl])
        hb.add(2 * node + 1, 2 * node + 1, (w_full * z22)[sl])
        hb.add_sym(2 * node, 2 * node + 1, (w_full * z12)[sl])

        K1 = w_full * h * a1  # skew block [[0, K], [-K, 0]]
        K2 = w_full * a2
        if split:
            # first-order part, per edge (p, q): block -(K_p + K_q) / (2 dx);
            # the transposed block at (q, p) is +the same scalar pattern
            for K, dx, pa, pb in ((K1, g.dx1, (slice(1, -1), slice(1, -2)),
                                   (slice(1, -1), slice(2, -1))),
                                  (K2, g.dx2, (slice(1, -2), slice(1, -1)),
                                   (slice(2, -1), slice(1, -1)))):
                e = -(K[pa] + K[pb]) / (2.0 * dx)
                if K is K1:
                    P, Qn = node[:, :-1], node[:, 1:]
                else:
                    P, Qn = node[:-1], node[1:]
                # block e * [[0, 1], [-1, 0]] at (P, Qn); its transpose at (Qn, P)
                hb.add_sym(2 * P, 2 * Qn + 1, e)
                hb.add_sym(2 * P + 1, 2 * Qn, -e)
        else:
            d1a1 = np.gradient(a1, g.dx1, axis=1)
            d2a2 = np.gradient(a2, g.dx2, axis=0)
            div = (h * d1a1 + d2a2 - a2)
            for K, dx, axis in ((K1, g.dx1, 1), (K2, g.dx2, 0)):
                k = (-2.0 * K / (2.0 * dx))[sl]
                if axis == 1:
                    pairs = ((node[:, :-1], node[:, 1:], k[:, :-1]),
                             (node[:, 1:], node[:, :-1], -k[:, 1:]))
                else:
                    pairs = ((node[:-1], node[1:], k[:-1]),
                             (node[1:], node[:-1], -k[1:]))
                for Pn, Qn, kv in pairs:
                    hb.add(2 * Pn, 2 * Qn + 1, kv)
                    hb.add(2 * Pn + 1, 2 * Qn, -kv)
            dv = -(w_full * div)[sl]
            hb.add(2 * node, 2 * node + 1, dv)
            hb.add(2 * node + 1, 2 * node, -dv)

    S = hb.build()
    wv = np.repeat(np.sqrt(w.ravel()), 2)
    S = S.tocoo()
    M = sp.coo_matrix((S.data / (wv[S.row] * wv[S.col]), (S.row, S.col)), shape=S.shape).tocsr()
    return OperatorMatrix(M, S.tocsr(), w.ravel().copy(), g, with_W, split, meta)


def symmetry_defect(op) -> float:
    """``max |M - M^T|``."""
    M = op.matrix if isinstance(op, OperatorMatrix) else op
    d = (M - M.T).tocoo()
    return float(np.max(np.abs(d.data))) if d.nnz else 0.0


def quadratic_form(op: OperatorMatrix, f) -> float:
    """``<f, (-lap + W) f>_{L2}`` for a field with zero boundary values."""
    v = np.asarray(f)[:, 1:-1, 1:-1].transpose(1, 2, 0).ravel()
    return float(np.add.reduce(v * (op.stiffness @ v)))


def l2_norm_sq(op: OperatorMatrix, f) -> float:
    v = np.asarray(f)[:, 1:-1, 1:-1].transpose(1, 2, 0).ravel()
    return float(np.add.reduce(np.repeat(op.weights, 2) * v * v))


@dataclass
class EigenReport:
    lambda_min: float
    iterations: int
    converged: bool
    positive_definite: bool
    defect: float
    vector: np.ndarray = field(repr=False, default=None)

    def to_json(self):
        return json.dumps({"lambda_min": self.lambda_min, "iterations": self.iterations,
                           "converged": self.converged,
                           "positive_definite": self.positive_definite,
                           "defect": self.defect}, indent=2, sort_keys=True)


def min_eigenvalue(op: OperatorMatrix, tol=1e-10, seed=0, maxiter=20000, block=4) -> EigenReport:
    """Lowest eigenvalue by block inverse iteration with a sparse LU factorization.

    The two field components make the lowest eigenvalue nearly double at
    small scale, so a single vector would converge at the useless rate
    ``lambda_1 / lambda_2``; iterating a block of ``block`` vectors with a
    Rayleigh-Ritz step converges at ``lambda_1 / lambda_{block+1}``.

    The factorization uses a symmetric ordering without off-diagonal
    pivoting, so the signs of the ``U`` diagonal give the inertia: a
    negative pivot means the operator is not positive definite, which is
    reported rather than raised.  Iteration stops once the lowest Ritz value
    changes by less than ``tol`` (relative) and its residual is below
    ``sqrt(tol) |lambda|``.
    """
    M = op.matrix.tocsc()
    defect = symmetry_defect(op)
    try:
        lu = splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    except RuntimeError:
        return EigenReport(0.0, 0, False, False, defect)
    pd = bool(np.all(lu.U.diagonal() > 0)) and np.array_equal(lu.perm_r, lu.perm_c)
    rng = np.random.default_rng(seed)
    k = max(1, min(block, M.shape[0]))
    X, _ = np.linalg.qr(rng.standard_normal((M.shape[0], k)))
    lam = float(np.min(np.einsum("ij,ij->j", X, M @ X)))
    converged = False
    it = 0
    x = X[:, 0]
    for it in range(1, maxiter + 1):
        Y, _ = np.linalg.qr(lu.solve(X))
        MY = M @ Y
        theta, V = np.linalg.eigh(Y.T @ MY)
        X = Y @ V
        x = X[:, 0]
        new = float(theta[0])
        res = float(np.linalg.norm(MY @ V[:, 0] - new * x))
        done = abs(new - lam) <= tol * abs(new) and res <= math.sqrt(tol) * abs(new)
        lam = new
        if done:
            converged = True
            break
    return EigenReport(lam, it, converged, pd and lam > 0, defect, x)
