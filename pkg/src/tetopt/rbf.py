"""Implicit surface reconstruction with the cubic polyharmonic spline.

The surface is the zero set of

    s(x) = sum_j alpha_j |x - x_j|^3 + beta_0 + beta_1 x + beta_2 y + beta_3 z

interpolating 0 at the boundary points and ``eps`` at the points pushed
``eps`` along their outward normals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, OpenBoundary, SingularSystem, VanishingGradient

MAX_CENTERS = 5000
GRAD_FLOOR = 1e-10
_CHUNK = 2048


def estimate_normals(mesh):
    """Area-weighted outward normals at the boundary vertices.

    Returns ``(vertex_ids, normals)``.
    """
    tris = mesh.boundary_triangles()
    if len(tris) == 0:
        raise OpenBoundary("mesh has no boundary faces")
    # every boundary edge of a closed surface is shared by an even number of faces
    count = {}
    for u, v, w in tris.tolist():
        for e in ((u, v), (v, w), (w, u)):
            k = (min(e), max(e))
            count[k] = count.get(k, 0) + 1
    if any(c % 2 for c in count.values()):
        raise OpenBoundary("boundary surface is not closed")
    P = mesh.points
    raw = np.cross(P[tris[:, 1]] - P[tris[:, 0]], P[tris[:, 2]] - P[tris[:, 0]])
    acc = np.zeros((mesh.n_vertices, 3))
    for c in range(3):
        np.add.at(acc, tris[:, c], raw)
    ids = np.unique(tris)
    n = acc[ids]
    ln = np.linalg.norm(n, axis=1)
    if np.any(ln <= 0.0):
        raise OpenBoundary("boundary vertex with cancelling face normals")
    return ids, n / ln[:, None]


def _kernel(X, C):
    d = X[:, None, :] - C[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    return r * r * r


def _poly(X):
    return np.column_stack([np.ones(len(X)), X])


def solve_interpolant(centers, values):
    """Coefficients ``(alpha, beta)`` of the cubic spline through ``values``."""
    C = np.asarray(centers, dtype=float)
    f = np.asarray(values, dtype=float)
    n = len(C)
    if n < 4:
        raise SingularSystem("need at least four centers")
    P = _poly(C)
    if np.linalg.matrix_rank(P) < 4:
        raise SingularSystem("centers are coplanar; the linear part is not unisolvent")
    A = np.zeros((n + 4, n + 4))
    A[:n, :n] = _kernel(C, C)
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.concatenate([f, np.zeros(4)])
    try:
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    if np.any(np.abs(np.diag(lu)) <= 1e-13 * np.abs(A).max()):
        raise SingularSystem("interpolation matrix is singular (duplicate centers?)")
    sol = scipy.linalg.lu_solve((lu, piv), rhs)
    return sol[:n], sol[n:]


def _subsample(points, normals, limit):
    """Keep at most ``limit`` points, one per cell of a uniform grid."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    ext = max(float(np.max(hi - lo)), 1e-300)
    cells = int(np.ceil(limit ** (1.0 / 2.0)))
    while True:
        key = np.floor((points - lo) / ext * cells).astype(np.int64)
        _, first = np.unique(key, axis=0, return_index=True)
        if len(first) <= limit:
            first.sort()
            return points[first], normals[first]
        cells = int(cells * 0.9)


@dataclass(frozen=True)
class RbfSurface:
    centers: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    epsilon: float
    diag: float

    @property
    def tol(self):
        return 1e-8 * self.diag

    def eval(self, x):
        """s(x) for one point (scalar) or an ``(m, 3)`` array."""
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        out = np.empty(len(X))
        for s in range(0, len(X), _CHUNK):
            B = X[s:s + _CHUNK]
            out[s:s + _CHUNK] = _kernel(B, self.centers) @ self.alpha + _poly(B) @ self.beta
        return float(out[0]) if single else out

    def grad(self, x):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        out = np.empty((len(X), 3))
        for s in range(0, len(X), _CHUNK):
            B = X[s:s + _CHUNK]
            d = B[:, None, :] - self.centers[None, :, :]
            r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
            # grad |x - c|^3 = 3 |x - c| (x - c)
            out[s:s + _CHUNK] = 3.0 * np.einsum("ij,ijk->ik", r * self.alpha[None, :], d) + self.beta[1:]
        return out[0] if single else out

    def project_many(self, X, tol=None, max_iter=50, full_output=False):
        """Move points onto the zero set by normalized gradient steps."""
        X = np.array(X, dtype=float, copy=True)
        tol = self.tol if tol is None else tol
        its = np.zeros(len(X), dtype=np.int64)
        if len(X) == 0:
            return (X, its, np.ones(0, dtype=bool)) if full_output else X
        s = self.eval(X)
        active = np.abs(s) > tol
        for _ in range(max_iter):
            if not active.any():
                break
            g = self.grad(X[active])
            g2 = np.einsum("ij,ij->i", g, g)
            if np.any(np.sqrt(g2) < GRAD_FLOOR):
                raise VanishingGradient("surface gradient vanishes during projection")
            X[active] -= (s[active] / g2)[:, None] * g
            its[active] += 1
            s[active] = self.eval(X[active])
            active = np.abs(s) > tol
        converged = ~active
        if not converged.all():
            warnings.warn(f"{int((~converged).sum())} projections did not converge", NoConvergence)
        return (X, its, converged) if full_output else X

    def project(self, x, tol=None, max_iter=50, full_output=False):
        X, its, ok = self.project_many(np.asarray(x, dtype=float)[None], tol, max_iter, True)
        if full_output:
            return X[0], int(its[0]), bool(ok[0])
        return X[0]


def fit(points, normals, epsilon=None, max_centers=MAX_CENTERS):
    """Fit the implicit surface through ``points`` with outward ``normals``.

    ``epsilon`` defaults to 1% of the bounding box diagonal of the points.
    """
    X = np.asarray(points, dtype=float).reshape(-1, 3)
    N = np.asarray(normals, dtype=float).reshape(-1, 3)
    if len(X) != len(N):
        raise ValueError("points and normals differ in length")
    if len(X) < 4:
        raise SingularSystem("need at least four surface points")
    diag = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    if diag <= 0.0:
        raise SingularSystem("all surface points coincide")
    eps = 0.01 * diag if epsilon is None else float(epsilon)
    if eps <= 0.0:
        raise ValueError("epsilon must be positive")
    if len(X) > max_centers // 2:
        X, N = _subsample(X, N, max_centers // 2)
    C = np.vstack([X, X + eps * N])
    f = np.concatenate([np.zeros(len(X)), np.full(len(X), eps)])
    alpha, beta = solve_interpolant(C, f)
    return RbfSurface(C, alpha, beta, eps, diag)


def fit_mesh(mesh, epsilon_rel=0.01, max_centers=MAX_CENTERS):
    """Fit to the boundary vertices of ``mesh`` with estimated normals.

    The offset is ``epsilon_rel`` times the bounding box diagonal of the
    boundary vertices.
    """
    ids, normals = estimate_normals(mesh)
    X = mesh.points[ids]
    diag = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    return fit(X, normals, epsilon_rel * diag, max_centers)
