"""Thin-plate spline displacement fields for the advection fast path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import SingularSystem

MAX_SAMPLES = 1000
RESIDUAL_TOL = 1e-8


def _tps(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


@dataclass(frozen=True)
class RbfInterpolator:
    centers: np.ndarray      # (n, 3) retained sample points
    values: np.ndarray       # (n, 3) displacements at the samples
    weights: np.ndarray      # (n, 3) kernel weights
    poly: np.ndarray         # (4, 3) coefficients of [1, x, y, z]
    kernel: str = "thin_plate"

    def __call__(self, pts) -> np.ndarray:
        p = np.asarray(pts, float)
        single = p.ndim == 1
        p = p.reshape(-1, 3)
        if not np.any(self.weights) and not np.any(self.poly):
            out = np.zeros_like(p)
        else:
            out = _tps(cdist(p, self.centers)) @ self.weights + self.poly[0] + p @ self.poly[1:]
        return out[0] if single else out

    @property
    def is_zero(self) -> bool:
        return not np.any(self.weights) and not np.any(self.poly)


DUPLICATE_TOL = 1e-9


def farthest_point_indices(points: np.ndarray, m: int) -> np.ndarray:
    """Greedy farthest-point sample, seeded at the first point.

    Points closer than ``DUPLICATE_TOL`` times the cloud's diagonal to a chosen
    point count as duplicates and are never picked.
    """
    pts = np.asarray(points, float)
    n = len(pts)
    if n == 0:
        return np.zeros(0, np.int64)
    tol = DUPLICATE_TOL * float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    chosen = [0]
    d = np.linalg.norm(pts - pts[0], axis=1)
    while len(chosen) < min(m, n):
        i = int(np.argmax(d))
        if d[i] <= tol:
            break
        chosen.append(i)
        d = np.minimum(d, np.linalg.norm(pts - pts[i], axis=1))
    return np.asarray(chosen, np.int64)


def build_rbf(rest_vertices, posed_vertices, max_samples: int = MAX_SAMPLES) -> RbfInterpolator:
    """Fit the displacement ``posed - rest`` as a function of the rest position."""
    rest = np.asarray(rest_vertices, float).reshape(-1, 3)
    posed = np.asarray(posed_vertices, float).reshape(-1, 3)
    if rest.shape != posed.shape:
        raise ValueError("rest and posed vertex lists differ in length")
    idx = farthest_point_indices(rest, max_samples)
    x, f = rest[idx], posed[idx] - rest[idx]
    n = len(x)
    if n < 4:
        raise SingularSystem(f"{n} distinct samples cannot fix a linear tail")
    P = np.hstack([np.ones((n, 1)), x])
    if np.linalg.matrix_rank(P) < 4:
        raise SingularSystem("samples are coplanar")
    if not np.any(f):
        return RbfInterpolator(x, f, np.zeros((n, 3)), np.zeros((4, 3)))
    A = np.zeros((n + 4, n + 4))
    A[:n, :n] = _tps(cdist(x, x))
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.vstack([f, np.zeros((4, 3))])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    residual = np.abs(A[:n] @ sol - f).max()
    if not residual < RESIDUAL_TOL:
        raise SingularSystem(f"interpolation residual {residual:.3g} exceeds {RESIDUAL_TOL}")
    return RbfInterpolator(x, f, sol[:n], sol[n:])


def advect_query(p, rbf: RbfInterpolator) -> np.ndarray:
    p = np.asarray(p, float)
    if rbf.is_zero:
        return p.copy()
    return p + rbf(p)
