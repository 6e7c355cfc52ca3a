"""Centro-affine calculus on a convex body and numerical checks of the uniqueness argument.

With the position vector ``X`` as transversal normal the induced metric is
``g = A[h]/h``, and the Laplacian of the induced connection obeys
``Hess* f + g f = A[h f]/h``. Taking the ``g``-trace,

    Delta f + n f = tr(g^{-1} A[hf] / h) = tr(A[h]^{-1} A[hf]),

which is how :func:`ca_laplacian` is discretised: one 2x2 inverse per node
and no explicit connection coefficients. The conjugate Laplacian follows from
``(Delta - Delta*) f = g(grad log(h^{n+2}/K), grad f)``.

Every ``*_residual`` / ``*_deficit`` function returns a plain float so that
the verification suite can tabulate them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import DIM, BodyGeometry, SupportFunction, compute_geometry
from .sphere_grid import analyze, derivatives, integrate

@dataclass(frozen=True, eq=False)
class CentroAffineStructure:
    body: BodyGeometry
    g: np.ndarray
    g_inv: np.ndarray
    A_inv: np.ndarray
    dV_density: np.ndarray
    log_grad: np.ndarray
    conormal_scale: np.ndarray

    @property
    def grid(self):
        return self.body.grid


def _inv2(M):
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    det = a * d - b * c
    return np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2) / det[..., None, None]


def structure(body: BodyGeometry | SupportFunction) -> CentroAffineStructure:
    if isinstance(body, SupportFunction):
        body = compute_geometry(body)
    grid = body.grid
    h = body.h
    A_inv = _inv2(body.A)
    log_vol = (DIM + 2) * np.log(h) + np.log(body.sigma_n)  # log(h^{n+2}/K)
    return CentroAffineStructure(
        body=body,
        g=body.A / h[..., None, None],
        g_inv=h[..., None, None] * A_inv,
        A_inv=A_inv,
        dV_density=body.dV_density,
        log_grad=frame_grad(grid, log_vol),
        conormal_scale=1.0 / h,
    )


def frame_grad(grid, f):
    return derivatives(grid, analyze(grid, f))[1]


def curvature_matrix(grid, f):
    """``A[f] = hess f + f I`` in the orthonormal frame."""
    v, _, H = derivatives(grid, analyze(grid, f))
    return H + v[..., None, None] * np.eye(2)


def _metric_pair(ca, u, v):
    """``g(grad_g a, grad_g b)`` from frame gradients ``u, v`` of ``a, b``."""
    return np.einsum("...i,...ij,...j->...", u, ca.g_inv, v)


def _dV(ca, f):
    return integrate(ca.grid, f * ca.dV_density)


def ca_laplacian(ca: CentroAffineStructure, f) -> np.ndarray:
    """``Delta f = tr(A[h]^{-1} A[h f]) - n f``."""
    Ahf = curvature_matrix(ca.grid, ca.body.h * f)
    return np.einsum("...ij,...ji->...", ca.A_inv, Ahf) - DIM * f


def ca_laplacian_star(ca: CentroAffineStructure, f) -> np.ndarray:
    df = frame_grad(ca.grid, f)
    return ca_laplacian(ca, f) - _metric_pair(ca, ca.log_grad, df)


def g_norm_sq(ca: CentroAffineStructure, f) -> np.ndarray:
    """``|grad f|_g^2 = h (A^{-1})^{ij} d_i f d_j f``."""
    df = frame_grad(ca.grid, f)
    return _metric_pair(ca, df, df)


def log_grad_dot_hX(ca: CentroAffineStructure, vec_grad=None) -> np.ndarray:
    """``<v, h X>`` for a tangent field ``v`` (default ``grad log(h^{n+2}/K)``)."""
    v = ca.log_grad if vec_grad is None else vec_grad
    # the tangential part of X is grad h
    return ca.body.h * np.sum(v * ca.body.gradh, axis=-1)


def _coordinate(body: BodyGeometry, w) -> np.ndarray:
    return body.X @ np.asarray(w, dtype=float)


def main_identity_residual(body: BodyGeometry, ca: CentroAffineStructure | None = None,
                           integral: bool = False) -> float:
    """``max |Delta <X,E_k> + n <X,E_k> - <grad log(h^{n+2}/K), h E_k>|`` over nodes and k.

    With ``integral=True`` the integrated form ``n int X dV = int h grad log(...) dV``
    is checked instead, relative to ``int |X| dV``.
    """
    ca = ca or structure(body)
    grid = body.grid
    lg = grid.tangent_to_vector(ca.log_grad)
    if integral:
        lhs = DIM * integrate(grid, body.X * body.dV_density[..., None])
        rhs = integrate(grid, body.h[..., None] * lg * body.dV_density[..., None])
        scale = integrate(grid, np.linalg.norm(body.X, axis=-1) * body.dV_density)
        return float(np.max(np.abs(lhs - rhs)) / scale)
    worst = 0.0
    for k in range(3):
        w = np.eye(3)[k]
        f = _coordinate(body, w)
        res = ca_laplacian(ca, f) + DIM * f - body.h * (lg @ w)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def gauss_equation_residual(body: BodyGeometry, ca: CentroAffineStructure | None = None) -> float:
    """``max |Delta* <X,E_k> + n <X,E_k>|``."""
    ca = ca or structure(body)
    worst = 0.0
    for k in range(3):
        f = _coordinate(body, np.eye(3)[k])
        worst = max(worst, float(np.max(np.abs(ca_laplacian_star(ca, f) + DIM * f))))
    return worst


def ibp_residual(body: BodyGeometry, f, ca: CentroAffineStructure | None = None) -> float:
    """Relative defect of ``int |X|^2 f Delta f + f g(grad f, grad |X|^2) dV = -int |X|^2 |grad f|_g^2 dV``.

    Scaled by ``int |X|^2 (|grad f|_g^2 + f^2) dV`` so a constant ``f`` does not divide by zero.
    """
    ca = ca or structure(body)
    X2 = body.r**2
    df = frame_grad(body.grid, f)
    dX2 = frame_grad(body.grid, X2)
    lhs = _dV(ca, X2 * f * ca_laplacian(ca, f) + f * _metric_pair(ca, df, dX2))
    rhs_mag = _dV(ca, X2 * _metric_pair(ca, df, df))
    floor = _dV(ca, X2 * f * f)
    return float(abs(lhs + rhs_mag) / (rhs_mag + floor + 1e-300))


def local_bm_terms(ca: CentroAffineStructure, f):
    """``(int |grad f|^2 dV, int f^2 dV, (int f dV)^2 / int dV)``."""
    vol = _dV(ca, 1.0)
    return (float(_dV(ca, g_norm_sq(ca, f))), float(_dV(ca, f * f)),
            float(_dV(ca, f) ** 2 / vol))


def local_bm_deficit(body: BodyGeometry, f, ca: CentroAffineStructure | None = None,
                     with_scale: bool = False):
    """``int |grad f|_g^2 dV + n (int f dV)^2/int dV - n int f^2 dV`` (non-negative)."""
    ca = ca or structure(body)
    grad2, sq, mean2 = local_bm_terms(ca, f)
    deficit = grad2 + DIM * mean2 - DIM * sq
    if with_scale:
        return deficit, grad2 + DIM * sq
    return deficit


def local_bm2_deficit(body: BodyGeometry, f, ca: CentroAffineStructure | None = None,
                      with_scale: bool = False):
    """``int (Delta f)^2 dV - n int |grad f|_g^2 dV`` (non-negative)."""
    ca = ca or structure(body)
    lap2 = float(_dV(ca, ca_laplacian(ca, f) ** 2))
    grad2 = float(_dV(ca, g_norm_sq(ca, f)))
    deficit = lap2 - DIM * grad2
    if with_scale:
        return deficit, lap2 + DIM * grad2
    return deficit


def equality_field(body: BodyGeometry, w) -> np.ndarray:
    """``<x/h, w>``: the extremals of the local Brunn-Minkowski inequality."""
    return (body.grid.nodes @ np.asarray(w, dtype=float)) / body.h


def _lemma_rhs(ca, f):
    body = ca.body
    m = integrate(body.grid, (f * body.dV_density)[..., None] * body.X)
    return float(DIM * np.dot(m, m) / _dV(ca, 1.0))


def lemma32_check(body: BodyGeometry, f, ca: CentroAffineStructure | None = None):
    """``(lhs, rhs)`` of
    ``int f^2 (<grad log(h^{n+2}/K), hX> - |X|^2 |grad log f|_g^2) dV <= n |int f X dV|^2 / int dV``.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("lemma32_check needs a strictly positive f")
    ca = ca or structure(body)
    dlog = frame_grad(body.grid, np.log(f))
    integrand = f**2 * (log_grad_dot_hX(ca) - body.r**2 * _metric_pair(ca, dlog, dlog))
    return float(_dV(ca, integrand)), _lemma_rhs(ca, f)


def lemma33_check(body: BodyGeometry, alpha: float, ca: CentroAffineStructure | None = None):
    """``(lhs, rhs)`` of the radial form with ``f = r^alpha``:
    ``int f^2 <grad log(h^{n+2}/K) - alpha^2 grad log r, hX> dV <= n |int f X dV|^2 / int dV``.
    """
    ca = ca or structure(body)
    f = body.r**alpha
    dlogr = frame_grad(body.grid, np.log(body.r))
    integrand = f**2 * log_grad_dot_hX(ca, ca.log_grad - alpha**2 * dlogr)
    return float(_dV(ca, integrand)), _lemma_rhs(ca, f)


def euler_identity_residual(body: BodyGeometry, p: float) -> float:
    """Relative defect of ``int X h^p dmu = ((n+1+p)/n) int h^p grad h dmu``.

    Holds for every body by the divergence theorem on the sphere.
    """
    grid = body.grid
    hp = body.h**p
    lhs = integrate(grid, body.X * hp[..., None])
    rhs = (DIM + 1.0 + p) / DIM * integrate(grid, grid.tangent_to_vector(body.gradh) * hp[..., None])
    scale = integrate(grid, np.linalg.norm(body.X, axis=-1) * hp)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def euler_solution_form(body: BodyGeometry, p: float, q: float):
    """``(int r^a X dV, ((n+1+p)/n) int r^a grad h dV)`` with ``a = q-n-1``.

    The two agree when ``h`` solves the (p, q) problem with ``c = 1``.
    """
    grid = body.grid
    wgt = (body.r ** (q - DIM - 1.0) * body.dV_density)[..., None]
    lhs = integrate(grid, body.X * wgt)
    rhs = (DIM + 1.0 + p) / DIM * integrate(grid, grid.tangent_to_vector(body.gradh) * wgt)
    return lhs, rhs


def conjugacy_trace_residual(ca: CentroAffineStructure, f) -> float:
    """``tr_g Hess* f + n f`` against ``tr(A^{-1} A[hf])`` with ``Hess* f = A[hf]/h - g f``."""
    hess_star = curvature_matrix(ca.grid, ca.body.h * f) / ca.body.h[..., None, None] \
        - ca.g * f[..., None, None]
    tr_g = np.einsum("...ij,...ji->...", ca.g_inv, hess_star)
    return float(np.max(np.abs(tr_g + DIM * f - (ca_laplacian(ca, f) + DIM * f))))
