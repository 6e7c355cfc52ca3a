"""Gauss-Legendre grids on S^2, real spherical harmonics and covariant derivatives.

Conventions, fixed here and used everywhere else in the package:

* Real, orthonormal harmonics: ``Y_l^0 = Pbar_l^0(cos t)``,
  ``Y_l^m = sqrt(2) Pbar_l^m(cos t) cos(m phi)`` and
  ``Y_l^{-m} = sqrt(2) Pbar_l^m(cos t) sin(m phi)`` for ``m > 0``, where
  ``Pbar`` is the associated Legendre function normalised so that
  ``int Y^2 dmu = 1``. No Condon-Shortley phase.
* Coefficient vectors are flat, length ``(lmax+1)**2``, with ``Y_l^m`` stored at
  index ``l*l + l + m``.
* Fields on the grid are arrays of shape ``grid.shape = (n_theta, n_phi)``.
  Tangent fields carry a trailing axis of length 2 and symmetric tensors a
  trailing ``(2, 2)``, both in the orthonormal frame ``(e_theta, e_phi)``.

All transforms are direct (no FFT); they are linear and accept complex input,
which the solver uses for complex-step derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_LMAX = 4


def n_coeffs(lmax: int) -> int:
    return (lmax + 1) ** 2


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def degrees(lmax: int) -> np.ndarray:
    """Degree ``l`` of every slot in a flat coefficient vector."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(lmax + 1)])


def legendre_tables(lmax: int, theta: np.ndarray):
    """Normalised associated Legendre values and their first two theta-derivatives.

    Returns arrays ``P, dP, d2P`` of shape ``(lmax+1, lmax+1, len(theta))``
    indexed ``[m, l, k]``; entries with ``l < m`` are zero. The ``sqrt(2)``
    factor of the real harmonics with ``m > 0`` is folded in.

    ``theta`` must avoid the poles: the derivative formulas divide by ``sin``.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.cos(theta)
    s = np.sin(theta)
    L = lmax + 1
    P = np.zeros((L, L, theta.size))
    # diagonal Pbar_m^m, then upward recurrence in l
    pmm = np.full(theta.size, np.sqrt(1.0 / (4.0 * np.pi)))
    for m in range(L):
        if m > 0:
            pmm = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
        P[m, m] = pmm
        if m + 1 < L:
            P[m, m + 1] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, L):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[m, l] = a * (x * P[m, l - 1] - b * P[m, l - 2])

    # dP/dtheta from neighbouring orders; no division by sin, so accurate near the poles
    dP = np.zeros_like(P)
    for l in range(1, L):
        dP[0, l] = -np.sqrt(l * (l + 1.0)) * P[1, l]
        for m in range(1, l + 1):
            dP[m, l] = 0.5 * np.sqrt((l + m) * (l - m + 1.0)) * P[m - 1, l]
            if m < l:
                dP[m, l] -= 0.5 * np.sqrt((l + m + 1.0) * (l - m)) * P[m + 1, l]
    # Legendre ODE gives the second derivative
    ll = np.arange(L, dtype=float)
    mm = np.arange(L, dtype=float)
    cot = x / s
    d2P = (-cot * dP
           - (ll[None, :, None] * (ll[None, :, None] + 1.0)
              - mm[:, None, None] ** 2 / s**2) * P)
    d2P[np.arange(L)[:, None] > np.arange(L)[None, :]] = 0.0

    scale = np.where(mm > 0, np.sqrt(2.0), 1.0)[:, None, None]
    return P * scale, dP * scale, d2P * scale


def _coeff_maps(lmax: int):
    """Index arrays scattering a flat vector into cos/sin tables ``[m, l]``."""
    L = lmax + 1
    cos_idx = np.full((L, L), -1)
    sin_idx = np.full((L, L), -1)
    for l in range(L):
        for m in range(l + 1):
            cos_idx[m, l] = lm_index(l, m)
            if m > 0:
                sin_idx[m, l] = lm_index(l, -m)
    return cos_idx, sin_idx


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Tensor grid of Gauss-Legendre colatitudes and uniform longitudes."""

    lmax: int
    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray
    frame: np.ndarray
    christoffels: np.ndarray
    _P: np.ndarray = field(repr=False)
    _dP: np.ndarray = field(repr=False)
    _d2P: np.ndarray = field(repr=False)
    _cos: np.ndarray = field(repr=False)
    _sin: np.ndarray = field(repr=False)
    _cos_idx: np.ndarray = field(repr=False)
    _sin_idx: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.theta)[:, None] * np.ones(self.n_phi)

    @property
    def cot_theta(self) -> np.ndarray:
        return self.christoffels[..., 0]

    def to_tables(self, coeffs):
        """Scatter a flat coefficient vector into ``(C, S)`` tables ``[m, l]``."""
        coeffs = np.asarray(coeffs)
        padded = np.concatenate([coeffs, np.zeros(1, dtype=coeffs.dtype)])
        return padded[self._cos_idx], padded[self._sin_idx]

    def from_tables(self, C, S):
        out = np.zeros(n_coeffs(self.lmax), dtype=np.result_type(C, S))
        ok = self._cos_idx >= 0
        out[self._cos_idx[ok]] = C[ok]
        ok = self._sin_idx >= 0
        out[self._sin_idx[ok]] = S[ok]
        return out

    def tangent_to_vector(self, t: np.ndarray) -> np.ndarray:
        """Embed frame components ``(..., 2)`` as 3-vectors ``(..., 3)``."""
        return t[..., 0, None] * self.frame[..., 0, :] + t[..., 1, None] * self.frame[..., 1, :]


def _legendre_and_derivative(n: int, x: np.ndarray):
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    return p1, n * (x * p1 - p0) / (x * x - 1.0)


def gauss_legendre(n: int):
    """Nodes and weights on [-1, 1], Newton-polished.

    ``numpy.polynomial.legendre.leggauss`` weights are only good to ~1e-15;
    that error leaks into the m = 0 coefficients of every analysis and is
    amplified by l^2 in second derivatives.
    """
    x, _ = np.polynomial.legendre.leggauss(n)
    for _ in range(3):
        p, dp = _legendre_and_derivative(n, x)
        x = x - p / dp
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # enforce the exact symmetry of the rule
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def build_grid(lmax: int) -> SphericalGrid:
    """Grid with ``lmax+1`` Gauss-Legendre colatitudes and ``2*lmax+2`` longitudes.

    Quadrature is exact for band limit ``2*lmax+1``, so analysis is an exact
    inverse of synthesis for coefficient vectors up to degree ``lmax``.
    """
    lmax = int(lmax)
    if lmax < MIN_LMAX:
        raise ValueError(f"lmax must be >= {MIN_LMAX}, got {lmax}")
    n_theta = lmax + 1
    n_phi = 2 * lmax + 2
    xg, wg = gauss_legendre(n_theta)
    # north to south
    xg, wg = xg[::-1], wg[::-1]
    theta = np.arccos(xg)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi

    weights = wg[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None, :]
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    sp, cp = np.sin(phi)[None, :], np.cos(phi)[None, :]
    nodes = np.stack(np.broadcast_arrays(st * cp, st * sp, ct * np.ones_like(cp)), axis=-1)
    e_theta = np.stack(np.broadcast_arrays(ct * cp, ct * sp, -st * np.ones_like(cp)), axis=-1)
    e_phi = np.stack(np.broadcast_arrays(-sp * np.ones_like(st), cp * np.ones_like(st),
                                         np.zeros((n_theta, n_phi))), axis=-1)
    frame = np.stack([e_theta, e_phi], axis=-2)
    # Gamma^phi_{theta phi} = cot, Gamma^theta_{phi phi} = -sin cos (coordinate basis)
    christoffels = np.stack(np.broadcast_arrays(ct / st * np.ones_like(cp),
                                                -st * ct * np.ones_like(cp)), axis=-1)

    P, dP, d2P = legendre_tables(lmax, theta)
    m = np.arange(lmax + 1)
    cos_idx, sin_idx = _coeff_maps(lmax)
    return SphericalGrid(
        lmax=lmax, n_theta=n_theta, n_phi=n_phi, theta=theta, phi=phi,
        weights=weights, nodes=nodes, frame=frame, christoffels=christoffels,
        _P=P, _dP=dP, _d2P=d2P,
        _cos=np.cos(np.outer(m, phi)), _sin=np.sin(np.outer(m, phi)),
        _cos_idx=cos_idx, _sin_idx=sin_idx,
    )


def analyze(grid: SphericalGrid, values) -> np.ndarray:
    """Project grid values onto harmonics up to ``grid.lmax`` by quadrature.

    Content above ``lmax`` aliases; that is not treated as an error.
    """
    values = np.asarray(values)
    dphi = 2.0 * np.pi / grid.n_phi
    Fc = values @ grid._cos.T * dphi          # [j, m]
    Fs = values @ grid._sin.T * dphi
    wt = grid.weights[:, 0] / dphi             # Gauss weights in cos(theta)
    C = np.einsum("mlj,jm,j->ml", grid._P, Fc, wt)
    S = np.einsum("mlj,jm,j->ml", grid._P, Fs, wt)
    return grid.from_tables(C, S)


def _parts(grid: SphericalGrid, coeffs, table):
    C, S = grid.to_tables(coeffs)
    A = np.einsum("ml,mlj->jm", C, table)
    B = np.einsum("ml,mlj->jm", S, table)
    return A, B


def synthesize(grid: SphericalGrid, coeffs) -> np.ndarray:
    A, B = _parts(grid, coeffs, grid._P)
    return A @ grid._cos + B @ grid._sin


def partials(grid: SphericalGrid, coeffs) -> dict:
    """Coordinate partial derivatives up to second order at the grid nodes.

    Keys: ``f, t, p, tt, tp, pp`` (t = theta, p = phi).
    """
    m = np.arange(grid.lmax + 1)
    cos, sin = grid._cos, grid._sin
    A, B = _parts(grid, coeffs, grid._P)
    At, Bt = _parts(grid, coeffs, grid._dP)
    Att, Btt = _parts(grid, coeffs, grid._d2P)
    return {
        "f": A @ cos + B @ sin,
        "p": (B * m) @ cos - (A * m) @ sin,
        "pp": -(A * m**2) @ cos - (B * m**2) @ sin,
        "t": At @ cos + Bt @ sin,
        "tp": (Bt * m) @ cos - (At * m) @ sin,
        "tt": Att @ cos + Btt @ sin,
    }


def _frame_derivs(d: dict, sin, cot):
    grad = np.stack([d["t"], d["p"] / sin], axis=-1)
    h11 = d["tt"]
    h12 = (d["tp"] - cot * d["p"]) / sin
    h22 = d["pp"] / sin**2 + cot * d["t"]
    hess = np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)
    return grad, hess


def derivatives(grid: SphericalGrid, coeffs):
    """Values, frame gradient and covariant Hessian of a band-limited field."""
    d = partials(grid, coeffs)
    grad, hess = _frame_derivs(d, grid.sin_theta, grid.cot_theta)
    return d["f"], grad, hess


def grad_sphere(grid: SphericalGrid, f) -> np.ndarray:
    """Round-metric gradient in the ``(e_theta, e_phi)`` frame."""
    return derivatives(grid, analyze(grid, f))[1]


def hess_sphere(grid: SphericalGrid, f) -> np.ndarray:
    """Covariant Hessian of the round metric, shape ``grid.shape + (2, 2)``."""
    return derivatives(grid, analyze(grid, f))[2]


def laplace_beltrami(grid: SphericalGrid, f) -> np.ndarray:
    ell = degrees(grid.lmax)
    return synthesize(grid, -ell * (ell + 1.0) * analyze(grid, f))


def integrate(grid: SphericalGrid, f):
    """Quadrature of ``f dmu``; a trailing vector axis is integrated componentwise."""
    f = np.asarray(f)
    if f.ndim == 3:
        return np.einsum("ij,ijk->k", grid.weights, f)
    return np.sum(grid.weights * f)


def angles(points: np.ndarray):
    points = np.asarray(points, dtype=float)
    theta = np.arccos(np.clip(points[..., 2] / np.linalg.norm(points, axis=-1), -1.0, 1.0))
    phi = np.arctan2(points[..., 1], points[..., 0])
    return theta, phi


def point_frame(points: np.ndarray) -> np.ndarray:
    """Orthonormal ``(e_theta, e_phi)`` at arbitrary points, shape ``(..., 2, 3)``."""
    theta, phi = angles(points)
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    e_t = np.stack([ct * cp, ct * sp, -st], -1)
    e_p = np.stack([-sp, cp, np.zeros_like(sp)], -1)
    return np.stack([e_t, e_p], -2)


def evaluate(grid: SphericalGrid, coeffs, points: np.ndarray):
    """Evaluate a coefficient vector and its frame derivatives at arbitrary points.

    ``points`` has shape ``(K, 3)``; returns ``(values, grad, hess)`` with the
    same frame convention as :func:`derivatives` (frame from :func:`point_frame`).
    """
    theta, phi = angles(np.atleast_2d(points))
    P, dP, d2P = legendre_tables(grid.lmax, theta)
    C, S = grid.to_tables(coeffs)
    m = np.arange(grid.lmax + 1)
    cos = np.cos(np.outer(m, phi))
    sin = np.sin(np.outer(m, phi))

    def pair(table):
        return np.einsum("ml,mlk->mk", C, table), np.einsum("ml,mlk->mk", S, table)

    A, B = pair(P)
    At, Bt = pair(dP)
    Att, Btt = pair(d2P)
    mm = m[:, None]
    d = {
        "f": np.sum(A * cos + B * sin, 0),
        "p": np.sum(mm * (B * cos - A * sin), 0),
        "pp": np.sum(-mm**2 * (A * cos + B * sin), 0),
        "t": np.sum(At * cos + Bt * sin, 0),
        "tp": np.sum(mm * (Bt * cos - At * sin), 0),
        "tt": np.sum(Att * cos + Btt * sin, 0),
    }
    s = np.sin(theta)
    grad, hess = _frame_derivs(d, s, np.cos(theta) / s)
    return d["f"], grad, hess
