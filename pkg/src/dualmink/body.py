"""Convex bodies through their support functions, and the geometry derived from them."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sphere_grid import (
    SphericalGrid,
    analyze,
    build_grid,
    derivatives,
    evaluate,
    lm_index,
    n_coeffs,
    point_frame,
    synthesize,
)

DIM = 2  # n: the bodies live in R^{n+1} = R^3
CONVEXITY_RTOL = 1e-10


class GeometryError(ValueError):
    pass


class NotPositive(GeometryError):
    def __init__(self, node, value):
        self.node, self.value = node, value
        super().__init__(f"support function not positive at node {node}: h = {value:.3e}")


class NotConvex(GeometryError):
    def __init__(self, lambda_min, node):
        self.lambda_min, self.node = lambda_min, node
        super().__init__(f"A[h] not positive-definite at node {node}: lambda_min = {lambda_min:.3e}")


class PolarError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class SupportFunction:
    grid: SphericalGrid
    coeffs: np.ndarray
    provenance: str = "analytic"

    @property
    def values(self) -> np.ndarray:
        return synthesize(self.grid, self.coeffs)

    def scaled(self, factor: float) -> "SupportFunction":
        return SupportFunction(self.grid, factor * self.coeffs, self.provenance)

    def on_grid(self, grid: SphericalGrid) -> "SupportFunction":
        """Same body, coefficients truncated or zero-padded to ``grid.lmax``."""
        out = np.zeros(n_coeffs(grid.lmax))
        k = min(out.size, self.coeffs.size)
        out[:k] = self.coeffs[:k]
        return SupportFunction(grid, out, self.provenance)


@dataclass(frozen=True, eq=False)
class BodyGeometry:
    grid: SphericalGrid
    h: np.ndarray
    gradh: np.ndarray
    A: np.ndarray
    sigma_n: np.ndarray
    gauss_curv: np.ndarray
    X: np.ndarray
    r: np.ndarray
    dV_density: np.ndarray
    lambda_min: float
    coeffs: np.ndarray

    @property
    def volume_measure(self) -> float:
        """``int dV`` (``n+1`` times the volume of the body)."""
        return float(np.sum(self.grid.weights * self.dV_density))


@dataclass(frozen=True, eq=False)
class PolarBody:
    hstar: np.ndarray
    support: SupportFunction
    preimage: np.ndarray
    newton_iterations: int


def curvature_fields(grid: SphericalGrid, coeffs):
    """``h``, frame gradient, ``A[h]`` and ``det A[h]`` without any validation.

    Works for complex coefficients, which the solver relies on.
    """
    h, gradh, hess = derivatives(grid, coeffs)
    A = hess + h[..., None, None] * np.eye(2)
    sigma = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return h, gradh, A, sigma


def _eig_min_max(A):
    a, b, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return mid - rad, mid + rad


def check_convex(A, h):
    """Raise ``NotPositive`` / ``NotConvex`` unless ``h > 0`` and ``A`` is uniformly definite."""
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        node = np.unravel_index(np.argmin(np.nan_to_num(h, nan=-np.inf)), h.shape)
        raise NotPositive(node, float(h[node]))
    lo, hi = _eig_min_max(A)
    if not np.all(np.isfinite(lo)) or lo.min() < CONVEXITY_RTOL * hi.max():
        node = np.unravel_index(np.argmin(np.nan_to_num(lo, nan=-np.inf)), lo.shape)
        raise NotConvex(float(lo[node]), node)
    return float(lo.min())


def compute_geometry(sf: SupportFunction) -> BodyGeometry:
    grid = sf.grid
    h, gradh, A, sigma = curvature_fields(grid, sf.coeffs)
    lam = check_convex(A, h)
    X = grid.tangent_to_vector(gradh) + h[..., None] * grid.nodes
    r = np.sqrt(np.sum(gradh**2, axis=-1) + h**2)
    return BodyGeometry(
        grid=grid, h=h, gradh=gradh, A=A, sigma_n=sigma, gauss_curv=1.0 / sigma,
        X=X, r=r, dV_density=h * sigma, lambda_min=lam, coeffs=np.asarray(sf.coeffs),
    )


def make_ball(grid: SphericalGrid, center=(0.0, 0.0, 0.0), R: float = 1.0) -> SupportFunction:
    """Ball of radius ``R`` about ``center``: ``h(x) = R + <center, x>``."""
    center = np.asarray(center, dtype=float)
    if R <= 0 or np.linalg.norm(center) >= R:
        raise ValueError("origin must lie in the interior: need |center| < R")
    coeffs = analyze(grid, R + grid.nodes @ center)
    coeffs[4:] = 0.0  # exact zeros above degree 1
    return SupportFunction(grid, coeffs, "analytic")


def random_coefficients(rng: np.random.Generator, amplitude: float, lmax_body: int) -> np.ndarray:
    """Uniform draws for degrees ``2..lmax_body`` scaled by ``amplitude * 2/(l(l+1)-2)``.

    The damping keeps ``|c_lm| <= amplitude`` and the perturbation of ``A[h]``
    of the same order at every degree, so that polar bodies stay resolvable
    at ``lmax = 32``.
    """
    out = np.zeros(n_coeffs(lmax_body))
    for l in range(2, lmax_body + 1):
        damp = 2.0 / (l * (l + 1) - 2)
        for m in range(-l, l + 1):
            out[lm_index(l, m)] = amplitude * damp * rng.uniform(-1.0, 1.0)
    return out


def make_random_body(grid: SphericalGrid, seed: int, amplitude: float = 0.05,
                     lmax_body: int = 4, max_retries: int = 20) -> SupportFunction:
    """Perturbed unit sphere ``1 + sum c_lm Y_l^m``, redrawn until strictly convex.

    Deterministic per ``seed``.
    """
    if lmax_body > grid.lmax:
        raise ValueError("lmax_body exceeds the grid band limit")
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(max_retries):
        coeffs = np.zeros(n_coeffs(grid.lmax))
        coeffs[0] = np.sqrt(4.0 * np.pi)
        pert = random_coefficients(rng, amplitude, lmax_body)
        coeffs[: pert.size] += pert
        sf = SupportFunction(grid, coeffs, "random")
        h, _, A, _ = curvature_fields(grid, coeffs)
        try:
            check_convex(A, h)
            return sf
        except GeometryError as exc:
            last = exc
    raise GeometryError(f"no convex body after {max_retries} draws (seed={seed}, "
                        f"amplitude={amplitude}): {last}")


def power(x, a):
    """``x**a`` through exp/log; ``x`` positive."""
    return np.exp(a * np.log(x))


def pde_operator(h, r, sigma, p, q):
    """``G[h] = h^(p-1) |Dh|^(n+1-q) K``."""
    return power(h, p - 1.0) * power(r, DIM + 1.0 - q) / sigma


def pde_residual(geom: BodyGeometry, p: float, q: float, c: float = 1.0) -> np.ndarray:
    """Pointwise ``h^(p-1) r^(n+1-q) K - c``."""
    return pde_operator(geom.h, geom.r, geom.sigma_n, p, q) - c


def monge_ampere_residual(geom: BodyGeometry, p: float, q: float, c: float = 1.0) -> np.ndarray:
    """The same equation in the form ``h^(1-p) r^(q-n-1) det A[h] - 1/c``."""
    return power(geom.h, 1.0 - p) * power(geom.r, q - DIM - 1.0) * geom.sigma_n - 1.0 / c


def _radial_newton(sf: SupportFunction, u: np.ndarray, max_iter: int, tol: float):
    """For each unit ``u`` find ``x`` with ``X(x)`` parallel to ``u``; returns ``(rho, x, iters)``."""
    grid = sf.grid
    nodes = grid.nodes.reshape(-1, 3)
    hv = synthesize(grid, sf.coeffs).ravel()
    x = np.empty_like(u)
    # coarse minimiser of h(x)/<x,u> over the nodes
    for start in range(0, len(u), 512):
        dots = u[start:start + 512] @ nodes.T
        ratio = np.where(dots > 1e-3, hv[None, :] / np.where(dots > 1e-3, dots, 1.0), np.inf)
        x[start:start + 512] = nodes[np.argmin(ratio, axis=1)]
    target = point_frame(u)
    for it in range(1, max_iter + 1):
        h, g, H = evaluate(grid, sf.coeffs, x)
        F = point_frame(x)
        X = np.einsum("ki,kij->kj", g, F) + h[:, None] * x
        A = H + h[:, None, None] * np.eye(2)
        R = np.einsum("kj,kaj->ka", X, target)
        if np.max(np.abs(R)) < tol * np.max(np.abs(h)):
            break
        # d<X, a_k>/dv_i = sum_j A_ij <F_j, a_k>
        FT = np.einsum("kjc,kac->kja", F, target)
        J = np.einsum("kij,kja->kai", A, FT)
        v = np.linalg.solve(J, -R[..., None])[..., 0]
        x = x + np.einsum("ki,kic->kc", v, F)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    else:
        raise PolarError(f"radial Newton did not converge in {max_iter} iterations "
                         f"(max residual {np.max(np.abs(R)):.3e})")
    rho = np.einsum("kc,kc->k", X, u)
    return rho, x, it


def polar_body(sf: SupportFunction, max_iter: int = 30, tol: float = 1e-14) -> PolarBody:
    """Support function of ``K* = {y : <x, y> <= 1 for x in K}`` on the same grid.

    ``h*(u) = 1/rho_K(u)``; the radial function is found by Newton iteration
    on the inverse Gauss map, started from the best grid node.
    """
    grid = sf.grid
    compute_geometry(sf)  # rejects non-positive or non-convex input
    u = grid.nodes.reshape(-1, 3)
    rho, x, iters = _radial_newton(sf, u, max_iter, tol)
    hstar = (1.0 / rho).reshape(grid.shape)
    support = SupportFunction(grid, analyze(grid, hstar), "polar")
    return PolarBody(hstar=hstar, support=support, preimage=x.reshape(grid.shape + (3,)),
                     newton_iterations=iters)


def polar_identity_check(sf: SupportFunction, polar: PolarBody | None = None) -> float:
    """``max |h^(n+2)(x) h*^(n+2)(x*) / (K(x) K*(x*)) - 1|`` with ``x* = X/|X|``.

    ``h*`` and its curvature are evaluated spectrally at the off-grid ``x*``.
    """
    geom = compute_geometry(sf)
    if polar is None:
        polar = polar_body(sf)
    xs = (geom.X / geom.r[..., None]).reshape(-1, 3)
    hs, _, Hs = evaluate(sf.grid, polar.support.coeffs, xs)
    As = Hs + hs[:, None, None] * np.eye(2)
    sigma_s = As[:, 0, 0] * As[:, 1, 1] - As[:, 0, 1] ** 2
    ratio = (geom.h.ravel() ** (DIM + 2) * geom.sigma_n.ravel()
             * hs ** (DIM + 2) * sigma_s)
    return float(np.max(np.abs(ratio - 1.0)))


def body_to_dict(sf: SupportFunction) -> dict:
    lmax = sf.grid.lmax
    rows = [[l, m, float(sf.coeffs[lm_index(l, m)])]
            for l in range(lmax + 1) for m in range(-l, l + 1)]
    return {"lmax": lmax, "coefficients": rows, "provenance": sf.provenance}


def body_from_dict(doc: dict, grid: SphericalGrid | None = None) -> SupportFunction:
    try:
        lmax = int(doc["lmax"])
        rows = doc["coefficients"]
        provenance = str(doc.get("provenance", "analytic"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed body document: {exc!r}") from exc
    if grid is None:
        grid = build_grid(max(lmax, 4))
    coeffs = np.zeros(n_coeffs(grid.lmax))
    for row in rows:
        try:
            l, m, value = int(row[0]), int(row[1]), float(row[2])
        except (IndexError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed coefficient row {row!r}") from exc
        if not (0 <= l and abs(m) <= l):
            raise ValueError(f"invalid harmonic index (l={l}, m={m})")
        if l <= grid.lmax:
            coeffs[lm_index(l, m)] = value
    return SupportFunction(grid, coeffs, provenance)


def save_body(sf: SupportFunction, path) -> None:
    Path(path).write_text(json.dumps(body_to_dict(sf), indent=1))


def load_body(path, grid: SphericalGrid | None = None) -> SupportFunction:
    """Read a body document; ``json.JSONDecodeError`` carries line/column on bad input."""
    text = Path(path).read_text()
    return body_from_dict(json.loads(text), grid)
