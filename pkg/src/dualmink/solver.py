"""Numerical solution of ``h^(p-1) |Dh|^(n+1-q) K = 1`` on S^2 and (p, q) scans.

Two iterations are available, both acting on the harmonic coefficients of h:

``damped-fixed-point``
    ``log h <- log h - tau * P^{-1} log G[h]`` where ``P`` is the linearisation
    of ``log G`` at the unit sphere, diagonal in harmonics with entries
    ``l(l+1) - (q - p)``. The unpreconditioned update is unstable at high
    degree for any fixed step and, inside the uniqueness region, also in
    degrees 0 and 1, where ``log G`` grows along the perturbation.
``newton``
    Full Newton on the projected residual ``analyze(log G[h])`` with the
    Jacobian built column-by-column by complex-step differentiation.

By default the fixed point runs until the sup-residual drops below
``newton_switch`` and Newton finishes.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .body import (
    DIM,
    GeometryError,
    SupportFunction,
    check_convex,
    compute_geometry,
    pde_residual,
    polar_body,
)
from .sphere_grid import (
    SphericalGrid,
    analyze,
    build_grid,
    degrees,
    derivatives,
    evaluate,
    lm_index,
    n_coeffs,
    synthesize,
)

COMPLEX_STEP = 1e-30


class Status(str, Enum):
    CONVERGED_SPHERE = "ConvergedSphere"
    CONVERGED_NON_SPHERE = "ConvergedNonSphere"
    DIVERGED = "Diverged"
    MAX_ITERS = "MaxIters"
    LOST_CONVEXITY = "LostConvexity"

    @property
    def converged(self) -> bool:
        return self in (Status.CONVERGED_SPHERE, Status.CONVERGED_NON_SPHERE)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "damped-fixed-point"
    dt: float = 0.1
    damping: float = 1.0
    max_iters: int = 400
    tol_residual: float = 1e-10
    tol_sphere: float = 1e-5
    lmax: int = 16
    project_degree1: bool = False
    normalize_scale: bool = False
    newton_switch: float | None = 1e-2
    diverge_at: float = 1e6

    def __post_init__(self):
        if self.method not in ("damped-fixed-point", "newton"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt <= 0 or not 0 < self.damping <= 1:
            raise ValueError("need dt > 0 and damping in (0, 1]")
        if self.tol_residual <= 0 or self.tol_sphere <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SolveOutcome:
    status: Status
    final_h: SupportFunction
    residual_history: list = field(default_factory=list)
    sphere_distance: float = math.nan
    iterations: int = 0
    message: str = ""

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.nan


@dataclass
class SpectrumReport:
    p: float
    q: float
    lambdas: np.ndarray
    closed_form: np.ndarray
    numeric: np.ndarray
    max_abs_gap: float
    off_diagonal: float


def closed_form_eigenvalue(p: float, q: float, ell) -> np.ndarray:
    """``q - p - l(l+n-1)``: linearisation of ``h^(1-p) r^(q-n-1) det A[h]`` at ``h = 1``."""
    ell = np.asarray(ell, dtype=float)
    return q - p - ell * (ell + DIM - 1.0)


def sphere_distance(sf: SupportFunction) -> float:
    """``||h - mean h||_inf / mean h`` with the mean taken against ``dmu``."""
    h = sf.values
    mean = sf.coeffs[0] / np.sqrt(4.0 * np.pi)
    return float(np.max(np.abs(h - mean)) / mean)


@lru_cache(maxsize=8)
def _basis_fields(grid: SphericalGrid):
    """Values, gradients and Hessians of every basis harmonic at the grid nodes."""
    eye = np.eye(n_coeffs(grid.lmax))
    vals, grads, hesses = zip(*(derivatives(grid, e) for e in eye))
    return np.array(vals), np.array(grads), np.array(hesses)


def complex_step_jacobian(grid: SphericalGrid, coeffs, operator, p, q,
                          columns=None) -> np.ndarray:
    """``d analyze(operator(h)) / d coeffs`` by complex steps, one column per harmonic.

    Exact to rounding for analytic operators; ``columns`` restricts the
    differentiated coefficients.
    """
    N = n_coeffs(grid.lmax)
    cols = np.arange(N) if columns is None else np.asarray(columns)
    h, gradh, hess = derivatives(grid, coeffs)
    Yv, Yg, Yh = _basis_fields(grid)
    J = np.empty((N, cols.size))
    eps = COMPLEX_STEP
    for k, j in enumerate(cols):
        hc = h + 1j * eps * Yv[j]
        gc = gradh + 1j * eps * Yg[j]
        Hc = hess + 1j * eps * Yh[j]
        J[:, k] = analyze(grid, operator.from_fields(hc, gc, Hc, p, q).imag / eps)
    return J


class _Operator:
    """Pointwise operator evaluated from ``(h, grad h, hess h)``."""

    def __init__(self, kind):
        self.kind = kind

    def from_fields(self, h, gradh, hess, p, q):
        A = hess + h[..., None, None] * np.eye(2)
        sigma = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        r2 = np.sum(gradh**2, axis=-1) + h**2
        if self.kind == "log":
            return (p - 1.0) * np.log(h) + 0.5 * (DIM + 1.0 - q) * np.log(r2) - np.log(sigma)
        return np.exp((1.0 - p) * np.log(h) + 0.5 * (q - DIM - 1.0) * np.log(r2)) * sigma - 1.0


LOG_G = _Operator("log")
MONGE_AMPERE = _Operator("ma")


def linearized_spectrum(p: float, q: float, lmax_spec: int = 8,
                        grid: SphericalGrid | None = None) -> SpectrumReport:
    """Eigenvalues of the linearised Monge-Ampere residual at the unit sphere.

    The Jacobian is formed by complex-step directional derivatives along every
    harmonic up to ``lmax_spec``; rotation invariance makes it diagonal, and
    ``numeric[l]`` is the mean diagonal entry over ``m``.
    """
    if lmax_spec < 2:
        raise ValueError("lmax_spec must be >= 2")
    grid = grid or build_grid(max(lmax_spec + 4, 8))
    sphere = np.zeros(n_coeffs(grid.lmax))
    sphere[0] = np.sqrt(4.0 * np.pi)
    cols = np.arange(n_coeffs(lmax_spec))
    J = complex_step_jacobian(grid, sphere, MONGE_AMPERE, p, q, columns=cols)[cols]
    diag = np.diag(J)
    ells = degrees(lmax_spec)
    numeric = np.array([diag[ells == l].mean() for l in range(lmax_spec + 1)])
    spread = max(float(np.ptp(diag[ells == l])) for l in range(lmax_spec + 1))
    closed = closed_form_eigenvalue(p, q, np.arange(lmax_spec + 1))
    off = float(np.max(np.abs(J - np.diag(diag))))
    return SpectrumReport(p=p, q=q, lambdas=numeric, closed_form=closed, numeric=numeric,
                          max_abs_gap=max(float(np.max(np.abs(numeric - closed))), spread),
                          off_diagonal=off)


def _state(grid, coeffs, p, q):
    """``(residual sup-norm, log G values)``; raises GeometryError on lost convexity."""
    h, gradh, hess = derivatives(grid, coeffs)
    check_convex(hess + h[..., None, None] * np.eye(2), h)
    logG = LOG_G.from_fields(h, gradh, hess, p, q)
    return float(np.max(np.abs(np.expm1(logG)))), logG


def _fixed_point_direction(grid, coeffs, logG, p, q, tau):
    ell = degrees(grid.lmax)
    mu = ell * (ell + 1.0) - (q - p)
    rc = analyze(grid, logG)
    step = np.divide(rc, mu, out=np.zeros_like(rc), where=np.abs(mu) > 1e-9)
    logh = np.log(synthesize(grid, coeffs)) - tau * synthesize(grid, step)
    return analyze(grid, np.exp(logh)) - coeffs


def _newton_direction(grid, coeffs, logG, p, q, project_degree1):
    N = n_coeffs(grid.lmax)
    cols = np.arange(N)
    if project_degree1:
        cols = cols[(cols < 1) | (cols > 3)]
    J = complex_step_jacobian(grid, coeffs, LOG_G, p, q, columns=cols)
    delta_c, *_ = np.linalg.lstsq(J, -analyze(grid, logG), rcond=1e-12)
    delta = np.zeros(N)
    delta[cols] = delta_c
    return delta


def solve(h0: SupportFunction, p: float, q: float,
          config: SolverConfig | None = None) -> SolveOutcome:
    """Iterate towards ``G[h] = 1``; the outcome is classified, never raised."""
    config = config or SolverConfig()
    grid = h0.grid
    coeffs = np.array(h0.coeffs, dtype=float)
    history: list[float] = []
    best = (math.inf, coeffs)
    tau = config.dt * config.damping

    def outcome(status, c, it, msg=""):
        sf = SupportFunction(grid, c, "solver")
        return SolveOutcome(status, sf, history, sphere_distance(sf), it, msg)

    try:
        res, logG = _state(grid, coeffs, p, q)
    except GeometryError as exc:
        return outcome(Status.LOST_CONVEXITY, coeffs, 0, f"initial body invalid: {exc}")

    for it in range(config.max_iters + 1):
        history.append(res)
        if not math.isfinite(res) or res > config.diverge_at:
            return outcome(Status.DIVERGED, coeffs, it, "residual blew up")
        if res < best[0]:
            best = (res, coeffs)
        if res <= config.tol_residual:
            if config.normalize_scale and p == q:
                coeffs = coeffs / (coeffs[0] / np.sqrt(4.0 * np.pi))
            sf = SupportFunction(grid, coeffs, "solver")
            dist = sphere_distance(sf)
            status = (Status.CONVERGED_SPHERE if dist <= config.tol_sphere
                      else Status.CONVERGED_NON_SPHERE)
            return SolveOutcome(status, sf, history, dist, it)
        if it == config.max_iters:
            break

        use_newton = config.method == "newton" or (
            config.newton_switch is not None and res < config.newton_switch)
        if use_newton:
            direction = _newton_direction(grid, coeffs, logG, p, q, config.project_degree1)
        else:
            direction = _fixed_point_direction(grid, coeffs, logG, p, q, tau)

        # halve until the iterate stays convex (and, for Newton, the residual drops)
        t, accepted, failure = 1.0, False, None
        for _ in range(30):
            trial = coeffs + t * direction
            try:
                new_res, new_logG = _state(grid, trial, p, q)
            except GeometryError as exc:
                failure = (trial, exc)
                t *= 0.5
                continue
            if use_newton and not new_res < res:
                t *= 0.5
                continue
            accepted = True
            break
        if not accepted:
            if failure is not None:
                return outcome(Status.LOST_CONVEXITY, failure[0], it + 1, str(failure[1]))
            return outcome(Status.MAX_ITERS, best[1], it + 1, "line search stalled")
        coeffs, res, logG = trial, new_res, new_logG

    history.append(best[0])
    return outcome(Status.MAX_ITERS, best[1], config.max_iters, "iteration budget exhausted")


def polar_problem_map(sf: SupportFunction, p: float, q: float):
    """Polar body of a solution together with the exponents ``(-q, -p)`` it solves."""
    return polar_body(sf).support, -q, -p


def polar_operator_defect(sf: SupportFunction, p: float, q: float, polar=None) -> float:
    """``max |G_(p,q)[h](x) * G_(-q,-p)[h*](x*) - 1|`` over the grid.

    The two operators are reciprocal at corresponding points for every body,
    which is what makes the polar of a ``(p, q)`` solution a ``(-q, -p)`` solution.
    """
    geom = compute_geometry(sf)
    hstar = (polar or polar_body(sf)).support
    xs = (geom.X / geom.r[..., None]).reshape(-1, 3)
    vals, grad, hess = evaluate(sf.grid, hstar.coeffs, xs)
    G_star = np.exp(LOG_G.from_fields(vals, grad, hess, -q, -p))
    G = np.exp(LOG_G.from_fields(geom.h, geom.gradh, geom.A - geom.h[..., None, None] * np.eye(2),
                                 p, q)).ravel()
    return float(np.max(np.abs(G * G_star - 1.0)))


def pde_sup_residual(sf: SupportFunction, p: float, q: float, c: float = 1.0) -> float:
    return float(np.max(np.abs(pde_residual(compute_geometry(sf), p, q, c))))


# --- scans -----------------------------------------------------------------

def in_uniqueness_region(p: float, q: float, n: int = DIM) -> bool:
    """Parameter ranges where the unit sphere is the only solution with c = 1."""
    case1 = -(n + 1) < p <= -1 and n <= q <= n + 1
    case2 = -(n + 1) <= p <= -n and 1 <= q < n + 1
    return case1 or case2


def perturbed_start(grid: SphericalGrid, seed: int, a1: float = 0.05, a2: float = 0.03):
    """``1 + a1 <x, u> + a2 Y_2^m`` with ``u`` and ``m`` drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    m = int(rng.integers(-2, 3))
    coeffs = analyze(grid, 1.0 + a1 * grid.nodes @ u)
    coeffs[4:] = 0.0
    coeffs[lm_index(2, m)] += a2
    spec = f"a1={a1!r};u=({float(u[0])!r},{float(u[1])!r},{float(u[2])!r});a2={a2!r};m={m}"
    return SupportFunction(grid, coeffs, "perturbed"), spec


def explore_non_sphere(grid: SphericalGrid, p: float, q: float, amplitude: float = 0.1,
                       max_iters: int = 30) -> SolveOutcome:
    """Newton from the sphere pushed along the degree-2 mode.

    Only meaningful past the first bifurcation (``lambda_2 > 0``). Degree-1
    columns are dropped because translations are a symmetry of the problem
    when ``q - p - 2`` vanishes and nearly so elsewhere. Failure to find a
    non-spherical branch is an ordinary outcome.
    """
    coeffs = np.zeros(n_coeffs(grid.lmax))
    coeffs[0] = np.sqrt(4.0 * np.pi)
    coeffs[lm_index(2, 0)] = amplitude
    config = SolverConfig(method="newton", max_iters=max_iters, lmax=grid.lmax,
                          project_degree1=True)
    return solve(SupportFunction(grid, coeffs, "explore"), p, q, config)


@dataclass
class ScanResult:
    rows: list
    metadata: dict


CSV_FIELDS = ("p", "q", "seed", "status", "sphere_distance", "iterations", "lambda_2", "residual")


def _scan_cell(args):
    p, q, seed, config = args
    grid = build_grid(config.lmax)
    h0, spec = perturbed_start(grid, seed)
    lam2 = float(linearized_spectrum(p, q, 2).numeric[2])
    cell_config = config
    if abs(q - p - 2.0) < 0.5 and not config.project_degree1:
        cell_config = SolverConfig(**{**asdict(config), "project_degree1": True})
    try:
        out = solve(h0, p, q, cell_config)
        status, dist, iters, res, msg = (out.status.value, out.sphere_distance,
                                         out.iterations, out.residual, out.message)
        h_err = float(np.max(np.abs(out.final_h.values - 1.0)))
    except Exception as exc:  # recorded, the scan goes on
        status, dist, iters, res, msg, h_err = "Error", math.nan, 0, math.nan, repr(exc), math.nan
    row = {"p": p, "q": q, "seed": seed, "perturbation_spec": spec, "status": status,
           "sphere_distance": dist, "iterations": iters, "lambda_2": lam2,
           "residual": res, "max_abs_h_minus_1": h_err, "message": msg,
           "in_region": in_uniqueness_region(p, q), "exploration": None}
    if lam2 > 1e-9:
        try:
            ex = explore_non_sphere(grid, p, q)
            row["exploration"] = {"status": ex.status.value, "sphere_distance": ex.sphere_distance,
                                  "residual": ex.residual, "iterations": ex.iterations}
        except Exception as exc:
            row["exploration"] = {"status": "Error", "message": repr(exc)}
    return row


def uniqueness_scan(p_values, q_values, seeds, config: SolverConfig | None = None,
                    workers: int = 1) -> ScanResult:
    """Solve from seeded perturbed starts over the lattice ``p_values x q_values x seeds``.

    Rows come back in lattice order whatever the completion order.
    """
    config = config or SolverConfig()
    cells = [(float(p), float(q), int(s), config)
             for p in p_values for q in q_values for s in seeds]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_cell, cells))
    else:
        rows = [_scan_cell(c) for c in cells]
    metadata = {"lmax": config.lmax, "config_hash": config.digest(),
                "config": asdict(config), "provenance": f"dualmink-scan/{config.digest()}",
                "p_values": [float(p) for p in p_values],
                "q_values": [float(q) for q in q_values], "seeds": [int(s) for s in seeds]}
    return ScanResult(rows=rows, metadata=metadata)
