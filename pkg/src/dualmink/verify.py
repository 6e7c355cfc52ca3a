"""Verification suite: every identity and inequality on analytic and random bodies.

Each check yields one report entry
``{check_name, body_id, lmax, residual_or_deficit, tolerance, pass}``.
Residual checks pass when ``value <= tolerance``; inequality checks report the
deficit divided by its natural scale and pass when ``value >= -tolerance``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import centroaffine as ca_mod
from .body import (
    SupportFunction,
    compute_geometry,
    make_ball,
    make_random_body,
    polar_body,
    polar_identity_check,
)
from .solver import linearized_spectrum, polar_operator_defect
from .sphere_grid import (
    SphericalGrid,
    build_grid,
    degrees,
    integrate,
    n_coeffs,
    synthesize,
)

TOL = {
    "quadrature": 1e-10,
    "main_identity": 1e-6,
    "main_identity_integral": 1e-6,
    "gauss_equation": 1e-6,
    "ibp": 1e-7,
    "euler_identity": 1e-7,
    "local_bm": 1e-9,
    "local_bm_equality": 1e-8,
    "local_bm2": 1e-9,
    "lemma32": 1e-8,
    "lemma33": 1e-8,
    "lemma_consistency": 1e-8,
    "polar_identity": 1e-5,
    "polar_identity_ball": 1e-10,
    "polar_operator": 1e-5,
    "spectrum": 1e-6,
}
EULER_EXPONENTS = (-2.5, -1.0, 0.0)
LEMMA_ALPHAS = (-1.0, -0.5, 0.0, 0.5)


@dataclass
class Check:
    check_name: str
    body_id: str
    lmax: int
    residual_or_deficit: float
    tolerance: float
    kind: str = "residual"

    @property
    def passed(self) -> bool:
        v = self.residual_or_deficit
        if not np.isfinite(v):
            return False
        if self.kind == "residual":
            return v <= self.tolerance
        return v >= -self.tolerance

    def as_dict(self) -> dict:
        return {"check_name": self.check_name, "body_id": self.body_id, "lmax": self.lmax,
                "residual_or_deficit": float(self.residual_or_deficit),
                "tolerance": self.tolerance, "pass": bool(self.passed)}


def random_test_field(grid: SphericalGrid, seed: int, lmax_f: int = 6) -> np.ndarray:
    """Smooth band-limited field with a decaying random spectrum (all degrees <= lmax_f)."""
    rng = np.random.default_rng([seed, 7919])
    c = np.zeros(n_coeffs(grid.lmax))
    k = n_coeffs(min(lmax_f, grid.lmax))
    c[:k] = rng.normal(size=k) / (1.0 + degrees(grid.lmax)[:k]) ** 2
    return synthesize(grid, c)


def positive_test_field(grid: SphericalGrid, seed: int) -> np.ndarray:
    f = random_test_field(grid, seed)
    return np.exp(0.5 * f / np.max(np.abs(f)))


def lemma_scale(body, f) -> float:
    return float(integrate(body.grid, f**2 * body.r**2 * body.dV_density))


def grid_checks(grid: SphericalGrid) -> list[Check]:
    area = abs(float(grid.weights.sum()) - 4.0 * np.pi)
    k = n_coeffs(grid.lmax)
    Y = np.array([synthesize(grid, e) for e in np.eye(k)]).reshape(k, -1)
    gram = (Y * grid.weights.ravel()) @ Y.T
    ortho = float(np.max(np.abs(gram - np.eye(k))))
    return [Check("quadrature_area", "grid", grid.lmax, area, TOL["quadrature"]),
            Check("quadrature_orthonormality", "grid", grid.lmax, ortho, TOL["quadrature"])]


def body_checks(sf: SupportFunction, body_id: str, seed: int = 0,
                centred_ball: bool = False) -> list[Check]:
    """All identity, inequality and polar checks for one body."""
    grid, L = sf.grid, sf.grid.lmax
    body = compute_geometry(sf)
    ca = ca_mod.structure(body)
    out: list[Check] = []

    def add(name, value, tol, kind="residual"):
        out.append(Check(name, body_id, L, float(value), tol, kind))

    add("main_identity", ca_mod.main_identity_residual(body, ca), TOL["main_identity"])
    add("main_identity_integral", ca_mod.main_identity_residual(body, ca, integral=True),
        TOL["main_identity_integral"])
    add("gauss_equation", ca_mod.gauss_equation_residual(body, ca), TOL["gauss_equation"])

    f = random_test_field(grid, seed)
    add("ibp", ca_mod.ibp_residual(body, f, ca), TOL["ibp"])
    for p in EULER_EXPONENTS:
        add(f"euler_identity[p={p}]", ca_mod.euler_identity_residual(body, p),
            TOL["euler_identity"])

    d, s = ca_mod.local_bm_deficit(body, f, ca, with_scale=True)
    add("local_bm", d / s, TOL["local_bm"], "deficit")
    for k in range(3):
        d, s = ca_mod.local_bm_deficit(body, ca_mod.equality_field(body, np.eye(3)[k]), ca,
                                       with_scale=True)
        add(f"local_bm_equality[w=E{k + 1}]", abs(d) / s, TOL["local_bm_equality"])
    d, s = ca_mod.local_bm2_deficit(body, f, ca, with_scale=True)
    add("local_bm2", d / s, TOL["local_bm2"], "deficit")

    fpos = positive_test_field(grid, seed)
    lhs, rhs = ca_mod.lemma32_check(body, fpos, ca)
    add("lemma32", (rhs - lhs) / lemma_scale(body, fpos), TOL["lemma32"], "deficit")
    for alpha in LEMMA_ALPHAS:
        fr = body.r**alpha
        scale = lemma_scale(body, fr)
        l33, r33 = ca_mod.lemma33_check(body, alpha, ca)
        add(f"lemma33[alpha={alpha}]", (r33 - l33) / scale, TOL["lemma33"], "deficit")
        l32, r32 = ca_mod.lemma32_check(body, fr, ca)
        add(f"lemma_consistency[alpha={alpha}]",
            max(abs(l33 - l32), abs(r33 - r32)) / scale, TOL["lemma_consistency"])

    polar = polar_body(sf)
    tol = TOL["polar_identity_ball"] if centred_ball else TOL["polar_identity"]
    add("polar_identity", polar_identity_check(sf, polar), tol)
    add("polar_operator[p=-1,q=2.5]", polar_operator_defect(sf, -1.0, 2.5, polar),
        TOL["polar_operator"])
    return out


def builtin_bodies(grid: SphericalGrid):
    return [
        ("unit_sphere", make_ball(grid), True),
        ("ball_R2", make_ball(grid, R=2.0), True),
        ("translated_ball", make_ball(grid, center=(0.1, -0.2, 0.3), R=1.0), False),
    ]


def run_suite(lmax: int = 32, seeds=range(5), amplitude: float = 0.05,
              extra_bodies=(), spectrum_pq=((-1.0, 2.5), (0.0, 6.0), (-1.0, -1.0))) -> dict:
    """Run every check family; returns ``{"checks": [...], "summary": {...}}``."""
    t0 = time.perf_counter()
    grid = build_grid(lmax)
    checks = grid_checks(grid)
    for body_id, sf, centred in builtin_bodies(grid):
        checks += body_checks(sf, body_id, seed=0, centred_ball=centred)
    for seed in seeds:
        sf = make_random_body(grid, seed, amplitude)
        checks += body_checks(sf, f"random[seed={seed}]", seed=seed)
    for body_id, sf in extra_bodies:
        checks += body_checks(sf.on_grid(grid), body_id)
    for p, q in spectrum_pq:
        rep = linearized_spectrum(p, q, 8)
        checks.append(Check(f"spectrum[p={p},q={q}]", "unit_sphere", 8, rep.max_abs_gap,
                            TOL["spectrum"]))
    entries = [c.as_dict() for c in checks]
    families = sorted({e["check_name"].split("[")[0] for e in entries})
    failed = [e for e in entries if not e["pass"]]
    return {
        "checks": entries,
        "summary": {"n_checks": len(entries), "n_failed": len(failed),
                    "families": families, "all_pass": not failed,
                    "runtime_s": time.perf_counter() - t0},
    }
