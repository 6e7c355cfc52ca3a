import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualmink.sphere_grid import (
    analyze,
    build_grid,
    derivatives,
    evaluate,
    gauss_legendre,
    integrate,
    laplace_beltrami,
    lm_index,
    n_coeffs,
    point_frame,
    synthesize,
)

from conftest import fibonacci_sphere

C1 = np.sqrt(3.0 / (4.0 * np.pi))


def unit(k, L):
    c = np.zeros(n_coeffs(L))
    c[k] = 1.0
    return c


def test_rejects_small_lmax():
    with pytest.raises(ValueError):
        build_grid(3)


def test_grid_shape(grid16):
    assert grid16.shape == (17, 34)
    assert np.allclose(np.linalg.norm(grid16.nodes, axis=-1), 1.0)


def test_weights_sum_to_area(grid16):
    assert abs(grid16.weights.sum() - 4 * np.pi) < 1e-12


def test_gauss_legendre_integrates_polynomials():
    x, w = gauss_legendre(9)
    for k in range(18):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(np.sum(w * x**k) - exact) < 1e-14


def test_degree_one_closed_forms(grid16):
    g = grid16
    for m, axis in [(-1, 1), (0, 2), (1, 0)]:
        vals = synthesize(g, unit(lm_index(1, m), 16))
        assert np.max(np.abs(vals - C1 * g.nodes[..., axis])) < 1e-14


def test_y20_closed_form(grid16):
    z = grid16.nodes[..., 2]
    expected = np.sqrt(5.0 / (16.0 * np.pi)) * (3 * z**2 - 1)
    assert np.max(np.abs(synthesize(grid16, unit(lm_index(2, 0), 16)) - expected)) < 1e-14


def test_orthonormal(grid16):
    k = n_coeffs(16)
    Y = np.array([synthesize(grid16, e) for e in np.eye(k)]).reshape(k, -1)
    gram = (Y * grid16.weights.ravel()) @ Y.T
    assert np.max(np.abs(gram - np.eye(k))) < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_round_trip(seed):
    g = build_grid(12)
    c = np.random.default_rng(seed).normal(size=n_coeffs(12))
    assert np.max(np.abs(analyze(g, synthesize(g, c)) - c)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_quadratic_integral(w):
    # int <x,w>^2 dmu = 4 pi |w|^2 / 3
    g = build_grid(8)
    w = np.array(w)
    got = integrate(g, (g.nodes @ w) ** 2)
    assert abs(got - 4 * np.pi / 3 * w @ w) <= 1e-12 * (1 + w @ w)


def test_integrate_vector_field(grid16):
    # int x dmu = 0 and int x z dmu = (4 pi / 3) e_z
    g = grid16
    assert np.allclose(integrate(g, g.nodes), 0.0, atol=1e-14)
    got = integrate(g, g.nodes * g.nodes[..., 2:3])
    assert np.allclose(got, [0, 0, 4 * np.pi / 3], atol=1e-13)


@pytest.mark.parametrize("l,m", [(1, 0), (2, 1), (3, -2), (7, 5), (16, 16)])
def test_hessian_trace_is_laplacian(grid16, l, m):
    vals, _, hess = derivatives(grid16, unit(lm_index(l, m), 16))
    tr = hess[..., 0, 0] + hess[..., 1, 1]
    assert np.max(np.abs(tr + l * (l + 1) * vals)) < 1e-10 * l * (l + 1)
    assert np.allclose(hess[..., 0, 1], hess[..., 1, 0])


def test_laplace_beltrami_eigen(grid16):
    f = synthesize(grid16, unit(lm_index(4, -3), 16))
    assert np.max(np.abs(laplace_beltrami(grid16, f) + 20 * f)) < 1e-12


@pytest.mark.parametrize("w", [(1, 0, 0), (0, 0, 1), (0.3, -1.2, 0.5)])
def test_linear_function_derivatives(grid16, w):
    # restriction of a linear function: grad = tangential part of w, Hess = -f g
    g = grid16
    w = np.array(w, dtype=float)
    c = analyze(g, g.nodes @ w)
    vals, grad, hess = derivatives(g, c)
    assert np.max(np.abs(g.tangent_to_vector(grad) - (w - vals[..., None] * g.nodes))) < 1e-12
    assert np.max(np.abs(hess + vals[..., None, None] * np.eye(2))) < 1e-11


def _geodesic(points, direction, t):
    return points * np.cos(t) + direction * np.sin(t)


def test_finite_difference_y31():
    # derivatives from the tables against central differences of point values
    L = 8
    g = build_grid(L)
    c = unit(lm_index(3, 1), L) + 0.5 * unit(lm_index(2, -2), L)
    pts = fibonacci_sphere(40)
    pts = pts[np.abs(pts[:, 2]) < 0.95]
    frame = point_frame(pts)
    vals, grad, hess = evaluate(g, c, pts)
    eps = 1e-5
    for a in range(2):
        e = frame[:, a, :]
        fp = evaluate(g, c, _geodesic(pts, e, eps))[0]
        fm = evaluate(g, c, _geodesic(pts, e, -eps))[0]
        assert np.max(np.abs((fp - fm) / (2 * eps) - grad[:, a])) < 1e-8
        # second derivative along a geodesic is the Hessian diagonal
        assert np.max(np.abs((fp - 2 * vals + fm) / eps**2 - hess[:, a, a])) < 1e-4


def test_evaluate_matches_grid(grid16):
    c = np.random.default_rng(3).normal(size=n_coeffs(16))
    v0, g0, h0 = derivatives(grid16, c)
    v1, g1, h1 = evaluate(grid16, c, grid16.nodes.reshape(-1, 3))
    scale = np.max(np.abs(h0))
    assert np.max(np.abs(v1 - v0.ravel())) < 1e-12 * scale
    assert np.max(np.abs(g1 - g0.reshape(-1, 2))) < 1e-12 * scale
    assert np.max(np.abs(h1 - h0.reshape(-1, 2, 2))) < 1e-11 * scale


def test_transforms_accept_complex(grid16):
    c = np.random.default_rng(1).normal(size=n_coeffs(16))
    z = synthesize(grid16, c + 1j * c)
    assert np.allclose(z.real, z.imag)
    assert np.allclose(analyze(grid16, z), c + 1j * c)
