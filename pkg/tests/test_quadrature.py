import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewrd.errors import InvalidArgumentError
from skewrd.quadrature import ReferenceBasis, gauss_interval, gauss_triangle, local_dimension


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_gauss_interval_exactness(n):
    x, w = gauss_interval(n)
    for p in range(2 * n):
        assert np.dot(w, x ** p) == pytest.approx(1.0 / (p + 1), rel=1e-13)


@pytest.mark.parametrize("degree", [0, 1, 2, 4, 8])
def test_gauss_triangle_exactness(degree):
    pts, w = gauss_triangle(degree)
    assert np.all(w > 0)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            # int_T r^a s^b = a! b! / (a + b + 2)!
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert np.dot(w, pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_local_dimension():
    assert [local_dimension(1, k) for k in (1, 2, 3)] == [2, 3, 4]
    assert [local_dimension(2, k) for k in (1, 2, 3)] == [3, 6, 10]
    with pytest.raises(InvalidArgumentError):
        local_dimension(3, 1)


@pytest.mark.parametrize("dim,degree", [(1, 1), (1, 3), (2, 1), (2, 2), (2, 3)])
def test_orthonormal_basis(dim, degree):
    basis = ReferenceBasis(dim, degree)
    if dim == 1:
        pts, w = gauss_interval(degree + 2)
        pts = pts[:, None]
    else:
        pts, w = gauss_triangle(2 * degree)
    V = basis.values(pts)
    assert np.allclose(V.T @ (w[:, None] * V), np.eye(basis.n), atol=1e-12)


@pytest.mark.parametrize("dim,degree,kind", [(1, 2, "orthonormal"), (2, 2, "orthonormal"), (2, 2, "monomial")])
def test_gradients_match_finite_differences(dim, degree, kind, rng):
    basis = ReferenceBasis(dim, degree, kind)
    p = rng.uniform(0.1, 0.4, size=(5, dim))
    h = 1e-6
    G = basis.gradients(p)
    for d in range(dim):
        e = np.zeros(dim)
        e[d] = h
        fd = (basis.values(p + e) - basis.values(p - e)) / (2 * h)
        assert np.allclose(G[:, :, d], fd, atol=1e-7)


def test_constant_coefficients_reproduce_one():
    for dim, k in [(1, 2), (2, 3)]:
        basis = ReferenceBasis(dim, k)
        pts = np.full((3, dim), 0.2)
        assert np.allclose(basis.values(pts) @ basis.constant_coefficients(), 1.0)


def test_invalid_basis_arguments():
    with pytest.raises(InvalidArgumentError):
        ReferenceBasis(1, -1)
    with pytest.raises(InvalidArgumentError):
        ReferenceBasis(1, 1, "spline")


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12))
def test_gauss_weights_sum_to_measure(n):
    _, w = gauss_interval(n)
    assert w.sum() == pytest.approx(1.0)
    _, wt = gauss_triangle(n)
    assert wt.sum() == pytest.approx(0.5)
