"""Reference-element quadrature rules and polynomial bases.

Reference elements: the unit interval ``[0, 1]`` and the unit triangle
with vertices ``(0, 0), (1, 0), (0, 1)``.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np
from numpy.polynomial import legendre

from .errors import InvalidArgumentError

__all__ = [
    "gauss_interval",
    "gauss_triangle",
    "ReferenceBasis",
    "local_dimension",
]


def gauss_interval(n_points: int):
    """Gauss-Legendre points and weights on ``[0, 1]``."""
    x, w = legendre.leggauss(n_points)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_triangle(degree: int):
    """Collapsed Gauss rule on the unit triangle, exact through ``degree``.

    The square-to-triangle map ``(a, b) -> (a (1 - b), b)`` has Jacobian
    ``1 - b``, which raises the polynomial degree in ``b`` by one.
    """
    n = max(1, math.ceil((degree + 2) / 2))
    x, w = gauss_interval(n)
    pts, wts = [], []
    for (a, wa), (b, wb) in product(zip(x, w), zip(x, w)):
        pts.append((a * (1.0 - b), b))
        wts.append(wa * wb * (1.0 - b))
    return np.asarray(pts), np.asarray(wts)


def local_dimension(dim: int, degree: int) -> int:
    if dim == 1:
        return degree + 1
    if dim == 2:
        return (degree + 1) * (degree + 2) // 2
    raise InvalidArgumentError(f"unsupported dimension {dim}")


def _monomial_exponents(dim, degree):
    if dim == 1:
        return [(p,) for p in range(degree + 1)]
    # graded order: 1, r, s, r^2, rs, s^2, ...
    return [(total - j, j) for total in range(degree + 1) for j in range(total + 1)]


class ReferenceBasis:
    """Polynomial basis of total degree ``degree`` on the reference element.

    ``kind="orthonormal"`` gives an L2(reference)-orthonormal basis:
    shifted Legendre polynomials in 1D, Gram-Schmidt orthonormalised
    monomials in graded order on the triangle (Dubiner-type). ``kind=
    "monomial"`` gives the raw monomials in reference coordinates.
    """

    def __init__(self, dim: int, degree: int, kind: str = "orthonormal"):
        if degree < 0:
            raise InvalidArgumentError("degree must be non-negative")
        if kind not in ("orthonormal", "monomial"):
            raise InvalidArgumentError(f"unknown basis kind {kind!r}")
        self.dim = dim
        self.degree = degree
        self.kind = kind
        self.n = local_dimension(dim, degree)
        self._exps = np.asarray(_monomial_exponents(dim, degree))
        # coefficients expressing each basis function in monomials: phi = mono @ C
        if kind == "monomial":
            self._coef = np.eye(self.n)
        elif dim == 1:
            self._coef = self._legendre_coefficients()
        else:
            pts, wts = gauss_triangle(2 * degree)
            V = self._monomials(pts)
            gram = V.T @ (wts[:, None] * V)
            L = np.linalg.cholesky(gram)
            self._coef = np.linalg.inv(L).T

    def _legendre_coefficients(self):
        # phi_j(x) = sqrt(2j+1) P_j(2x - 1), expanded in powers of x
        C = np.zeros((self.n, self.n))
        for j in range(self.n):
            c = np.zeros(j + 1)
            c[j] = 1.0
            power = legendre.leg2poly(c)  # in t = 2x - 1
            # substitute t = 2x - 1
            poly = np.polynomial.Polynomial(power)(np.polynomial.Polynomial([-1.0, 2.0]))
            coefs = poly.coef
            C[: len(coefs), j] = math.sqrt(2 * j + 1) * coefs
        return C

    def _monomials(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.ones((len(pts), self.n))
        for k, e in enumerate(self._exps):
            for d in range(self.dim):
                if e[d]:
                    out[:, k] *= pts[:, d] ** e[d]
        return out

    def _monomial_gradients(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((len(pts), self.n, self.dim))
        for k, e in enumerate(self._exps):
            for d in range(self.dim):
                if e[d] == 0:
                    continue
                term = e[d] * pts[:, d] ** (e[d] - 1)
                for dd in range(self.dim):
                    if dd != d and e[dd]:
                        term = term * pts[:, dd] ** e[dd]
                out[:, k, d] = term
        return out

    def values(self, pts) -> np.ndarray:
        """Basis values at reference points, shape (n_points, n)."""
        return self._monomials(pts) @ self._coef

    def gradients(self, pts) -> np.ndarray:
        """Reference gradients, shape (n_points, n, dim)."""
        return np.einsum("qkd,kj->qjd", self._monomial_gradients(pts), self._coef)

    def constant_coefficients(self) -> np.ndarray:
        """Coefficients of the constant function 1 in this basis."""
        return np.linalg.solve(self._coef, np.eye(self.n)[:, 0])
