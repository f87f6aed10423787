"""Broken polynomial spaces and symmetric interior penalty (SIPG) assembly.

Global degrees of freedom are numbered element by element: DoF
``e * n_loc + i`` is the ``i``-th local basis function of element ``e``,
so no DoF is shared between elements.

The diffusion bilinear form assembled here is

    a_h(d; u, w) = sum_E (d grad u, grad w)_E
                   - sum_e ({d grad u}, [w])_e - sum_e ({d grad w}, [u])_e
                   + sum_e (sigma d / h_e) ([u], [w])_e

with sums over interior faces only.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, NumericalFailureError
from .mesh import Mesh
from .quadrature import ReferenceBasis, gauss_interval, gauss_triangle

__all__ = [
    "DgSpace",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_reaction_vector",
    "assemble_reaction_jacobian",
]


def default_penalty(degree: int) -> float:
    return 3.0 * degree * (degree + 1)


class DgSpace:
    """Discontinuous piecewise polynomials of degree ``degree`` on ``mesh``.

    Parameters
    ----------
    mesh : Mesh
    degree : int
        Polynomial degree ``k >= 1``.
    sigma : float, optional
        Interior penalty parameter; defaults to ``3 k (k + 1)``.
    basis : {"orthonormal", "monomial"}
        Local basis on the reference element.
    workers : int
        Threads used for element-local kernels. The reduction into the
        global matrix is always done in element order.
    """

    def __init__(self, mesh: Mesh, degree: int = 1, sigma: float | None = None,
                 basis: str = "orthonormal", workers: int = 1):
        if degree < 1:
            raise InvalidArgumentError(f"degree must be >= 1, got {degree}")
        self.mesh = mesh
        self.degree = int(degree)
        self.sigma = default_penalty(degree) if sigma is None else float(sigma)
        if not self.sigma > 0:
            raise InvalidArgumentError("penalty parameter must be positive")
        self.workers = max(1, int(workers))
        self.basis = ReferenceBasis(mesh.dim, self.degree, basis)
        self.n_loc = self.basis.n
        self.n_elements = mesh.n_elements
        self.n_dofs = self.n_loc * self.n_elements

        if mesh.dim == 1:
            self.quad_points, self.quad_weights = gauss_interval(math.ceil((4 * degree + 1) / 2))
            self.quad_points = self.quad_points[:, None]
        else:
            self.quad_points, self.quad_weights = gauss_triangle(4 * degree)

        self.x0, self.jac = mesh.affine_maps()
        self.detj = np.abs(np.linalg.det(self.jac))
        self.jinv = np.linalg.inv(self.jac)
        self.phi = self.basis.values(self.quad_points)            # (q, i)
        grad_ref = self.basis.gradients(self.quad_points)         # (q, i, d)
        self.grad_phi = np.einsum("qid,edk->eqik", grad_ref, self.jinv)
        self.wdet = self.detj[:, None] * self.quad_weights[None, :]  # (e, q)
        self._setup_faces()
        self._cache = {}

    # ------------------------------------------------------------------
    def _setup_faces(self):
        mesh = self.mesh
        faces = mesh.interior_faces
        self.face_left = faces[:, 0]
        self.face_right = faces[:, 1]
        self.face_h = mesh.face_sizes[mesh.interior]
        normals = mesh.face_normals[mesh.interior]
        nf = len(faces)
        if mesh.dim == 1:
            fpts = mesh.vertices[faces[:, 2]][:, None, :]           # (f, 1, 1)
            fw = np.ones((nf, 1))
        else:
            t, w = gauss_interval(self.degree + 1)
            a = mesh.vertices[faces[:, 2]]
            b = mesh.vertices[faces[:, 3]]
            fpts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
            fw = self.face_h[:, None] * w[None, :]
        self.face_weights = fw
        nq = fpts.shape[1]

        def traces(el):
            ref = np.einsum("fdk,fqk->fqd", self.jinv[el], fpts - self.x0[el][:, None, :])
            flat = ref.reshape(-1, mesh.dim)
            val = self.basis.values(flat).reshape(nf, nq, self.n_loc)
            gref = self.basis.gradients(flat).reshape(nf, nq, self.n_loc, mesh.dim)
            grad = np.einsum("fqid,fdk->fqik", gref, self.jinv[el])
            dn = np.einsum("fqik,fk->fqi", grad, normals)
            return val, dn

        self.face_val_left, self.face_dn_left = traces(self.face_left)
        self.face_val_right, self.face_dn_right = traces(self.face_right)

    def element_dofs(self, elements=None) -> np.ndarray:
        el = np.arange(self.n_elements) if elements is None else np.asarray(elements)
        return el[:, None] * self.n_loc + np.arange(self.n_loc)[None, :]

    def dof_element(self, dofs) -> np.ndarray:
        return np.asarray(dofs) // self.n_loc

    # ------------------------------------------------------------------
    def _chunked(self, func, n):
        """Evaluate ``func(slice)`` over contiguous chunks and concatenate
        the results in chunk order."""
        if self.workers == 1 or n < 2 * self.workers:
            return func(slice(0, n))
        bounds = np.linspace(0, n, self.workers + 1).astype(int)
        slices = [slice(bounds[i], bounds[i + 1]) for i in range(self.workers)]
        with ThreadPoolExecutor(self.workers) as pool:
            parts = list(pool.map(func, slices))
        return np.concatenate(parts, axis=0)

    def _block_diagonal(self, blocks) -> sp.csr_matrix:
        nel, n = blocks.shape[:2]
        mat = sp.bsr_matrix((blocks, np.arange(nel), np.arange(nel + 1)),
                            shape=(nel * n, nel * n))
        return mat.tocsr()

    def mass(self) -> sp.csr_matrix:
        if "mass" not in self._cache:
            blocks = self._chunked(
                lambda s: np.einsum("eq,qi,qj->eij", self.wdet[s], self.phi, self.phi),
                self.n_elements)
            self._cache["mass"] = self._block_diagonal(blocks)
        return self._cache["mass"]

    def mass_blocks(self) -> np.ndarray:
        """Per-element mass blocks, shape (n_elements, n_loc, n_loc)."""
        if "mass_blocks" not in self._cache:
            self._cache["mass_blocks"] = np.einsum("eq,qi,qj->eij", self.wdet, self.phi, self.phi)
        return self._cache["mass_blocks"]

    def stiffness_parts(self, d: float):
        """Volume, consistency and penalty parts of the SIPG matrix for
        diffusion ``d``; their sum is the stiffness matrix."""
        d = float(d)
        if not d >= 0 or not math.isfinite(d):
            raise InvalidArgumentError(f"diffusion coefficient must be >= 0, got {d}")
        key = ("parts", d)
        if key in self._cache:
            return self._cache[key]
        n = self.n_dofs
        vol_blocks = d * self._chunked(
            lambda s: np.einsum("eq,eqik,eqjk->eij", self.wdet[s], self.grad_phi[s], self.grad_phi[s]),
            self.n_elements)
        volume = self._block_diagonal(vol_blocks)

        jump = np.concatenate([self.face_val_left, -self.face_val_right], axis=2)
        avg = 0.5 * np.concatenate([self.face_dn_left, self.face_dn_right], axis=2)
        ja = np.einsum("fq,fqi,fqj->fij", self.face_weights, jump, avg)
        cons_blocks = -d * (ja + ja.transpose(0, 2, 1))
        pen_blocks = (d * self.sigma / self.face_h)[:, None, None] * np.einsum(
            "fq,fqi,fqj->fij", self.face_weights, jump, jump)

        dofs = np.concatenate([self.element_dofs(self.face_left),
                               self.element_dofs(self.face_right)], axis=1)
        rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
        cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
        consistency = sp.coo_matrix((cons_blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        penalty = sp.coo_matrix((pen_blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        parts = (volume, consistency, penalty)
        self._cache[key] = parts
        return parts

    def stiffness(self, d: float) -> sp.csr_matrix:
        key = ("stiffness", float(d))
        if key not in self._cache:
            vol, cons, pen = self.stiffness_parts(d)
            S = (vol + cons + pen).tocsr()
            S.sum_duplicates()
            S.sort_indices()
            self._cache[key] = S
        return self._cache[key]

    # ------------------------------------------------------------------
    def values_at_quadrature(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float).reshape(self.n_elements, self.n_loc)
        return c @ self.phi.T

    def integrate(self, values_eq) -> float:
        """Integrate a field given at quadrature points, shape (e, q)."""
        return float(np.sum(self.wdet * values_eq))

    def reaction_vector(self, coeffs, f) -> np.ndarray:
        U = self.values_at_quadrature(coeffs)
        return self.load_from_values(np.broadcast_to(np.asarray(f(U), dtype=float), U.shape))

    def load_from_values(self, fv) -> np.ndarray:
        """``(g, phi_i)`` for ``g`` given at the quadrature points, shape (e, q)."""
        _check_finite(fv)
        return np.einsum("eq,qi->ei", self.wdet * fv, self.phi).ravel()

    def reaction_jacobian_blocks(self, coeffs, f_prime) -> np.ndarray:
        U = self.values_at_quadrature(coeffs)
        return self.weighted_mass_blocks(np.broadcast_to(np.asarray(f_prime(U), dtype=float), U.shape))

    def weighted_mass_blocks(self, gv) -> np.ndarray:
        """Blocks of ``(g phi_j, phi_i)`` for ``g`` at the quadrature points."""
        _check_finite(gv)
        return np.einsum("eq,qi,qj->eij", self.wdet * gv, self.phi, self.phi)

    def reaction_jacobian(self, coeffs, f_prime) -> sp.csr_matrix:
        return self._block_diagonal(self.reaction_jacobian_blocks(coeffs, f_prime))

    def weighted_mass(self, gv) -> sp.csr_matrix:
        return self._block_diagonal(self.weighted_mass_blocks(gv))

    # ------------------------------------------------------------------
    def physical_points(self, ref_points) -> np.ndarray:
        ref = np.atleast_2d(np.asarray(ref_points, dtype=float))
        return self.x0[:, None, :] + np.einsum("edk,qk->eqd", self.jac, ref)

    def evaluate(self, coeffs, ref_points) -> np.ndarray:
        """Field values at reference points of every element, shape (e, p)."""
        c = np.asarray(coeffs, dtype=float).reshape(self.n_elements, self.n_loc)
        return c @ self.basis.values(ref_points).T

    def vertex_values(self, coeffs) -> np.ndarray:
        """Element-wise (discontinuous) values at element vertices."""
        ref = np.vstack([np.zeros(self.mesh.dim), np.eye(self.mesh.dim)])
        return self.evaluate(coeffs, ref)

    def project(self, func) -> np.ndarray:
        """L2 projection of ``func(x)`` (x of shape (..., dim)) onto the space."""
        xq = self.physical_points(self.quad_points)
        g = np.broadcast_to(np.asarray(func(xq), dtype=float), xq.shape[:2])
        rhs = np.einsum("eq,qi->ei", self.wdet * g, self.phi)
        return np.linalg.solve(self.mass_blocks(), rhs[..., None])[..., 0].ravel()

    def from_element_values(self, values) -> np.ndarray:
        """Coefficients of the piecewise constant with the given element values."""
        c1 = self.basis.constant_coefficients()
        return (np.asarray(values, dtype=float)[:, None] * c1[None, :]).ravel()

    def constant(self, value: float = 1.0) -> np.ndarray:
        return self.from_element_values(np.full(self.n_elements, float(value)))

    def from_vertex_values(self, values) -> np.ndarray:
        """Linear interpolant of global vertex values (degree-1 part only)."""
        values = np.asarray(values, dtype=float)
        ref = np.vstack([np.zeros(self.mesh.dim), np.eye(self.mesh.dim)])
        # P1 shape functions on the reference element, written in the local basis
        P1 = self.basis.values(ref)[:, : self.mesh.dim + 1]
        local = values[self.mesh.elements]
        c = np.zeros((self.n_elements, self.n_loc))
        c[:, : self.mesh.dim + 1] = np.linalg.solve(P1, local.T).T
        return c.ravel()

    def l2_norm(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(np.sqrt(c @ (self.mass() @ c)))


def _check_finite(values):
    bad = ~np.isfinite(values)
    if bad.any():
        element = int(np.argwhere(bad)[0][0])
        raise NumericalFailureError(f"non-finite reaction value on element {element}")


# Functional façade ------------------------------------------------------

def assemble_mass(space: DgSpace) -> sp.csr_matrix:
    return space.mass()


def assemble_stiffness(space: DgSpace, d: float) -> sp.csr_matrix:
    return space.stiffness(d)


def assemble_reaction_vector(space: DgSpace, coeffs, f) -> np.ndarray:
    """Vector with entries ``(f(u_h), phi_i)``."""
    return space.reaction_vector(coeffs, f)


def assemble_reaction_jacobian(space: DgSpace, coeffs, f_prime) -> sp.csr_matrix:
    """Block-diagonal matrix with entries ``(f'(u_h) phi_j, phi_i)``."""
    return space.reaction_jacobian(coeffs, f_prime)
