"""POD-DEIM reduced-order models for the DG/AVF discretisation.

Offline: collect state and nonlinearity snapshots from a full run, build
mass-orthonormal POD bases (``Psi^T M Psi = I``) per component and a DEIM
interpolation of the activator nonlinearity. Online: step the dense
reduced system with the same AVF/Newton machinery as the full model.

With DG the ``i``-th entry of the assembled nonlinear vector only depends
on the coefficients of the element owning DoF ``i``, so a DEIM sample
costs one element's quadrature.
"""

from __future__ import annotations

import csv
import statistics
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dgspace import DgSpace
from .errors import InvalidArgumentError, RankDeficiencyError, SelectionFailureError
from .integrator import (AVFStepper, DenseOperators, FullOrderOperators, NewtonConfig, State,
                         TimeGrid, initial_state, run_simulation)
from .kinetics import as_system

__all__ = [
    "SnapshotSet",
    "SnapshotRecorder",
    "PodBasis",
    "compute_pod_basis",
    "deim_select",
    "DeimData",
    "build_deim",
    "deim_apply",
    "deim_reconstruct",
    "DeimSampler",
    "GalerkinNonlinearity",
    "build_reduced_system",
    "ReducedTrajectory",
    "run_reduced",
    "RomReport",
    "rom_report",
    "rom_compare",
    "write_snapshots",
    "read_snapshots",
]

SNAPSHOT_MAGIC = b"SKRDSNAP"


# ---------------------------------------------------------------------------
# snapshots


@dataclass
class SnapshotSet:
    """Snapshot matrices, one column per recorded time.

    ``states[c]`` is the ``N x J`` matrix of component ``c``;
    ``nonlinear`` holds the assembled activator nonlinearity at the same
    states.
    """

    states: list
    nonlinear: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        J = len(self.times)
        for S in list(self.states) + [self.nonlinear]:
            if S.shape[1] != J:
                raise InvalidArgumentError("snapshot column counts differ")

    @property
    def n_snapshots(self):
        return len(self.times)


class SnapshotRecorder:
    """Observer storing every ``stride``-th state and its nonlinearity."""

    def __init__(self, operators: FullOrderOperators, stride: int = 1):
        self.ops = operators
        self.stride = max(1, int(stride))
        self._cols = []
        self._nl = []
        self._t = []

    def __call__(self, step: int, state: State):
        if step % self.stride:
            return
        self._cols.append(state.fields.copy())
        self._nl.append(self.ops.nonlinear(state.u))
        self._t.append(state.t)

    def snapshots(self) -> SnapshotSet:
        if not self._cols:
            raise InvalidArgumentError("no snapshots recorded")
        stacked = np.stack(self._cols, axis=-1)  # (C, N, J)
        return SnapshotSet([stacked[c] for c in range(stacked.shape[0])],
                           np.stack(self._nl, axis=-1), np.asarray(self._t))


def write_snapshots(path, matrix: np.ndarray, tag: str):
    """Flat binary: magic, ``N``, ``J`` (uint64), 8-byte component tag,
    column-major float64 data."""
    matrix = np.asarray(matrix, dtype="<f8")
    N, J = matrix.shape
    tag_b = tag.encode("ascii")[:8].ljust(8, b"\0")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<QQ", N, J))
        fh.write(tag_b)
        fh.write(matrix.tobytes(order="F"))


def read_snapshots(path):
    """Inverse of :func:`write_snapshots`; returns ``(matrix, tag)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != SNAPSHOT_MAGIC:
            raise InvalidArgumentError(f"{path}: not a snapshot file")
        N, J = struct.unpack("<QQ", fh.read(16))
        tag = fh.read(8).rstrip(b"\0").decode("ascii")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != N * J:
        raise InvalidArgumentError(f"{path}: truncated snapshot data")
    return data.reshape((N, J), order="F").copy(), tag


# ---------------------------------------------------------------------------
# POD


@dataclass
class PodBasis:
    psi: np.ndarray
    singular_values: np.ndarray  # leading k
    all_singular_values: np.ndarray
    mass: object = field(default=None, repr=False)

    @property
    def k(self):
        return self.psi.shape[1]

    def project(self, y):
        """M-orthogonal projection coefficients ``Psi^T M y``."""
        My = y if self.mass is None else self.mass @ y
        return self.psi.T @ My

    def lift(self, coeffs):
        return self.psi @ coeffs


class _MassFactor:
    """``M = R^T R`` with ``R`` upper triangular; blockwise when ``M`` is
    block diagonal with known block size."""

    def __init__(self, M, block_size=None):
        self.R = None
        self.block = None
        if M is None:
            return
        if block_size:
            n = M.shape[0]
            if n % block_size:
                raise InvalidArgumentError("mass size is not a multiple of the block size")
            nb = n // block_size
            Mc = sp.csr_matrix(M)
            base = np.arange(nb) * block_size
            blocks = np.empty((nb, block_size, block_size))
            for i in range(block_size):
                for j in range(block_size):
                    blocks[:, i, j] = np.asarray(Mc[base + i, base + j]).ravel()
            self.block = block_size
            self.Rb = np.swapaxes(np.linalg.cholesky(blocks), 1, 2)
            return
        Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
        self.R = sla.cholesky(Md, lower=False)

    def apply(self, X):
        if self.block:
            Xb = X.reshape(self.Rb.shape[0], self.block, -1)
            return np.einsum("bij,bjk->bik", self.Rb, Xb).reshape(X.shape)
        return X if self.R is None else self.R @ X

    def solve(self, X):
        if self.block:
            Xb = X.reshape(self.Rb.shape[0], self.block, -1)
            Rinv = np.linalg.inv(self.Rb)
            return np.einsum("bij,bjk->bik", Rinv, Xb).reshape(X.shape)
        return X if self.R is None else sla.solve_triangular(self.R, X, lower=False)


def compute_pod_basis(snapshots: np.ndarray, M=None, k: int | None = None, *, block_size: int | None = None,
                      energy_tol: float | None = None, rank_tol: float = 1e-12) -> PodBasis:
    """Mass-weighted POD basis of a snapshot matrix.

    With ``M = R^T R`` the left singular vectors ``Psi_hat`` of ``R U``
    give ``Psi = R^{-1} Psi_hat``, so that ``Psi^T M Psi = I``.

    Parameters
    ----------
    snapshots : (N, J) array
    M : sparse or dense SPD matrix, optional
        Identity if omitted.
    k : int, optional
        Basis size. If omitted ``energy_tol`` must be given and the smallest
        ``k`` with ``1 - sum_{i<=k} s_i^2 / sum s_i^2 < energy_tol`` is used.
    block_size : int, optional
        Size of the diagonal blocks of ``M`` (DG mass), for a blockwise
        Cholesky factorisation.
    """
    U = np.asarray(snapshots, dtype=float)
    if U.ndim != 2:
        raise InvalidArgumentError("snapshots must be a 2D array")
    N, J = U.shape
    if k is None and energy_tol is None:
        raise InvalidArgumentError("give k or energy_tol")
    fac = _MassFactor(M, block_size)
    Uh = fac.apply(U)
    W, s, _ = sla.svd(Uh, full_matrices=False, lapack_driver="gesdd")
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > rank_tol * s[0]))
    if k is None:
        total = float(np.sum(s ** 2))
        if total == 0.0:
            raise RankDeficiencyError("snapshot matrix is zero", 0)
        lost = 1.0 - np.cumsum(s ** 2) / total
        k = int(np.argmax(lost < energy_tol)) + 1
    if k < 1 or k > min(N, J):
        raise InvalidArgumentError(f"k={k} outside [1, min(N, J)={min(N, J)}]")
    if k > rank:
        raise RankDeficiencyError(f"requested k={k} exceeds numerical rank {rank}", rank)
    psi = fac.solve(np.ascontiguousarray(W[:, :k]))
    return PodBasis(psi, s[:k].copy(), s.copy(), M)


# ---------------------------------------------------------------------------
# DEIM


def deim_select(W: np.ndarray, rel_tol: float = 1e-13):
    """Greedy DEIM interpolation indices (0-based).

    Returns ``(indices, P)`` with ``P`` the sparse ``N x m`` selection
    matrix. Ties in ``max |r|`` go to the lowest index.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    N, m = W.shape
    if m > N:
        raise InvalidArgumentError("more DEIM points than rows")
    idx = []
    r = W[:, 0]
    for i in range(m):
        if i > 0:
            c = np.linalg.solve(W[idx, :i], W[idx, i])
            r = W[:, i] - W[:, :i] @ c
        a = np.abs(r)
        j = int(np.argmax(a))
        scale = float(np.max(np.abs(W[:, i])))
        if a[j] == 0.0 or a[j] <= rel_tol * scale:
            raise SelectionFailureError(f"DEIM residual vanished at stage {i + 1} (dependent columns)")
        idx.append(j)
    idx = np.asarray(idx, dtype=np.int64)
    P = sp.csr_matrix((np.ones(m), (idx, np.arange(m))), shape=(N, m))
    return idx, P


@dataclass
class DeimData:
    W: np.ndarray
    indices: np.ndarray
    Q: np.ndarray
    PtW: np.ndarray

    @property
    def m(self):
        return self.W.shape[1]


def build_deim(nonlinear_snapshots: np.ndarray, m: int, psi: np.ndarray) -> DeimData:
    """DEIM data from nonlinearity snapshots (Euclidean POD basis ``W``) and
    the state basis ``psi`` used to project the equation."""
    W = compute_pod_basis(nonlinear_snapshots, None, m).psi
    idx, _ = deim_select(W)
    PtW = W[idx]
    cond = np.linalg.cond(PtW)
    if not np.isfinite(cond):
        raise SelectionFailureError("P^T W is singular")
    Q = np.linalg.solve(PtW.T, (psi.T @ W).T).T
    return DeimData(W, idx, Q, PtW)


def deim_apply(deim: DeimData, sampler) -> np.ndarray:
    """Reduced nonlinearity ``Q F[idx]``; ``sampler`` is either a callable
    taking the index vector or an already sampled vector."""
    F = sampler(deim.indices) if callable(sampler) else np.asarray(sampler, dtype=float)
    return deim.Q @ F


def deim_reconstruct(deim: DeimData, sampled) -> np.ndarray:
    """Full-length DEIM approximation ``W (P^T W)^{-1} F[idx]``."""
    return deim.W @ np.linalg.solve(deim.PtW, np.asarray(sampled, dtype=float))


class _QuadratureEvaluator:
    """Shared evaluation from reduced coordinates: ``A`` maps coefficients
    to values at a set of quadrature points, ``T`` holds the quadrature
    weights times the test functions of the output rows."""

    def _evaluate(self, coeffs):
        return self.A @ coeffs

    def _avg(self, f, coeffs0, coeffs1, xi, w, scale_by_xi):
        V0 = self._evaluate(coeffs0)
        dV = self._evaluate(coeffs1) - V0
        return sum(wg * (xg if scale_by_xi else 1.0) * f(V0 + xg * dV) for xg, wg in zip(xi, w))

    def __call__(self, coeffs):
        return self._load(self.system.nonlinear(self._evaluate(coeffs)))

    def jacobian(self, coeffs):
        return self._weighted(self.system.nonlinear_derivative(self._evaluate(coeffs)))

    def average(self, coeffs0, coeffs1, xi, w):
        """``int_0^1 F(a0 + xi (a1 - a0)) dxi`` with the rule ``(xi, w)``."""
        return self._load(self._avg(self.system.nonlinear, coeffs0, coeffs1, xi, w, False))

    def average_jacobian(self, coeffs0, coeffs1, xi, w):
        """Derivative of :meth:`average` with respect to ``a1``."""
        return self._weighted(self._avg(self.system.nonlinear_derivative, coeffs0, coeffs1, xi, w, True))


class DeimSampler(_QuadratureEvaluator):
    """Evaluates selected entries of the assembled nonlinearity and of
    ``P^T J Psi`` from reduced coordinates, touching only the elements
    that own the selected DoFs."""

    def __init__(self, space: DgSpace, system, psi: np.ndarray, indices):
        self.system = as_system(system)
        indices = np.asarray(indices, dtype=np.int64)
        elems = indices // space.n_loc
        self.local = indices % space.n_loc
        self.elements, self.row_elem = np.unique(elems, return_inverse=True)
        psi_loc = psi.reshape(space.n_elements, space.n_loc, -1)[self.elements]  # (ne, i, k)
        self.phi_psi = np.einsum("qi,eik->eqk", space.phi, psi_loc)              # (ne, q, k)
        self.nq = space.phi.shape[0]
        self.A = self.phi_psi.reshape(-1, psi.shape[1])
        # weights times test function for each selected row: (m, q)
        self.test = space.wdet[self.elements][self.row_elem] * space.phi[:, self.local].T
        self._rows = self.phi_psi[self.row_elem]                                  # (m, q, k)

    def _evaluate(self, coeffs):
        return (self.A @ coeffs).reshape(-1, self.nq)

    def _load(self, vals):
        return np.sum(self.test * vals[self.row_elem], axis=1)

    def _weighted(self, dv):
        return np.einsum("mq,mqk->mk", self.test * dv[self.row_elem], self._rows)


class GalerkinNonlinearity(_QuadratureEvaluator):
    """``Psi^T F(Psi a)`` and ``Psi^T J(Psi a) Psi`` evaluated at the
    quadrature points with the basis contracted in advance (no sparse
    assembly in the online phase; the cost is still linear in ``N``)."""

    def __init__(self, space: DgSpace, system, psi: np.ndarray):
        self.system = as_system(system)
        psi_loc = psi.reshape(space.n_elements, space.n_loc, -1)
        # rows are (element, quadrature point) pairs
        self.A = np.einsum("qi,eik->eqk", space.phi, psi_loc).reshape(-1, psi.shape[1])
        self.w = space.wdet.ravel()

    def _load(self, vals):
        return self.A.T @ (self.w * vals)

    def _weighted(self, dv):
        return self.A.T @ ((self.w * dv)[:, None] * self.A)


# ---------------------------------------------------------------------------
# reduced system


def build_reduced_system(bases, operators: FullOrderOperators, deim: DeimData | None = None) -> DenseOperators:
    """Galerkin projection of the full operators onto per-component bases.

    Parameters
    ----------
    bases : sequence of PodBasis or (N, k_c) arrays, one per component
    operators : FullOrderOperators
    deim : DeimData, optional
        If given, the nonlinearity is evaluated by DEIM sampling, otherwise
        by full assembly at the lifted state.
    """
    ops = operators
    psis = [b.psi if isinstance(b, PodBasis) else np.asarray(b, dtype=float) for b in bases]
    C = ops.n_components
    if len(psis) != C:
        raise InvalidArgumentError(f"need {C} bases, got {len(psis)}")
    for c, P in enumerate(psis):
        if P.ndim != 2 or P.shape[0] != ops.sizes[c]:
            raise InvalidArgumentError(f"basis {c} has shape {P.shape}, expected ({ops.sizes[c]}, k)")
    mass = [P.T @ (M @ P) for P, M in zip(psis, ops.mass)]
    stiff = [P.T @ (S @ P) for P, S in zip(psis, ops.stiffness)]
    const = [P.T @ c for P, c in zip(psis, ops.const)]
    coupling = [[None if ops.coupling[c][d] is None else psis[c].T @ (ops.coupling[c][d] @ psis[d])
                 for d in range(C)] for c in range(C)]
    Pu = psis[0]
    if deim is None:
        ev = GalerkinNonlinearity(ops.space, ops.system, Pu)
        return DenseOperators(mass, stiff, coupling, const, ev, ev.jacobian, system=ops.system,
                              nonlinear_avf=ev.average, jacobian_avf=ev.average_jacobian)
    if deim.Q.shape[0] != Pu.shape[1]:
        raise InvalidArgumentError("DEIM projector does not match the activator basis")
    sampler = DeimSampler(ops.space, ops.system, Pu, deim.indices)
    Q = deim.Q
    return DenseOperators(mass, stiff, coupling, const,
                          lambda a: Q @ sampler(a),
                          lambda a: Q @ sampler.jacobian(a),
                          system=ops.system,
                          nonlinear_avf=lambda a0, a1, xi, w: Q @ sampler.average(a0, a1, xi, w),
                          jacobian_avf=lambda a0, a1, xi, w: Q @ sampler.average_jacobian(a0, a1, xi, w))


@dataclass
class ReducedTrajectory:
    times: list
    coefficients: list  # list of (C,) lists of reduced vectors
    newton_iterations: list

    def lifted(self, bases, index=-1):
        psis = [b.psi if isinstance(b, PodBasis) else b for b in bases]
        return np.array([P @ a for P, a in zip(psis, self.coefficients[index])])


def run_reduced(reduced: DenseOperators, tau, grid: TimeGrid, initial_coeffs,
                newton_cfg: NewtonConfig = NewtonConfig(), record: bool = True) -> ReducedTrajectory:
    """AVF stepping of the reduced system starting from reduced coordinates."""
    sizes = reduced.sizes
    flat = np.concatenate([np.asarray(a, dtype=float) for a in initial_coeffs])
    if flat.size != sum(sizes):
        raise InvalidArgumentError("initial reduced coordinates do not match the reduced system")
    stepper = AVFStepper(reduced, tau, grid.dt, newton_cfg)
    cuts = np.cumsum(sizes)[:-1]
    X = flat
    times, coeffs, iters = [grid.t0], [np.split(X, cuts)], []
    # one flat vector carries all components since sizes may differ
    state = State(grid.t0, X[None, :])
    for n in range(1, grid.steps + 1):
        new, it = stepper.step(state)
        state = State(grid.t0 + n * grid.dt, new.fields)
        iters.append(it)
        if record:
            times.append(state.t)
            coeffs.append(np.split(state.fields[0], cuts))
    if not record:
        times, coeffs = [state.t], [np.split(state.fields[0], cuts)]
    return ReducedTrajectory(times, coeffs, iters)


# ---------------------------------------------------------------------------
# reporting


@dataclass
class RomReport:
    label: str
    n_elements: int
    n_dofs: int
    t_full: float
    t_pod: float
    t_deim: float
    err_pod: tuple
    err_deim: tuple
    names: tuple = ("u", "v")

    @property
    def s_pod(self):
        return self.t_full / self.t_pod

    @property
    def s_deim(self):
        return self.t_full / self.t_deim

    HEADER = ("mesh", "triangles", "dofs", "full_s", "pod_s", "pod_deim_s", "S_POD", "S_DEIM")

    def row(self):
        vals = [self.label, self.n_elements, self.n_dofs, self.t_full, self.t_pod, self.t_deim,
                self.s_pod, self.s_deim]
        for name, e in zip(self.names, self.err_pod):
            vals.append(e)
        for name, e in zip(self.names, self.err_deim):
            vals.append(e)
        return vals

    def header(self):
        return list(self.HEADER) + [f"err_pod_{n}" for n in self.names] + [f"err_deim_{n}" for n in self.names]


def write_report_csv(path, reports):
    reports = list(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(reports[0].header())
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])


def mean_relative_errors(full_states, rom_states, M):
    """Mean over time of ``||y - y_rom||_M / ||y||_M`` per component.

    ``full_states``/``rom_states``: sequences of ``(C, N)`` arrays.
    """
    full_states = list(full_states)
    rom_states = list(rom_states)
    if len(full_states) != len(rom_states):
        raise InvalidArgumentError("trajectories must be sampled at identical times")
    C = np.asarray(full_states[0]).shape[0]
    acc = np.zeros(C)
    for Y, Z in zip(full_states, rom_states):
        for c in range(C):
            d = Y[c] - Z[c]
            nrm = float(Y[c] @ (M @ Y[c]))
            err = float(d @ (M @ d))
            acc[c] += 0.0 if err == 0.0 else np.sqrt(err / nrm)
    return tuple(acc / len(full_states))


def rom_report(full_states, pod_states, deim_states, M, timers: dict, label="", n_elements=0,
               names=("u", "v")) -> RomReport:
    """Errors and speed-ups from sampled trajectories and phase timings.

    ``timers`` maps ``"full"``, ``"pod"``, ``"deim"`` to either a float or a
    list of repeated timings (median used).
    """
    def med(x):
        return float(statistics.median(x)) if np.ndim(x) else float(x)

    full_states = list(full_states)
    return RomReport(label, n_elements, int(np.asarray(full_states[0]).shape[1]),
                     med(timers["full"]), med(timers["pod"]), med(timers["deim"]),
                     mean_relative_errors(full_states, pod_states, M),
                     mean_relative_errors(full_states, deim_states, M), tuple(names))


def _timed(fn, repeats):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, times


def rom_compare(space: DgSpace, model, grid: TimeGrid, initial, k: int = 10, m: int = 50, stride: int = 1,
                repeats: int = 3, newton_cfg: NewtonConfig = NewtonConfig(), label: str = "",
                nonlinear_snapshots: str = "full"):
    """Full run, POD and POD-DEIM runs on the same grid; returns
    ``(RomReport, details)``.

    The reduced runs start from the M-orthogonal projection of the initial
    state. Timings cover the online time stepping only.
    ``nonlinear_snapshots="full"`` builds the DEIM basis from the
    nonlinearity at the full states; ``"projected"`` evaluates it at the
    POD projections ``Psi Psi^T M u`` of the snapshots instead, which keeps
    the DEIM space closer to what the reduced trajectory visits.
    """
    if nonlinear_snapshots not in ("full", "projected"):
        raise InvalidArgumentError(f"unknown nonlinear snapshot mode {nonlinear_snapshots!r}")
    sysm = as_system(model)
    ops = FullOrderOperators(space, sysm)
    init = initial_state(space, initial, grid.t0)

    def full_run():
        rec = SnapshotRecorder(ops, stride)
        run_simulation(space, sysm, grid, init, [rec], newton_cfg, operators=ops)
        return rec

    rec, t_full = _timed(full_run, repeats)
    snaps = rec.snapshots()
    M = space.mass()
    bases = [compute_pod_basis(S, M, k, block_size=space.n_loc) for S in snaps.states]
    F = snaps.nonlinear
    if nonlinear_snapshots == "projected":
        U = bases[0].psi @ bases[0].project(snaps.states[0])
        F = np.column_stack([ops.nonlinear(U[:, j]) for j in range(U.shape[1])])
    deim = build_deim(F, m, bases[0].psi)
    red_pod = build_reduced_system(bases, ops)
    red_deim = build_reduced_system(bases, ops, deim)
    a0 = [b.project(y) for b, y in zip(bases, init.fields)]
    pod_traj, t_pod = _timed(lambda: run_reduced(red_pod, sysm.tau, grid, a0, newton_cfg), repeats)
    deim_traj, t_deim = _timed(lambda: run_reduced(red_deim, sysm.tau, grid, a0, newton_cfg), repeats)

    # compare at the snapshot times
    sel = [int(round((t - grid.t0) / grid.dt)) for t in snaps.times]
    full_states = [np.array([S[:, j] for S in snaps.states]) for j in range(snaps.n_snapshots)]
    pod_states = [pod_traj.lifted(bases, i) for i in sel]
    deim_states = [deim_traj.lifted(bases, i) for i in sel]
    report = rom_report(full_states, pod_states, deim_states, M,
                        {"full": t_full, "pod": t_pod, "deim": t_deim}, label, space.n_elements,
                        sysm.names)
    details = dict(snapshots=snaps, bases=bases, deim=deim, pod=pod_traj, pod_deim=deim_traj)
    return report, details
