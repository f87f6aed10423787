"""Average-vector-field (AVF) time stepping with an inner Newton solver.

For the semi-discrete system ``T y' = -S y + L y + c + E N(u)`` (``T`` the
time-scaled mass, ``S`` the diffusion operators, ``L`` the linear reaction
couplings, ``N`` the assembled quadratic/cubic activator nonlinearity and
``E`` its injection into the activator rows) one AVF step solves

    T (y1 - y0) = dt [ (L - S)(y0 + y1) / 2 + c + E int_0^1 N(u0 + xi (u1 - u0)) dxi ].

The ``xi`` integral of a cubic is exact with 2-point Gauss-Legendre.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dgspace import DgSpace
from .errors import InvalidArgumentError, LinearSolverError, StepFailureError
from .kinetics import as_system
from .quadrature import gauss_interval

__all__ = [
    "State",
    "TimeGrid",
    "NewtonConfig",
    "NewtonResult",
    "FullOrderOperators",
    "DenseOperators",
    "AVFStepper",
    "avf_average",
    "avf_step",
    "newton_solve",
    "run_simulation",
    "Trajectory",
    "random_initial_state",
]

log = logging.getLogger(__name__)


@dataclass
class State:
    """Coefficient vectors of all components at time ``t``; ``fields`` has
    shape ``(n_components, N)``."""

    t: float
    fields: np.ndarray

    def __post_init__(self):
        self.fields = np.atleast_2d(np.asarray(self.fields, dtype=float))
        if not np.all(np.isfinite(self.fields)):
            raise InvalidArgumentError("state contains non-finite entries")

    @property
    def u(self):
        return self.fields[0]

    @property
    def v(self):
        return self.fields[1]

    @property
    def s(self):
        return self.fields[2]

    @property
    def n_components(self):
        return self.fields.shape[0]

    def copy(self):
        return State(self.t, self.fields.copy())


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidArgumentError("dt must be positive")
        if self.steps < 0:
            raise InvalidArgumentError("step count must be non-negative")

    @classmethod
    def until(cls, T: float, dt: float, t0: float = 0.0):
        return cls(t0, dt, int(round((T - t0) / dt)))

    @property
    def T(self):
        return self.t0 + self.steps * self.dt


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 25
    linear_tol: float = 1e-12
    linear_solver: str = "auto"  # "direct", "gmres" or "auto"
    direct_limit: int = 2000  # "auto": preconditioned GMRES for 2D systems above this size

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0 or self.linear_tol <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")
        if self.linear_solver not in ("direct", "gmres", "auto"):
            raise InvalidArgumentError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    initial_residual_norm: float


def _direct(J, rhs):
    try:
        return spla.splu(J.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
    except RuntimeError as exc:
        raise LinearSolverError(f"singular Newton matrix: {exc}") from exc


def _linear_solve(J, rhs, cfg: NewtonConfig, precond=None):
    if sp.issparse(J):
        if cfg.linear_solver == "gmres" or precond is not None:
            x, info = spla.gmres(J.tocsr(), rhs, rtol=cfg.linear_tol, atol=0.0, restart=100,
                                 maxiter=5, M=precond)
            if info != 0:
                if cfg.linear_solver != "auto":
                    raise LinearSolverError(f"GMRES did not converge (info={info})")
                log.debug("GMRES stalled (info=%d), falling back to a direct solve", info)
                x = _direct(J, rhs)
        else:
            x = _direct(J, rhs)
    else:
        J = np.atleast_2d(J)
        try:
            x = np.linalg.solve(J, np.atleast_1d(rhs))
        except np.linalg.LinAlgError as exc:
            raise LinearSolverError(f"singular Newton matrix: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("Newton update is not finite (singular matrix?)")
    return x


def newton_solve(residual: Callable, jacobian: Callable, x0, cfg: NewtonConfig = NewtonConfig(),
                 precond=None) -> NewtonResult:
    """Solve ``residual(x) = 0`` by Newton's method.

    Stops when ``||r||_2 < abs_tol`` or ``||r||_2 < rel_tol * ||r(x0)||_2``.
    Three consecutive residual increases abort early. ``precond`` is an
    optional preconditioner for the iterative linear solver.
    """
    x = np.array(x0, dtype=float, copy=True)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    r = np.atleast_1d(residual(x))
    r0 = rnorm = float(np.linalg.norm(r))
    growth = 0
    it = 0
    while not (rnorm < cfg.abs_tol or rnorm < cfg.rel_tol * r0):
        if it >= cfg.max_iter:
            raise StepFailureError(
                f"Newton did not converge in {cfg.max_iter} iterations (residual {rnorm:.3e})", rnorm)
        x = x - _linear_solve(jacobian(x), r, cfg, precond)
        it += 1
        r = np.atleast_1d(residual(x))
        new = float(np.linalg.norm(r))
        if not math.isfinite(new):
            raise StepFailureError("Newton residual became non-finite", new)
        growth = growth + 1 if new > rnorm else 0
        rnorm = new
        if growth >= 3:
            raise StepFailureError(f"Newton diverging (residual {rnorm:.3e})", rnorm)
    return NewtonResult(x[0] if scalar else x, it, rnorm, r0)


def avf_average(f: Callable, y_old, y_new, n_points: int = 2):
    """``int_0^1 f(xi y_new + (1 - xi) y_old) dxi`` by Gauss-Legendre in xi
    (exact for polynomial ``f`` of degree ``<= 2 n_points - 1``)."""
    xi, w = gauss_interval(n_points)
    y_old = np.asarray(y_old, dtype=float)
    dy = np.asarray(y_new, dtype=float) - y_old
    return sum(wg * np.asarray(f(y_old + xg * dy)) for xg, wg in zip(xi, w))


# ---------------------------------------------------------------------------
# Operator sets


class FullOrderOperators:
    """Assembled DG operators for a model on a space (sparse)."""

    sparse = True

    def __init__(self, space: DgSpace, model):
        self.space = space
        self.system = sysm = as_system(model)
        C = sysm.n_components
        self.n_components = C
        self.sizes = [space.n_dofs] * C
        M = space.mass()
        self.mass = [M] * C
        self.stiffness = [space.stiffness(d) for d in sysm.diffusion]
        ones = M @ space.constant(1.0)
        c0, c1, _, _ = sysm.cubic
        self.const = [c0 * ones] + [e * ones for e in sysm.inh_const]
        L = [[None] * C for _ in range(C)]
        L[0][0] = c1 * M
        for c in range(1, C):
            L[0][c] = sysm.act_coupling[c - 1] * M
            L[c][0] = sysm.inh_u[c - 1] * M
            L[c][c] = sysm.inh_self[c - 1] * M
        self.coupling = L

    def nonlinear(self, u):
        return self.space.reaction_vector(u, self.system.nonlinear)

    def nonlinear_jacobian(self, u):
        return self.space.reaction_jacobian(u, self.system.nonlinear_derivative)

    # xi-averages taken at the quadrature points, then assembled once
    def nonlinear_avf(self, u0, u1, xi, w):
        U0 = self.space.values_at_quadrature(u0)
        dU = self.space.values_at_quadrature(u1) - U0
        return self.space.load_from_values(sum(wg * self.system.nonlinear(U0 + xg * dU) for xg, wg in zip(xi, w)))

    def jacobian_avf(self, u0, u1, xi, w):
        U0 = self.space.values_at_quadrature(u0)
        dU = self.space.values_at_quadrature(u1) - U0
        g = sum(wg * xg * self.system.nonlinear_derivative(U0 + xg * dU) for xg, wg in zip(xi, w))
        return self.space.weighted_mass(g)


class DenseOperators:
    """Small dense operator set (reduced models, scalar test problems).

    ``coupling`` is a nested list of dense blocks (``None`` for zero).
    ``nonlinear_avf``/``jacobian_avf`` optionally replace the generic
    xi-averages of ``nonlinear``/``nonlinear_jacobian`` with fused versions.
    """

    sparse = False

    def __init__(self, mass, stiffness, coupling, const, nonlinear, nonlinear_jacobian, system=None,
                 nonlinear_avf=None, jacobian_avf=None):
        self.mass = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mass]
        self.stiffness = [np.atleast_2d(np.asarray(s, dtype=float)) for s in stiffness]
        self.n_components = len(self.mass)
        self.sizes = [m.shape[0] for m in self.mass]
        self.coupling = [[None if b is None else np.atleast_2d(np.asarray(b, dtype=float)) for b in row]
                         for row in coupling]
        self.const = [np.zeros(n) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
                      for c, n in zip(const, self.sizes)]
        self._nl = nonlinear
        self._nlj = nonlinear_jacobian
        self.system = system
        if nonlinear_avf is not None:
            self.nonlinear_avf = nonlinear_avf
        if jacobian_avf is not None:
            self.jacobian_avf = jacobian_avf

    def nonlinear(self, u):
        return np.atleast_1d(self._nl(u))

    def nonlinear_jacobian(self, u):
        return np.atleast_2d(self._nlj(u))


# ---------------------------------------------------------------------------


class AVFStepper:
    """AVF time stepper for a fixed ``dt``.

    Parameters
    ----------
    ops : FullOrderOperators or DenseOperators
    tau : sequence of float
        Time scales per component.
    dt : float
    newton : NewtonConfig
    frozen : sequence of int
        Components held fixed (their equations are replaced by identity).
    gauss_points : int
        Gauss-Legendre points for the xi-integral of the nonlinearity.
    """

    def __init__(self, ops, tau: Sequence[float], dt: float, newton: NewtonConfig = NewtonConfig(),
                 frozen: Sequence[int] = (), gauss_points: int = 2):
        if not (dt > 0 and math.isfinite(dt)):
            raise InvalidArgumentError("dt must be positive")
        self.ops = ops
        self.dt = float(dt)
        self.newton = newton
        self.frozen = frozenset(int(c) for c in frozen)
        self.xi, self.wxi = gauss_interval(gauss_points)
        C = ops.n_components
        self.offsets = np.concatenate([[0], np.cumsum(ops.sizes)])
        self.n = int(self.offsets[-1])

        A = [[None] * C for _ in range(C)]
        B = [[None] * C for _ in range(C)]
        for c in range(C):
            n_c = ops.sizes[c]
            if c in self.frozen:
                A[c][c] = B[c][c] = self._eye(n_c)
                continue
            for d in range(C):
                blk = ops.coupling[c][d]
                lin = None if blk is None else -blk
                if c == d:
                    lin = ops.stiffness[c] if lin is None else ops.stiffness[c] + lin
                tm = tau[c] * ops.mass[c] if c == d else None
                if lin is None:
                    A[c][d] = tm
                    B[c][d] = tm
                else:
                    A[c][d] = (0.5 * self.dt) * lin if tm is None else tm + (0.5 * self.dt) * lin
                    B[c][d] = (-0.5 * self.dt) * lin if tm is None else tm - (0.5 * self.dt) * lin
        self.A = self._block(A)
        self.B = self._block(B)
        self.const = np.concatenate([
            np.zeros(ops.sizes[c]) if c in self.frozen else self.dt * ops.const[c] for c in range(C)])
        self.nonlinear_active = 0 not in self.frozen
        self._precond = None

    def _iterative(self):
        cfg = self.newton
        if not self.ops.sparse:
            return False
        if cfg.linear_solver == "gmres":
            return True
        space = getattr(self.ops, "space", None)
        dim = space.mesh.dim if space is not None else 1
        return cfg.linear_solver == "auto" and dim >= 2 and self.n > cfg.direct_limit

    def _preconditioner(self):
        # LU of the constant linear part; the Newton matrix differs from it
        # only by the dt-scaled reaction Jacobian
        if self._precond is None and self.ops.sparse:
            lu = spla.splu(sp.csc_matrix(self.A), permc_spec="MMD_AT_PLUS_A")
            self._precond = spla.LinearOperator(self.A.shape, lu.solve)
        return self._precond

    def _eye(self, n):
        return sp.identity(n, format="csr") if self.ops.sparse else np.eye(n)

    def _block(self, blocks):
        if self.ops.sparse:
            return sp.bmat(blocks, format="csr")
        C = len(blocks)
        sizes = self.ops.sizes
        return np.block([[np.zeros((sizes[c], sizes[d])) if blocks[c][d] is None else blocks[c][d]
                          for d in range(C)] for c in range(C)])

    # --------------------------------------------------------------
    def _avg_nonlinear(self, u0, u1):
        fused = getattr(self.ops, "nonlinear_avf", None)
        if fused is not None:
            return fused(u0, u1, self.xi, self.wxi)
        du = u1 - u0
        return sum(w * self.ops.nonlinear(u0 + x * du) for x, w in zip(self.xi, self.wxi))

    def _avg_jacobian(self, u0, u1):
        fused = getattr(self.ops, "jacobian_avf", None)
        if fused is not None:
            return fused(u0, u1, self.xi, self.wxi)
        du = u1 - u0
        J = None
        for x, w in zip(self.xi, self.wxi):
            Jg = (w * x) * self.ops.nonlinear_jacobian(u0 + x * du)
            J = Jg if J is None else J + Jg
        return J

    def residual(self, X1, X0):
        r = self.A @ X1 - self.B @ X0 - self.const
        if self.nonlinear_active:
            n0 = self.ops.sizes[0]
            r[:n0] -= self.dt * self._avg_nonlinear(X0[:n0], X1[:n0])
        return r

    def jacobian(self, X1, X0):
        if not self.nonlinear_active:
            return self.A
        n0 = self.ops.sizes[0]
        Jn = self.dt * self._avg_jacobian(X0[:n0], X1[:n0])
        if self.ops.sparse:
            pad = sp.csr_matrix((self.n - n0, self.n - n0))
            return self.A - sp.block_diag([Jn, pad], format="csr")
        J = self.A.copy()
        J[:n0, :n0] -= Jn
        return J

    def step(self, state: State):
        """Advance one step; returns ``(new_state, newton_iterations)``."""
        X0 = state.fields.reshape(-1)
        res = newton_solve(lambda X: self.residual(X, X0), lambda X: self.jacobian(X, X0),
                           X0, self.newton, self._preconditioner() if self._iterative() else None)
        return State(state.t + self.dt, res.x.reshape(state.fields.shape)), res.iterations


def avf_step(state: State, dt: float, operators, model=None, newton_cfg: NewtonConfig = NewtonConfig(),
             tau=None) -> State:
    """Single AVF step (convenience wrapper around :class:`AVFStepper`)."""
    if tau is None:
        tau = as_system(model).tau
    return AVFStepper(operators, tau, dt, newton_cfg).step(state)[0]


@dataclass
class Trajectory:
    final: State
    newton_iterations: list = field(default_factory=list)
    times: list = field(default_factory=list)


def random_initial_state(space: DgSpace, n_components: int, seed: int, low=-1.0, high=1.0) -> State:
    """Uniform random element means in ``[low, high]`` per component, all
    higher modes zero."""
    rng = np.random.default_rng(seed)
    fields = [space.from_element_values(rng.uniform(low, high, space.n_elements))
              for _ in range(n_components)]
    return State(0.0, np.array(fields))


def initial_state(space: DgSpace, initial, t0: float = 0.0) -> State:
    """Build a state from callables of ``x`` (L2-projected) or arrays."""
    if isinstance(initial, State):
        return initial.copy()
    fields = []
    for item in initial:
        if callable(item):
            fields.append(space.project(item))
        elif np.isscalar(item):
            fields.append(space.constant(float(item)))
        else:
            fields.append(np.asarray(item, dtype=float))
    return State(t0, np.array(fields))


def run_simulation(space: DgSpace, model, grid: TimeGrid, initial, observers=(),
                   newton_cfg: NewtonConfig = NewtonConfig(), frozen=(), operators=None) -> Trajectory:
    """Advance ``initial`` over ``grid``, calling ``observer(step, state)``
    after construction (step 0) and after every step."""
    sysm = as_system(model)
    state = initial_state(space, initial, grid.t0)
    if state.n_components != sysm.n_components:
        raise InvalidArgumentError(
            f"initial state has {state.n_components} components, model needs {sysm.n_components}")
    for obs in observers:
        obs(0, state)
    traj = Trajectory(state, times=[state.t])
    if grid.steps == 0:
        return traj
    ops = operators if operators is not None else FullOrderOperators(space, sysm)
    stepper = AVFStepper(ops, sysm.tau, grid.dt, newton_cfg, frozen=frozen)
    for n in range(1, grid.steps + 1):
        try:
            state, iters = stepper.step(state)
        except StepFailureError as exc:
            exc.step = n
            raise StepFailureError(f"step {n}: {exc}", exc.residual_norm, n) from exc
        state = replace(state, t=grid.t0 + n * grid.dt)
        traj.newton_iterations.append(iters)
        traj.times.append(state.t)
        for obs in observers:
            obs(n, state)
    traj.final = state
    return traj
