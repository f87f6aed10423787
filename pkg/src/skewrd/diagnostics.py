"""Discrete energy of skew-gradient systems and related probes.

With ``F`` the kinetic potential (``dF/du`` is the activator reaction,
``dF/dy_c = -lambda_c g_c`` for the inhibitors) the discrete energy is

    E = 1/2 a_h(d_u; u, u) - sum_c lambda_c / 2 a_h(d_c; y_c, y_c) - (F(u, y), 1).

``a_h(d; u, u)`` contains the broken gradient norm, the symmetric face
consistency term and the penalty term, so ``E`` includes the SIPG face
contributions. With this sign the activator equation is a gradient flow
of ``E`` and each inhibitor equation a gradient flow of ``-E``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dgspace import DgSpace
from .errors import DomainError, InvalidArgumentError, NumericalFailureError
from .integrator import AVFStepper, FullOrderOperators, NewtonConfig, State, newton_solve
from .kinetics import as_system

__all__ = [
    "discrete_energy",
    "energy_terms",
    "energy_gradient",
    "EnergyTrace",
    "EnergyRecorder",
    "energy_increment_residual",
    "stationary_residual",
    "find_discrete_steady_state",
    "mini_maximizer_probe",
]


def _signs(sysm):
    lam = sysm.energy_weights
    return np.concatenate([[1.0], -lam[1:]])


def potential_integral(state: State, space: DgSpace, model) -> float:
    sysm = as_system(model)
    vals = [space.values_at_quadrature(y) for y in state.fields]
    return space.integrate(sysm.potential(vals))


def energy_terms(state: State, space: DgSpace, model) -> dict:
    """Energy split into its pieces.

    Returns a dict with, for each component name, the signed
    ``volume``/``consistency``/``penalty`` contributions, plus
    ``potential`` (already carrying its minus sign) and ``total``.
    """
    sysm = as_system(model)
    out = {}
    total = 0.0
    for name, sign, d, y in zip(sysm.names, _signs(sysm), sysm.diffusion, state.fields):
        vol, cons, pen = space.stiffness_parts(d)
        parts = {
            "volume": 0.5 * sign * float(y @ (vol @ y)),
            "consistency": 0.5 * sign * float(y @ (cons @ y)),
            "penalty": 0.5 * sign * float(y @ (pen @ y)),
        }
        out[name] = parts
        total += sum(parts.values())
    out["potential"] = -potential_integral(state, space, model)
    out["total"] = total + out["potential"]
    return out


def discrete_energy(state: State, space: DgSpace, model) -> float:
    sysm = as_system(model)
    E = 0.0
    for sign, d, y in zip(_signs(sysm), sysm.diffusion, state.fields):
        E += 0.5 * sign * float(y @ (space.stiffness(d) @ y))
    return E - potential_integral(state, space, model)


def energy_gradient(state: State, space: DgSpace, model) -> np.ndarray:
    """Gradient of :func:`discrete_energy` with respect to all coefficients,
    shape ``(n_components, N)``."""
    sysm = as_system(model)
    vals = [space.values_at_quadrature(y) for y in state.fields]
    reac = sysm.reactions(vals)
    lam = sysm.energy_weights
    grads = []
    for c, (sign, d, y) in enumerate(zip(_signs(sysm), sysm.diffusion, state.fields)):
        # dF/dy_c = f (c = 0) or -lambda_c g_c
        dF = reac[0] if c == 0 else -lam[c] * reac[c]
        load = np.einsum("eq,qi->ei", space.wdet * dF, space.phi).ravel()
        grads.append(sign * (space.stiffness(d) @ y) - load)
    return np.array(grads)


def stationary_residual(state: State, space: DgSpace, model) -> np.ndarray:
    """Residual of the discrete steady problem ``S y - (reaction, phi) = 0``
    for every component."""
    sysm = as_system(model)
    vals = [space.values_at_quadrature(y) for y in state.fields]
    reac = sysm.reactions(vals)
    out = []
    for c, (d, y) in enumerate(zip(sysm.diffusion, state.fields)):
        load = np.einsum("eq,qi->ei", space.wdet * np.broadcast_to(reac[c], space.wdet.shape),
                         space.phi).ravel()
        out.append(space.stiffness(d) @ y - load)
    return np.array(out)


def find_discrete_steady_state(space: DgSpace, model, guess: State,
                               cfg: NewtonConfig = NewtonConfig(abs_tol=1e-11, rel_tol=1e-14, max_iter=50)) -> State:
    """Newton solve of the discrete stationary problem from ``guess``."""
    sysm = as_system(model)
    ops = FullOrderOperators(space, sysm)
    # dt -> infinity limit of the AVF residual: (S - L) y - c - E N(u)
    C = sysm.n_components
    n = space.n_dofs
    blocks = [[None] * C for _ in range(C)]
    for c in range(C):
        for d in range(C):
            blk = ops.coupling[c][d]
            lin = None if blk is None else -blk
            if c == d:
                lin = ops.stiffness[c] if lin is None else ops.stiffness[c] + lin
            blocks[c][d] = lin
    K = sp.bmat(blocks, format="csr")
    const = np.concatenate(ops.const)

    def residual(X):
        r = K @ X - const
        r[:n] -= ops.nonlinear(X[:n])
        return r

    def jacobian(X):
        pad = sp.csr_matrix((K.shape[0] - n, K.shape[0] - n))
        return K - sp.block_diag([ops.nonlinear_jacobian(X[:n]), pad], format="csr")

    res = newton_solve(residual, jacobian, guess.fields.reshape(-1), cfg)
    return State(guess.t, res.x.reshape(guess.fields.shape))


@dataclass
class EnergyTrace:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    increments: list = field(default_factory=list)  # (actual, predicted)

    def append(self, t: float, E: float):
        if self.times and not t > self.times[-1]:
            raise InvalidArgumentError("energy trace times must increase")
        if not np.isfinite(E):
            raise NumericalFailureError(f"non-finite energy at t={t}")
        self.times.append(float(t))
        self.energies.append(float(E))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E"])
            for t, E in zip(self.times, self.energies):
                w.writerow([repr(t), repr(E)])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path) as fh:
            rows = list(csv.reader(fh))
        for t, E in rows[1:]:
            trace.append(float(t), float(E))
        return trace

    def as_arrays(self):
        return np.asarray(self.times), np.asarray(self.energies)


class EnergyRecorder:
    """Observer recording the discrete energy every ``stride`` steps; with
    ``dt`` given it also records the predicted energy increments."""

    def __init__(self, space: DgSpace, model, stride: int = 1, dt: float | None = None):
        self.space = space
        self.model = model
        self.stride = max(1, int(stride))
        self.dt = dt
        self.trace = EnergyTrace()
        self._prev = None

    def __call__(self, step: int, state: State):
        if self.dt is not None and self._prev is not None:
            dE, pred, _ = energy_increment_residual(self._prev, state, self.dt, self.model, self.space)
            self.trace.increments.append((dE, pred))
        if step % self.stride == 0:
            self.trace.append(state.t, discrete_energy(state, self.space, self.model))
        if self.dt is not None:
            self._prev = state


def energy_increment_residual(state_n: State, state_np1: State, dt: float, model, space: DgSpace):
    """Compare the energy change with ``-tau_u/dt ||du||^2 + sum_c lambda_c tau_c/dt ||dy_c||^2``.

    Returns ``(actual, predicted, |actual - predicted|)``.
    """
    sysm = as_system(model)
    M = space.mass()
    diff = state_np1.fields - state_n.fields
    lam = sysm.energy_weights
    pred = 0.0
    for c, dy in enumerate(diff):
        sq = float(dy @ (M @ dy))
        pred += (-1.0 if c == 0 else lam[c]) * sysm.tau[c] / dt * sq
    if np.array_equal(state_np1.fields, state_n.fields):
        actual = 0.0
    else:
        actual = discrete_energy(state_np1, space, model) - discrete_energy(state_n, space, model)
    return actual, pred, abs(actual - pred)


@dataclass
class MiniMaxReport:
    u_energies: list
    v_energies: list
    u_nonincreasing: bool
    v_nondecreasing: bool
    max_u_increase: float
    max_v_decrease: float

    @property
    def is_mini_maximizer(self):
        return self.u_nonincreasing and self.v_nondecreasing


def _monotone(energies, direction, rtol):
    E = np.asarray(energies)
    if len(E) < 2:
        return True, 0.0
    jumps = direction * np.diff(E)  # positive = violation
    tol = rtol * max(1.0, float(np.max(np.abs(E))))
    worst = float(max(jumps.max(), 0.0))
    return bool(np.all(jumps <= tol)), worst


def mini_maximizer_probe(steady: State, space: DgSpace, model, scale: float = 1e-3, steps: int = 50,
                         dt: float = 0.1, seed: int = 0, rtol: float = 1e-12,
                         steady_tol: float = 1e-8, newton_cfg: NewtonConfig | None = None) -> MiniMaxReport:
    """Probe the mini-maximizer property around a discrete steady state.

    (a) perturb ``u`` and run the AVF flow with every inhibitor frozen;
    the energy must not increase. (b) perturb the inhibitors and run with
    ``u`` frozen; the energy must not decrease.
    """
    sysm = as_system(model)
    res = float(np.linalg.norm(stationary_residual(steady, space, sysm)))
    if res >= steady_tol:
        raise DomainError(f"state is not stationary (residual {res:.3e})")
    cfg = newton_cfg or NewtonConfig(abs_tol=1e-13, rel_tol=1e-13, max_iter=50)
    rng = np.random.default_rng(seed)
    ops = FullOrderOperators(space, sysm)
    C = sysm.n_components

    def flow(moving, frozen):
        state = steady.copy()
        for c in moving:
            state.fields[c] += scale * rng.uniform(-1, 1, space.n_dofs)
        stepper = AVFStepper(ops, sysm.tau, dt, cfg, frozen=frozen)
        energies = [discrete_energy(state, space, sysm)]
        for _ in range(steps):
            state, _ = stepper.step(state)
            energies.append(discrete_energy(state, space, sysm))
        return energies

    inhibitors = list(range(1, C))
    eu = flow([0], inhibitors)
    ev = flow(inhibitors, [0])
    u_ok, u_worst = _monotone(eu, +1, rtol)
    v_ok, v_worst = _monotone(ev, -1, rtol)
    return MiniMaxReport(eu, ev, u_ok, v_ok, u_worst, v_worst)
