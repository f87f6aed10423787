"""Reaction models and their homogeneous (space-independent) analysis.

Every model handled here has the same algebraic shape: one activator
``u`` with a cubic self-reaction and linear coupling to the inhibitors,
and inhibitors ``y_c`` that react linearly,

    tau_u u_t   = d_u  Lap u   + p(u) + sum_c a_c y_c
    tau_c y_c_t = d_c  Lap y_c + b_c u + g_c y_c + e_c .

:class:`CoupledCubicSystem` stores that shape; the user-facing models
(:class:`TwoComponentModel`, :class:`ThreeComponentModel`) reduce to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgumentError, NumericalFailureError

__all__ = [
    "CoupledCubicSystem",
    "TwoComponentModel",
    "ThreeComponentModel",
    "SteadyState",
    "TuringReport",
    "as_system",
    "eval_potential",
    "check_skew_gradient",
    "classify_stability",
    "count_homogeneous_roots",
    "find_steady_states",
    "check_turing",
    "turing_threshold",
    "solve_cubic",
]

MONOSTABLE = "monostable"
BISTABLE = "bistable"


@dataclass(frozen=True)
class CoupledCubicSystem:
    """Activator with cubic kinetics, linearly reacting inhibitors.

    ``cubic`` holds ``(c0, c1, c2, c3)`` of ``p(u) = c0 + c1 u + c2 u^2 + c3 u^3``.
    Inhibitor ``c`` (``0``-based over inhibitors) has coupling ``act_coupling[c]``
    into the activator equation and reaction ``inh_u[c] u + inh_self[c] y + inh_const[c]``.
    """

    names: tuple
    tau: tuple
    diffusion: tuple
    cubic: tuple
    act_coupling: tuple = ()
    inh_u: tuple = ()
    inh_self: tuple = ()
    inh_const: tuple = ()

    @property
    def n_components(self) -> int:
        return len(self.names)

    @property
    def energy_weights(self) -> np.ndarray:
        """Weights ``lambda_c`` so that ``-lambda_c * (inhibitor reaction)`` is
        the ``y_c``-derivative of the potential; the activator weight is 1."""
        w = [1.0]
        for a, b in zip(self.act_coupling, self.inh_u):
            w.append(-a / b if b != 0 else 0.0)
        return np.asarray(w)

    # pointwise kinetics -------------------------------------------------
    def activator_polynomial(self, u):
        c0, c1, c2, c3 = self.cubic
        return c0 + u * (c1 + u * (c2 + u * c3))

    def nonlinear(self, u):
        """Quadratic-plus-cubic part of ``p``; the affine part is handled
        as a linear operator."""
        _, _, c2, c3 = self.cubic
        return u * u * (c2 + c3 * u)

    def nonlinear_derivative(self, u):
        _, _, c2, c3 = self.cubic
        return u * (2.0 * c2 + 3.0 * c3 * u)

    def reactions(self, values):
        """All reaction terms at pointwise values ``(u, y_1, ...)``."""
        u = values[0]
        out = [self.activator_polynomial(u)
               + sum(a * y for a, y in zip(self.act_coupling, values[1:]))]
        for c, y in enumerate(values[1:]):
            out.append(self.inh_u[c] * u + self.inh_self[c] * y + self.inh_const[c])
        return out

    def potential(self, values):
        """Potential ``F`` with ``dF/du = f`` and ``dF/dy_c = -lambda_c g_c``."""
        c0, c1, c2, c3 = self.cubic
        u = values[0]
        F = u * (c0 + u * (c1 / 2 + u * (c2 / 3 + u * c3 / 4)))
        lam = self.energy_weights
        for c, y in enumerate(values[1:]):
            F = F + self.act_coupling[c] * u * y - lam[c + 1] * (
                self.inh_self[c] * y * y / 2 + self.inh_const[c] * y)
        return F

    def homogeneous_cubic(self):
        """Monic cubic in ``u`` whose roots are the homogeneous steady states
        (inhibitors eliminated), as ``(1, a2, a1, a0)``."""
        c0, c1, c2, c3 = self.cubic
        lin, const = c1, c0
        for a, b, g, e in zip(self.act_coupling, self.inh_u, self.inh_self, self.inh_const):
            if g == 0:
                raise DomainError("inhibitor without self-decay has no homogeneous elimination")
            # y = -(b u + e) / g
            lin += -a * b / g
            const += -a * e / g
        if c3 == 0:
            raise DomainError("activator kinetics are not cubic")
        return (1.0, c2 / c3, lin / c3, const / c3)

    def inhibitor_values(self, u):
        return [-(b * u + e) / g for b, g, e in zip(self.inh_u, self.inh_self, self.inh_const)]


@dataclass(frozen=True)
class TwoComponentModel:
    """Two-component FitzHugh-Nagumo kinetics.

    ``variant="A"``: ``f1 = u (u - beta)(1 - u)``, ``f2 = -v + kappa``,
    ``g1 = u``, ``g2 = -gamma v + eps``.
    ``variant="B"``: ``f1 = u - u^3``, ``f2 = kappa - v``, ``g1 = u``, ``g2 = -v``.
    """

    variant: str = "A"
    tau1: float = 1.0
    tau2: float = 1.0
    d1: float = 1.0
    d2: float = 1.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0
    eps: float = 0.0
    kappa: float = 0.0
    note: str = field(default="", compare=False)

    def __post_init__(self):
        if self.variant not in ("A", "B"):
            raise InvalidArgumentError(f"unknown variant {self.variant!r}")
        vals = (self.tau1, self.tau2, self.d1, self.d2, self.beta, self.gamma, self.eps, self.kappa)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError("model parameters must be finite")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise InvalidArgumentError("time scales must be positive")
        if self.d1 < 0 or self.d2 < 0:
            raise InvalidArgumentError("diffusion coefficients must be non-negative")
        if self.variant == "A" and self.gamma <= 0:
            raise InvalidArgumentError("gamma must be positive")

    def system(self) -> CoupledCubicSystem:
        if self.variant == "A":
            b = self.beta
            cubic = (self.kappa, -b, 1.0 + b, -1.0)
            inh = dict(inh_u=(1.0,), inh_self=(-self.gamma,), inh_const=(self.eps,))
        else:
            cubic = (self.kappa, 1.0, 0.0, -1.0)
            inh = dict(inh_u=(1.0,), inh_self=(-1.0,), inh_const=(0.0,))
        return CoupledCubicSystem(("u", "v"), (self.tau1, self.tau2), (self.d1, self.d2),
                                  cubic, act_coupling=(-1.0,), **inh)

    # derivatives used by the Turing analysis
    def f1_prime(self, u):
        if self.variant == "A":
            b = self.beta
            return -3 * u * u + 2 * (1 + b) * u - b
        return 1.0 - 3.0 * u * u

    @property
    def f2_prime(self):
        return -1.0

    @property
    def g1_prime(self):
        return 1.0

    @property
    def g2_prime(self):
        return -self.gamma if self.variant == "A" else -1.0


@dataclass(frozen=True)
class ThreeComponentModel:
    """Singularly perturbed three-component system

        u_t       = u_xx + u - u^3 - eps (alpha v + beta s + gamma)
        tau v_t   = eps^-2 v_xx + u - v
        theta s_t = d^2 eps^-2 s_xx + u - s
    """

    eps: float = 0.01
    alpha: float = 3.0
    beta: float = 1.0
    gamma: float = -0.25
    d: float = 5.0
    tau: float = 100.0 / 3.0
    theta: float = 100.0

    def __post_init__(self):
        vals = (self.eps, self.alpha, self.beta, self.gamma, self.d, self.tau, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError("model parameters must be finite")
        if not 0 < self.eps < 0.5:
            raise InvalidArgumentError("eps must lie in (0, 0.5)")
        if self.tau <= 0 or self.theta <= 0:
            raise InvalidArgumentError("time scales must be positive")
        if self.d <= 1:
            raise InvalidArgumentError("d must exceed 1")

    def system(self) -> CoupledCubicSystem:
        e = self.eps
        return CoupledCubicSystem(
            ("u", "v", "s"), (1.0, self.tau, self.theta),
            (1.0, 1.0 / e**2, self.d**2 / e**2),
            (-e * self.gamma, 1.0, 0.0, -1.0),
            act_coupling=(-e * self.alpha, -e * self.beta),
            inh_u=(1.0, 1.0), inh_self=(-1.0, -1.0), inh_const=(0.0, 0.0))


def as_system(model) -> CoupledCubicSystem:
    if isinstance(model, CoupledCubicSystem):
        return model
    return model.system()


@dataclass(frozen=True)
class SteadyState:
    values: tuple
    stability: str = "unclassified"
    residual: float = 0.0

    @property
    def u(self):
        return self.values[0]

    @property
    def v(self):
        return self.values[1]


# ---------------------------------------------------------------------------

def eval_potential(model, u, v, *rest):
    """Potential ``F(u, v[, s])`` whose ``u``-derivative is the activator
    reaction and whose ``v``-derivative is minus the inhibitor reaction
    (scaled by the coupling ratio)."""
    return as_system(model).potential((u, v) + tuple(rest))


def check_skew_gradient(model, tol: float = 1e-12):
    """Return ``(holds, residual)`` for the skew-gradient condition.

    Two components: ``d(f/tau1)/dv = -d(g/tau2)/du``. Three components:
    ``eps alpha / tau = 1 / theta`` and ``eps beta / tau = 1 / theta``.
    """
    if isinstance(model, ThreeComponentModel):
        e, t, th = model.eps, model.tau, model.theta
        residual = max(abs(e * model.alpha / t - 1 / th), abs(e * model.beta / t - 1 / th))
    else:
        sysm = as_system(model)
        residual = 0.0
        for c, (a, b) in enumerate(zip(sysm.act_coupling, sysm.inh_u)):
            residual = max(residual, abs(a / sysm.tau[0] + b / sysm.tau[c + 1]))
    return residual < tol, residual


def _turning_point_discriminant(model):
    _, a2, a1, _ = as_system(model).homogeneous_cubic()
    # derivative 3u^2 + 2 a2 u + a1
    return 4.0 * a2 * a2 - 12.0 * a1


def classify_stability(model, tol: float = 1e-12) -> str:
    """Bistable when the homogeneous steady-state cubic has two distinct
    turning points (its derivative has positive discriminant)."""
    if isinstance(model, TwoComponentModel) and model.variant == "A" and model.gamma <= 0:
        raise InvalidArgumentError("gamma must be positive")
    disc = _turning_point_discriminant(model)
    return BISTABLE if disc > tol else MONOSTABLE


def stability_discriminant(model) -> float:
    return _turning_point_discriminant(model)


def solve_cubic(a3, a2, a1, a0, polish: bool = True):
    """Real roots of ``a3 u^3 + a2 u^2 + a1 u + a0``, ascending.

    Trigonometric/Cardano closed form followed by a Newton polish step.
    Roots closer than ~1e-7 are merged.
    """
    if a3 == 0:
        raise InvalidArgumentError("leading coefficient must be non-zero")
    b, c, d = a2 / a3, a1 / a3, a0 / a3
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = max(1.0, abs(p) ** 3, q * q)
    if disc > 1e-14 * scale:
        sq = math.sqrt(disc)
        roots = [math.copysign(abs(-q / 2 + sq) ** (1 / 3), -q / 2 + sq)
                 + math.copysign(abs(-q / 2 - sq) ** (1 / 3), -q / 2 - sq)]
    elif p == 0:
        roots = [0.0]
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = min(1.0, max(-1.0, 3.0 * q / (p * r)))
        phi = math.acos(arg) / 3.0
        roots = [r * math.cos(phi - 2 * math.pi * k / 3) for k in range(3)]
    roots = sorted(t + shift for t in roots)

    def f(x):
        return ((x + b) * x + c) * x + d

    def fp(x):
        return (3 * x + 2 * b) * x + c

    out = []
    for x in roots:
        if polish:
            for _ in range(3):
                dfx = fp(x)
                if dfx == 0:
                    break
                step = f(x) / dfx
                x -= step
                if abs(step) < 1e-16 * max(1.0, abs(x)):
                    break
        if not out or abs(x - out[-1]) > 1e-7:
            out.append(x)
    return out


def count_homogeneous_roots(model) -> int:
    """Number of distinct real homogeneous steady states."""
    return len(solve_cubic(*as_system(model).homogeneous_cubic()))


def _homogeneous_residual(sysm, values):
    return max(abs(r) for r in sysm.reactions(values))


def find_steady_states(model, tol: float = 1e-10) -> list:
    """All spatially homogeneous steady states, ascending in ``u``."""
    sysm = as_system(model)
    states = []
    for u in solve_cubic(*sysm.homogeneous_cubic()):
        values = tuple([u] + sysm.inhibitor_values(u))
        res = _homogeneous_residual(sysm, values)
        if res >= tol:
            raise NumericalFailureError(f"steady state at u={u} has residual {res:.3e}")
        states.append(SteadyState(values, _local_stability(model, values), res))
    return states


def _local_stability(model, values):
    if not isinstance(model, TwoComponentModel):
        return "unclassified"
    a = model.f1_prime(values[0])
    trace = a / model.tau1 + model.g2_prime / model.tau2
    det = (a * model.g2_prime - model.f2_prime * model.g1_prime) / (model.tau1 * model.tau2)
    return "stable" if trace < 0 and det > 0 else "unstable"


@dataclass(frozen=True)
class TuringReport:
    f1u: float
    f2v: float
    g1u: float
    g2v: float
    lhs: tuple
    holds: tuple

    @property
    def turing_unstable(self) -> bool:
        return all(self.holds)


def check_turing(model: TwoComponentModel, steady: SteadyState, d1=None, d2=None) -> TuringReport:
    """Evaluate the four Turing inequalities at ``steady``.

    Reported left-hand values: ``a + e``, ``a e - b c``, ``d2 a + d1 e``
    and ``(d2 a + d1 e)^2 - 4 d1 d2 (a e - b c)``, where ``a = f1'``,
    ``b = f2'``, ``c = g1'``, ``e = g2'``. Conditions hold when the values
    are ``< 0, > 0, > 0, > 0`` respectively.
    """
    d1 = model.d1 if d1 is None else d1
    d2 = model.d2 if d2 is None else d2
    a = model.f1_prime(steady.values[0])
    b, c, e = model.f2_prime, model.g1_prime, model.g2_prime
    det = a * e - b * c
    mixed = d2 * a + d1 * e
    lhs = (a + e, det, mixed, mixed * mixed - 4 * d1 * d2 * det)
    holds = (lhs[0] < 0, lhs[1] > 0, lhs[2] > 0, lhs[3] > 0)
    return TuringReport(a, b, c, e, lhs, holds)


def turing_threshold(model: TwoComponentModel, steady: SteadyState):
    """Lower bounds on ``d2`` from the third and fourth Turing conditions."""
    a = model.f1_prime(steady.values[0])
    b, c, e = model.f2_prime, model.g1_prime, model.g2_prime
    det = a * e - b * c
    if not (a + e < 0 and det > 0):
        raise DomainError("steady state is not stable without diffusion; Turing analysis inapplicable")
    if a <= 0:
        raise DomainError("activator self-derivative must be positive for diffusion-driven instability")
    d1 = model.d1
    bound3 = -d1 * e / a
    # (a x + d1 e)^2 - 4 d1 det x = 0, larger root
    A = a * a
    B = 2 * a * d1 * e - 4 * d1 * det
    C = (d1 * e) ** 2
    disc = B * B - 4 * A * C
    bound4 = (-B + math.sqrt(max(disc, 0.0))) / (2 * A)
    return bound3, bound4
