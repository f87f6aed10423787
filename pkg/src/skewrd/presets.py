"""Named experiment configurations and their resolution into objects.

A configuration is a nested dict (usually loaded from YAML)::

    mesh:    {kind: interval, a, b, dx} | {kind: square, x: [x0, x1], y: [y0, y1], n}
    space:   {degree, sigma}
    model:   {type: two, variant, tau1, tau2, d1, d2, beta, gamma, eps, kappa}
             | {type: three, eps, alpha, beta, gamma, d, tau, theta}
    time:    {dt, T}
    initial: {kind: expr, fields: [...]} | {kind: random}
             | {kind: plateau, intervals: [[a, b], ...], inside, outside, rest}
    seed, output: {every}, rom: {k, m, stride, meshes, T, repeats}
"""

from __future__ import annotations

import copy

import numpy as np

from .dgspace import DgSpace
from .errors import InvalidArgumentError
from .integrator import TimeGrid, initial_state, random_initial_state
from .kinetics import ThreeComponentModel, TwoComponentModel
from .mesh import build_interval_mesh, build_triangular_mesh

__all__ = ["PRESETS", "preset_config", "merge_config", "build_mesh", "build_space", "build_model",
           "build_grid", "build_initial", "evaluate_expression"]

_TURING = dict(type="two", variant="B", tau1=1.0, tau2=1.0, d1=0.00028, d2=0.005)
_SQUARE = dict(kind="square", x=[-1.0, 1.0], y=[-1.0, 1.0], n=32)
_THREE_MESH = dict(kind="interval", a=-1000.0, b=1000.0, dx=0.5)

PRESETS = {
    "front": dict(
        description="Traveling front, variant A kinetics. The single time scale 12.5 is "
                    "applied to the inhibitor (tau1 = 1, tau2 = 12.5).",
        mesh=dict(kind="interval", a=-60.0, b=60.0, dx=0.1),
        model=dict(type="two", variant="A", tau1=1.0, tau2=12.5, d1=1.0, d2=1.25,
                   beta=1.0 / 3.0, gamma=8.0, eps=0.7),
        time=dict(dt=0.5, T=100.0),
        initial=dict(kind="expr", fields=["tanh(x)", "1 - tanh(x)"]),
    ),
    "pulse": dict(
        description="Traveling pulse, variant A kinetics with gamma = 0.8 (monostable); "
                    "tau1 = 1, tau2 = 12.5.",
        mesh=dict(kind="interval", a=-60.0, b=60.0, dx=0.1),
        model=dict(type="two", variant="A", tau1=1.0, tau2=12.5, d1=1.0, d2=1.25,
                   beta=1.0 / 3.0, gamma=0.8, eps=0.7),
        time=dict(dt=0.1, T=100.0),
        initial=dict(kind="expr", fields=["tanh(x)", "-0.6"]),
    ),
    "one-pulse": dict(
        description="Three-component system, one plateau on [-50, 50].",
        mesh=_THREE_MESH,
        model=dict(type="three", eps=0.01, alpha=3.0, beta=1.0, gamma=-0.25, d=5.0,
                   tau=100.0 / 3.0, theta=100.0),
        time=dict(dt=0.5, T=200.0),
        initial=dict(kind="plateau", intervals=[[-50.0, 50.0]], inside=1.0, outside=-1.0, rest=0.0),
    ),
    "two-pulse": dict(
        description="Three-component system, plateaus on [-350, -150] and [150, 350].",
        mesh=_THREE_MESH,
        model=dict(type="three", eps=0.01, alpha=3.0, beta=1.0, gamma=-0.25, d=5.0,
                   tau=100.0 / 3.0, theta=100.0),
        time=dict(dt=0.5, T=100.0),
        initial=dict(kind="plateau", intervals=[[-350.0, -150.0], [150.0, 350.0]], inside=1.0,
                     outside=-1.0, rest=0.0),
    ),
    "multi-pulse": dict(
        description="Three-component system in skew-gradient form. The plateau of the "
                    "initial datum is taken as [-50, 50] (the degenerate interval [50, 50] "
                    "is read by analogy with the one-pulse case).",
        mesh=_THREE_MESH,
        model=dict(type="three", eps=0.01, alpha=100.0, beta=100.0, gamma=-0.25, d=5.0,
                   tau=1.0, theta=1.0),
        time=dict(dt=0.5, T=200.0),
        initial=dict(kind="plateau", intervals=[[-50.0, 50.0]], inside=0.0, outside=-1.0, rest=0.0),
    ),
    "spots": dict(
        description="Turing spots, variant B kinetics with kappa = -0.05.",
        mesh=_SQUARE,
        model=dict(_TURING, kappa=-0.05),
        time=dict(dt=0.1, T=200.0),
        initial=dict(kind="random"),
    ),
    "labyrinth": dict(
        description="Turing labyrinth, variant B kinetics with kappa = 0.",
        mesh=_SQUARE,
        model=dict(_TURING, kappa=0.0),
        time=dict(dt=0.1, T=200.0),
        initial=dict(kind="random"),
    ),
    "rom-compare": dict(
        description="Full model against POD and POD-DEIM on the labyrinth problem.",
        mesh=dict(_SQUARE, n=8),
        model=dict(_TURING, kappa=0.0),
        time=dict(dt=0.1, T=50.0),
        initial=dict(kind="random"),
        rom=dict(k=10, m=50, stride=1, meshes=[8, 16, 32], repeats=3),
    ),
}

DEFAULTS = dict(space=dict(degree=1, sigma=None), seed=0, output=dict(every=None),
                rom=dict(k=10, m=50, stride=1, meshes=None, repeats=3,
                         nonlinear_snapshots="full"))


def merge_config(base: dict, override: dict) -> dict:
    """Recursive dict merge, ``override`` wins."""
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def preset_config(name: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if name is None:
        return cfg
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = merge_config(cfg, PRESETS[name])
    cfg["preset"] = name
    return cfg


def _section(cfg, key):
    if key not in cfg or not isinstance(cfg[key], dict):
        raise InvalidArgumentError(f"configuration lacks a '{key}' section")
    return cfg[key]


def build_mesh(cfg: dict):
    m = _section(cfg, "mesh")
    kind = m.get("kind")
    if kind == "interval":
        return build_interval_mesh(float(m["a"]), float(m["b"]), float(m["dx"]))
    if kind == "square":
        return build_triangular_mesh(tuple(m["x"]), tuple(m["y"]), int(m["n"]))
    raise InvalidArgumentError(f"unknown mesh kind {kind!r}")


def build_space(cfg: dict, mesh=None) -> DgSpace:
    s = cfg.get("space", {})
    sigma = s.get("sigma")
    return DgSpace(mesh if mesh is not None else build_mesh(cfg), int(s.get("degree", 1)),
                   None if sigma is None else float(sigma))


def build_model(cfg: dict):
    m = dict(_section(cfg, "model"))
    kind = m.pop("type", "two")
    try:
        if kind == "two":
            return TwoComponentModel(**m)
        if kind == "three":
            return ThreeComponentModel(**m)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad model parameters: {exc}") from exc
    raise InvalidArgumentError(f"unknown model type {kind!r}")


def build_grid(cfg: dict) -> TimeGrid:
    t = _section(cfg, "time")
    dt = float(t["dt"])
    if "steps" in t:
        return TimeGrid(float(t.get("t0", 0.0)), dt, int(t["steps"]))
    return TimeGrid.until(float(t["T"]), dt, float(t.get("t0", 0.0)))


_NAMESPACE = {name: getattr(np, name) for name in
              ("sin", "cos", "tan", "tanh", "sinh", "cosh", "exp", "log", "sqrt", "abs", "pi", "where")}


def evaluate_expression(expr: str, x: np.ndarray) -> np.ndarray:
    """Evaluate an initial-condition expression in ``x`` (and ``y`` in 2D)
    with a small numpy namespace."""
    env = dict(_NAMESPACE, x=x[..., 0])
    if x.shape[-1] > 1:
        env["y"] = x[..., 1]
    try:
        val = eval(compile(expr, "<initial>", "eval"), {"__builtins__": {}}, env)
    except Exception as exc:
        raise InvalidArgumentError(f"cannot evaluate initial expression {expr!r}: {exc}") from exc
    return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1])


def build_initial(cfg: dict, space: DgSpace, n_components: int):
    init = _section(cfg, "initial")
    kind = init.get("kind")
    if kind == "random":
        return random_initial_state(space, n_components, int(cfg.get("seed", 0)))
    if kind == "expr":
        exprs = list(init["fields"])
        if len(exprs) != n_components:
            raise InvalidArgumentError(f"need {n_components} initial expressions, got {len(exprs)}")
        return initial_state(space, [(lambda x, e=e: evaluate_expression(str(e), x)) for e in exprs])
    if kind == "plateau":
        intervals = np.asarray(init["intervals"], dtype=float).reshape(-1, 2)
        inside, outside = float(init.get("inside", 1.0)), float(init.get("outside", -1.0))
        xc = space.mesh.centroids()[:, 0]
        mask = np.zeros(space.n_elements, dtype=bool)
        for a, b in intervals:
            mask |= (xc >= a) & (xc <= b)
        u = space.from_element_values(np.where(mask, inside, outside))
        rest = [space.constant(float(init.get("rest", 0.0)))] * (n_components - 1)
        return initial_state(space, [u] + rest)
    raise InvalidArgumentError(f"unknown initial condition kind {kind!r}")
