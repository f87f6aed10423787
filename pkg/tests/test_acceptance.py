"""Acceptance criteria 1-14, one pass/fail line each.

Criteria that cannot be met as stated are implemented at their stated
tolerances and marked ``xfail``; the analysis lives in the decisions
ledger kept next to the package.
"""

import time

import numpy as np
import pytest

from skewrd.dgspace import DgSpace
from skewrd.diagnostics import EnergyRecorder, discrete_energy, energy_increment_residual
from skewrd.integrator import (AVFStepper, DenseOperators, NewtonConfig, State, TimeGrid, avf_step,
                               random_initial_state, run_simulation)
from skewrd.kinetics import TwoComponentModel, check_turing, classify_stability, find_steady_states, turing_threshold
from skewrd.mesh import build_interval_mesh, build_triangular_mesh
from skewrd.presets import build_grid, build_initial, build_model, build_space, preset_config
from skewrd.rom import compute_pod_basis, deim_reconstruct, deim_select, rom_compare

TURING = TwoComponentModel("B", d1=0.00028, d2=0.005, kappa=-0.05)


def _run_preset(name, keep_states=True, **time_overrides):
    cfg = preset_config(name)
    cfg["time"].update(time_overrides)
    space = build_space(cfg)
    model = build_model(cfg)
    grid = build_grid(cfg)
    rec = EnergyRecorder(space, model)
    states = []
    t0 = time.perf_counter()
    traj = run_simulation(space, model, grid, build_initial(cfg, space, 2),
                          [rec] + ([lambda n, s: states.append(s)] if keep_states else []))
    return space, model, grid, rec.trace, states, traj, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rom_runs():
    cfg = preset_config("rom-compare")
    model = build_model(cfg)
    grid = build_grid(cfg)
    rom = cfg["rom"]
    runs = []
    for n in rom["meshes"]:
        space = DgSpace(build_triangular_mesh((-1.0, 1.0), (-1.0, 1.0), n), 1)
        init = random_initial_state(space, 2, cfg["seed"])
        rep, det = rom_compare(space, model, grid, init, rom["k"], rom["m"], rom["stride"], rom["repeats"],
                               label=str(n))
        runs.append((space, rep, det))
    return runs


def test_criterion_01_bistability_threshold(criterion):
    def cls(g):
        return classify_stability(TwoComponentModel("A", beta=2 / 25, gamma=g, eps=0.7))

    t0 = time.perf_counter()
    lo, hi = 0.5, 20.0
    assert cls(lo) == "monostable" and cls(hi) == "bistable"
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if cls(mid) == "bistable" else (mid, hi)
    dt = time.perf_counter() - t0
    target = 7500 / 2316
    ok = abs(hi - target) < 1e-6 and dt < 1.0
    criterion(1, ok, f"flip at gamma={hi:.9f}, expected {target:.9f} ({dt:.3f}s)")


@pytest.mark.xfail(strict=True, reason="condition-4 root of the stated inequality is 0.0021378, not 0.002242")
def test_criterion_02_turing_thresholds(criterion):
    t0 = time.perf_counter()
    (st,) = find_steady_states(TURING)
    b3, b4 = turing_threshold(TURING, st)
    f1 = check_turing(TURING, st).f1u
    dt = time.perf_counter() - t0
    ok = abs(b3 - 0.000472) < 1e-6 and abs(b4 - 0.002242) < 1e-6 and abs(f1 - 0.592838) < 1e-6 and dt < 1
    criterion(2, ok, f"thresholds ({b3:.7f}, {b4:.7f}) vs (0.000472, 0.002242); f1'={f1:.7f} vs 0.592838")


def test_criterion_03_steady_state(criterion):
    (st,) = find_steady_states(TURING)
    u, v = st.values
    ok = (abs(u + 0.368403) < 1e-5 and abs(v + 0.368403) < 1e-5 and abs(u ** 3 + 0.05) < 1e-12
          and st.residual < 1e-10)
    criterion(3, ok, f"steady state ({u:.7f}, {v:.7f}), u0^3={u ** 3:.3e}")


def test_criterion_04_dof_accounting(criterion):
    got = {}
    for n in (8, 16, 32):
        mesh = build_triangular_mesh((-1, 1), (-1, 1), n)
        got[mesh.n_elements] = (DgSpace(mesh, 1).n_dofs, DgSpace(mesh, 2).n_dofs)
    want = {128: (384, 768), 512: (1536, 3072), 2048: (6144, 12288)}
    criterion(4, got == want, f"{got}")


def test_criterion_05_avf_order_and_midpoint(criterion):
    tight = NewtonConfig(abs_tol=1e-14, rel_tol=1e-14, max_iter=50)
    ops = DenseOperators([[[1.0]]], [[[0.0]]], [[[[1.0]]]], [None], lambda u: -u ** 3,
                         lambda u: np.diag(-3 * u ** 2))
    u0, T = 0.5, 1.0
    exact = u0 * np.exp(T) / np.sqrt(1 - u0 ** 2 + u0 ** 2 * np.exp(2 * T))
    errs = []
    for dt in (0.1, 0.05, 0.025):
        stepper = AVFStepper(ops, [1.0], dt, tight)
        s = State(0.0, [[u0]])
        for _ in range(int(round(T / dt))):
            s, _ = stepper.step(s)
        errs.append(abs(s.u[0] - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))

    rng = np.random.default_rng(5)
    n = 6
    M = np.eye(n) + 0.1 * np.diag(rng.uniform(size=n))
    S = rng.normal(size=(n, n))
    S = S @ S.T
    L = rng.normal(size=(n, n))
    lin = DenseOperators([M], [S], [[L]], [rng.normal(size=n)], lambda u: 0 * u, lambda u: np.zeros((n, n)))
    y0 = rng.normal(size=n)
    dt = 0.3
    y1 = avf_step(State(0.0, [y0]), dt, lin, tau=[1.0], newton_cfg=tight).u
    K = L - S
    mid = np.linalg.solve(M - dt / 2 * K, M @ y0 + dt / 2 * K @ y0 + dt * lin.const[0])
    gap = np.abs(y1 - mid).max()
    ok = bool(np.all((orders >= 1.9) & (orders <= 2.1))) and gap < 1e-12
    criterion(5, ok, f"observed orders {np.round(orders, 4).tolist()}, midpoint gap {gap:.2e}")


def test_criterion_06_gradient_flow_dissipation(criterion):
    space = DgSpace(build_interval_mesh(0.0, 10.0, 0.1), 1)
    assert space.n_elements == 100
    model = TwoComponentModel("B", d1=0.05, d2=0.1)
    init = random_initial_state(space, 2, 17)
    init.fields[1] = 0.0
    energies = []
    run_simulation(space, model, TimeGrid(0.0, 0.1, 200), init,
                   [lambda n, s: energies.append(discrete_energy(s, space, model))], frozen=(1,))
    inc = np.diff(energies)
    violations = int(np.count_nonzero(inc > 0))
    criterion(6, violations == 0 and len(inc) == 200,
              f"{violations} increases over {len(inc)} steps, E {energies[0]:.6f} -> {energies[-1]:.6f}")


def _zero_crossings(space, u):
    # the field is discontinuous, so sign changes may sit on a face
    vals = space.vertex_values(u).ravel()
    x = space.mesh.element_vertices()[:, :, 0].ravel()
    out = []
    for i in range(vals.size - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            out.append(x[i])
        elif a * b < 0:
            out.append(x[i] + (x[i + 1] - x[i]) * a / (a - b))
    return out


@pytest.mark.xfail(strict=True, reason="u relaxes to the single homogeneous state; the zero level set vanishes")
def test_criterion_07_traveling_front(criterion):
    space, model, grid, trace, states, _, wall = _run_preset("front")
    fronts = [_zero_crossings(space, s.u) for s in states]
    present = all(len(f) >= 1 for f in fronts)
    pos = np.array([f[0] if f else np.nan for f in fronts])
    d = np.diff(pos)
    monotone = present and (bool(np.all(d >= 0)) or bool(np.all(d <= 0)))
    E = np.asarray(trace.energies)
    drift = float(np.max(np.abs(E[-101:] - E[-1])) / abs(E[-1]))
    lost = next((n for n, f in enumerate(fronts) if not f), None)
    ok = monotone and drift < 0.01 and grid.steps == 200 and wall < 120
    criterion(7, ok, f"level set {'present' if present else f'lost at step {lost}'}, monotone={monotone}, "
                     f"energy drift {drift:.2e} of |E| ({wall:.1f}s)")


def test_criterion_08_pulse_energy_plateau(criterion):
    _, _, grid, trace, _, _, wall = _run_preset("pulse")
    E = np.asarray(trace.energies)
    start = grid.steps // 4
    dev = float(np.max(np.abs(E[start:] - E[-1])) / abs(E[-1]))
    criterion(8, dev < 0.02 and wall < 120, f"post-transient deviation {dev:.2e} of |E(T)| ({wall:.1f}s)")


def test_criterion_09_pod(criterion, rom_runs):
    worst = 0.0
    for space, _, det in rom_runs:
        M = space.mass()
        for b in det["bases"]:
            worst = max(worst, float(np.abs(b.psi.T @ (M @ b.psi) - np.eye(b.k)).max()))
    rng = np.random.default_rng(31)
    N, J, k = 20, 10, 4
    X = rng.normal(size=(N, N))
    Mm = X @ X.T + N * np.eye(N)
    U = rng.normal(size=(N, J))
    Lc = np.linalg.cholesky(Mm)

    def err(psi):
        R = U - psi @ (psi.T @ (Mm @ U))
        return float(np.sum(R * (Mm @ R)))

    best = err(compute_pod_basis(U, Mm, k).psi)
    beaten = sum(err(np.linalg.solve(Lc.T, np.linalg.qr(rng.normal(size=(N, k)))[0])) < best - 1e-9
                 for _ in range(2000))
    criterion(9, worst < 1e-10 and beaten == 0,
              f"max |Psi^T M Psi - I| = {worst:.2e}; random subspaces beating POD: {beaten}/2000")


def test_criterion_10_deim(criterion, rom_runs):
    def oracle(W):
        idx = [int(np.argmax(np.abs(W[:, 0])))]
        for i in range(1, W.shape[1]):
            c = np.linalg.inv(W[idx][:, :i]) @ W[idx, i]
            idx.append(int(np.argmax(np.abs(W[:, i] - W[:, :i] @ c))))
        return idx

    rng = np.random.default_rng(77)
    mismatches = 0
    for _ in range(100):
        W = np.linalg.qr(rng.normal(size=(50, 8)))[0]
        mismatches += list(deim_select(W)[0]) != oracle(W)
    space, _, det = rom_runs[0]
    deim = det["deim"]
    F = det["snapshots"].nonlinear
    gap = 0.0
    for j in range(0, F.shape[1], 25):
        rec = deim_reconstruct(deim, F[deim.indices, j])
        gap = max(gap, float(np.abs(rec[deim.indices] - F[deim.indices, j]).max()))
    criterion(10, mismatches == 0 and gap < 1e-11,
              f"{mismatches}/100 selections differ from the greedy oracle; interpolation gap {gap:.2e}")


def test_criterion_11_rom_accuracy(criterion, rom_runs):
    _, rep, _ = rom_runs[0]
    ok = rep.n_elements == 128 and rep.n_dofs == 384 and max(rep.err_deim) <= 0.1
    criterion(11, ok, f"mesh 128: POD-DEIM errors u={rep.err_deim[0]:.3e} v={rep.err_deim[1]:.3e}; "
                      f"POD u={rep.err_pod[0]:.3e} v={rep.err_pod[1]:.3e}")


@pytest.mark.xfail(strict=False, reason="full and POD online costs both scale linearly in N; the S_POD trend "
                                        "is decided by timing noise")
def test_criterion_12_speedup_trend(criterion, rom_runs):
    s_pod = [r.s_pod for _, r, _ in rom_runs]
    s_deim = [r.s_deim for _, r, _ in rom_runs]
    ok = (min(s_pod + s_deim) >= 1 and all(np.diff(s_pod) >= 0) and all(np.diff(s_deim) >= 0)
          and s_deim[-1] >= s_pod[-1])
    criterion(12, ok, "S_POD " + ", ".join(f"{s:.1f}" for s in s_pod)
              + "; S_DEIM " + ", ".join(f"{s:.1f}" for s in s_deim))


@pytest.mark.xfail(strict=True, reason="the AVF increment identity is exact; the residual is solver noise "
                                       "scaled by 1/dt and grows under refinement")
def test_criterion_13_energy_increment(criterion):
    worst = []
    for dt in (0.5, 0.25, 0.125):
        _, model, _, _, states, _, _ = _run_preset("front", dt=dt)
        space = build_space(preset_config("front"))
        worst.append(max(energy_increment_residual(a, b, dt, model, space)[2]
                         for a, b in zip(states[:-1], states[1:])))
    ok = worst[1] < worst[0] and worst[2] < worst[1]
    criterion(13, ok, "max residual for dt 0.5, 0.25, 0.125: " + ", ".join(f"{w:.2e}" for w in worst))


def test_criterion_14_newton_economy(criterion):
    _, _, grid, _, _, traj, wall = _run_preset("labyrinth", keep_states=False)
    its = np.asarray(traj.newton_iterations)
    frac = float(np.mean(its <= 2))
    criterion(14, frac >= 0.95 and grid.dt == 0.1 and wall < 600,
              f"{100 * frac:.1f}% of {its.size} steps in <= 2 Newton iterations, max {its.max()} ({wall:.0f}s)")
