import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewrd.diagnostics import discrete_energy
from skewrd.dgspace import DgSpace
from skewrd.errors import InvalidArgumentError, LinearSolverError, StepFailureError
from skewrd.integrator import (AVFStepper, DenseOperators, FullOrderOperators, NewtonConfig, State, TimeGrid,
                               avf_average, avf_step, initial_state, newton_solve, random_initial_state,
                               run_simulation)
from skewrd.kinetics import TwoComponentModel, ThreeComponentModel
from skewrd.mesh import build_interval_mesh, build_triangular_mesh

TIGHT = NewtonConfig(abs_tol=1e-14, rel_tol=1e-14, max_iter=50)


def _logistic_ops():
    # u' = u - u^3 as a one-component system
    return DenseOperators([[[1.0]]], [[[0.0]]], [[[[1.0]]]], [None],
                          lambda u: -u ** 3, lambda u: np.diag(-3 * u ** 2))


def _logistic_exact(u0, t):
    return u0 * np.exp(t) / np.sqrt(1 - u0 ** 2 + u0 ** 2 * np.exp(2 * t))


def test_avf_average_examples(rng):
    assert avf_average(lambda y: y ** 3, 0.0, 1.0) == pytest.approx(0.25, abs=1e-15)
    a, b = rng.normal(size=5), rng.normal(size=5)
    assert np.allclose(avf_average(lambda y: 2 * y - 1, a, b), 2 * (a + b) / 2 - 1, atol=1e-14)
    # composite midpoint oracle in xi, Richardson-corrected for its h^2 term
    f = lambda y: y - y ** 3  # noqa: E731

    def midpoint(y0, y1, n):
        xi = (np.arange(n) + 0.5) / n
        return np.mean(f(y0 + xi * (y1 - y0)))

    for _ in range(5):
        y0, y1 = rng.normal(size=2)
        ref = (4 * midpoint(y0, y1, 20_000) - midpoint(y0, y1, 10_000)) / 3
        assert avf_average(f, y0, y1) == pytest.approx(ref, abs=1e-12)


def test_avf_average_exact_cubic_polynomial(rng):
    # exact antiderivative oracle
    c = rng.normal(size=4)
    f = lambda y: c[0] + c[1] * y + c[2] * y ** 2 + c[3] * y ** 3  # noqa: E731
    F = lambda y: c[0] * y + c[1] * y ** 2 / 2 + c[2] * y ** 3 / 3 + c[3] * y ** 4 / 4  # noqa: E731
    y0, y1 = 0.3, -1.7
    assert avf_average(f, y0, y1) == pytest.approx((F(y1) - F(y0)) / (y1 - y0), rel=1e-13)


def test_newton_linear_spd(rng):
    X = rng.normal(size=(6, 6))
    A = X @ X.T + 6 * np.eye(6)
    b = rng.normal(size=6)
    res = newton_solve(lambda x: A @ x - b, lambda x: A, np.zeros(6))
    assert res.iterations == 1
    assert np.allclose(A @ res.x, b, atol=1e-10)


def test_newton_cubic_root():
    cfg = NewtonConfig(abs_tol=1e-13, rel_tol=1e-16)
    res = newton_solve(lambda x: x ** 3 - 8, lambda x: np.array([[3 * x[0] ** 2]]), 3.0, cfg)
    assert abs(res.x - 2.0) < 1e-12
    assert res.iterations <= 8


def test_newton_zero_jacobian():
    with pytest.raises(LinearSolverError):
        newton_solve(lambda x: x - 1.0, lambda x: np.zeros((1, 1)), np.array([0.0]))


def test_newton_max_iterations():
    with pytest.raises(StepFailureError):
        newton_solve(lambda x: x ** 3 - 8, lambda x: np.array([[3 * x[0] ** 2]]), 30.0,
                     NewtonConfig(max_iter=2))


def test_newton_config_validation():
    with pytest.raises(InvalidArgumentError):
        NewtonConfig(abs_tol=0.0)
    with pytest.raises(InvalidArgumentError):
        NewtonConfig(max_iter=0)
    with pytest.raises(InvalidArgumentError):
        NewtonConfig(linear_solver="cg")


def test_time_grid():
    g = TimeGrid.until(100.0, 0.5)
    assert g.steps == 200 and g.T == 100.0
    with pytest.raises(InvalidArgumentError):
        TimeGrid(0.0, 0.0, 1)
    with pytest.raises(InvalidArgumentError):
        TimeGrid(0.0, 0.1, -1)


def test_state_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        State(0.0, [[np.nan, 0.0]])


def test_zero_reaction_constant_preserved(line_space):
    ops = DenseOperators([line_space.mass().toarray()], [line_space.stiffness(1.0).toarray()],
                         [[None]], [None], lambda u: 0 * u, lambda u: np.zeros((u.size, u.size)))
    u0 = line_space.constant(0.7)
    s1 = avf_step(State(0.0, [u0]), 0.3, ops, tau=[2.0])
    assert np.allclose(s1.u, u0, atol=1e-14)


@pytest.mark.parametrize("lam,dt", [(1.0, 0.1), (5.0, 0.5), (0.2, 2.0)])
def test_scalar_linear_is_midpoint(lam, dt):
    ops = DenseOperators([[[1.0]]], [[[lam]]], [[None]], [None], lambda u: 0 * u, lambda u: np.zeros((1, 1)))
    s1 = avf_step(State(0.0, [[1.3]]), dt, ops, tau=[1.0])
    assert s1.u[0] == pytest.approx((1 - lam * dt / 2) / (1 + lam * dt / 2) * 1.3, rel=1e-14)


def test_linear_system_equals_midpoint(rng):
    n = 5
    sym = lambda X: X @ X.T + n * np.eye(n)  # noqa: E731
    M = [sym(rng.normal(size=(n, n))) for _ in range(2)]
    S = [sym(rng.normal(size=(n, n))) for _ in range(2)]
    L = [[rng.normal(size=(n, n)) for _ in range(2)] for _ in range(2)]
    c = [rng.normal(size=n), rng.normal(size=n)]
    tau = [1.5, 0.7]
    dt = 0.2
    ops = DenseOperators(M, S, L, c, lambda u: 0 * u, lambda u: np.zeros((n, n)))
    y0 = rng.normal(size=(2, n))
    s1 = avf_step(State(0.0, y0), dt, ops, tau=tau, newton_cfg=TIGHT)
    # implicit midpoint: T (y1 - y0) = dt f((y0 + y1) / 2)
    Tm = np.block([[tau[0] * M[0], np.zeros((n, n))], [np.zeros((n, n)), tau[1] * M[1]]])
    K = np.block([[L[0][0] - S[0], L[0][1]], [L[1][0], L[1][1] - S[1]]])
    b = np.concatenate(c)
    y0f = y0.ravel()
    y1 = np.linalg.solve(Tm - dt / 2 * K, Tm @ y0f + dt / 2 * K @ y0f + dt * b)
    assert np.abs(s1.fields.ravel() - y1).max() < 1e-12


def test_second_order_convergence():
    ops = _logistic_ops()
    T, u0 = 1.0, 0.5
    errs = []
    for dt in (0.1, 0.05, 0.025):
        stepper = AVFStepper(ops, [1.0], dt, TIGHT)
        s = State(0.0, [[u0]])
        for _ in range(int(round(T / dt))):
            s, _ = stepper.step(s)
        errs.append(abs(s.u[0] - _logistic_exact(u0, T)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders >= 1.9) & (orders <= 2.1))


def test_one_step_error_is_small():
    s = avf_step(State(0.0, [[0.5]]), 0.1, _logistic_ops(), tau=[1.0], newton_cfg=TIGHT)
    assert abs(s.u[0] - _logistic_exact(0.5, 0.1)) < 1e-4


def test_four_point_xi_rule_matches_two_point():
    space = DgSpace(build_interval_mesh(-10, 10, 0.5), 2)
    model = TwoComponentModel("A", tau2=12.5, d2=1.25, beta=1 / 3, gamma=8, eps=0.7)
    ops = FullOrderOperators(space, model)
    s0 = initial_state(space, [lambda x: np.tanh(x[..., 0]), lambda x: 1 - np.tanh(x[..., 0])])
    a = AVFStepper(ops, [1.0, 12.5], 0.5, TIGHT, gauss_points=2)
    b = AVFStepper(ops, [1.0, 12.5], 0.5, TIGHT, gauss_points=4)
    x0 = s0.fields.ravel()
    x1 = a.step(s0)[0].fields.ravel()
    # same state, residuals agree to rounding
    assert np.abs(a.residual(x1, x0) - b.residual(x1, x0)).max() < 1e-13
    y1 = b.step(s0)[0].fields.ravel()
    assert np.abs(x1 - y1).max() < 1e-13


def test_zero_steps_returns_initial(line_space):
    model = TwoComponentModel("B", d1=0.01, d2=0.1)
    init = random_initial_state(line_space, 2, seed=3)
    traj = run_simulation(line_space, model, TimeGrid(0.0, 0.1, 0), init)
    assert np.array_equal(traj.final.fields, init.fields)
    assert traj.newton_iterations == []


def test_run_simulation_observers_and_times(line_space):
    model = TwoComponentModel("B", d1=0.01, d2=0.1)
    seen = []
    traj = run_simulation(line_space, model, TimeGrid(0.0, 0.1, 5), random_initial_state(line_space, 2, 1),
                          [lambda n, s: seen.append((n, s.t))])
    assert [n for n, _ in seen] == list(range(6))
    assert traj.times == pytest.approx([0.1 * n for n in range(6)])
    assert len(traj.newton_iterations) == 5


def test_component_mismatch(line_space):
    with pytest.raises(InvalidArgumentError):
        run_simulation(line_space, TwoComponentModel("B"), TimeGrid(0.0, 0.1, 1),
                       random_initial_state(line_space, 3, 0))


def test_random_initial_state_is_seeded(tri_space):
    a = random_initial_state(tri_space, 2, 42)
    b = random_initial_state(tri_space, 2, 42)
    c = random_initial_state(tri_space, 2, 43)
    assert np.array_equal(a.fields, b.fields)
    assert not np.array_equal(a.fields, c.fields)
    means = a.fields[0].reshape(tri_space.n_elements, -1)
    # only the element-mean mode is populated
    assert np.all(means[:, 1:] == 0.0)


def test_gradient_flow_dissipation():
    space = DgSpace(build_interval_mesh(0.0, 10.0, 0.1), 1)
    model = TwoComponentModel("B", d1=0.05, d2=0.1)
    init = random_initial_state(space, 2, 5)
    init.fields[1] = 0.0
    energies = []
    run_simulation(space, model, TimeGrid(0.0, 0.1, 50), init,
                   [lambda n, s: energies.append(discrete_energy(s, space, model))], frozen=(1,))
    assert np.all(np.diff(energies) <= 0.0)


def test_gmres_matches_direct():
    space = DgSpace(build_triangular_mesh((-1, 1), (-1, 1), 4), 1)
    model = TwoComponentModel("B", d1=0.00028, d2=0.005)
    init = random_initial_state(space, 2, 0)
    grid = TimeGrid(0.0, 0.1, 5)
    a = run_simulation(space, model, grid, init, newton_cfg=NewtonConfig(linear_solver="direct"))
    b = run_simulation(space, model, grid, init, newton_cfg=NewtonConfig(linear_solver="gmres"))
    assert np.abs(a.final.fields - b.final.fields).max() < 1e-9


def test_step_failure_reports_step(line_space):
    model = TwoComponentModel("B", d1=0.01, d2=0.1)
    init = random_initial_state(line_space, 2, 0)
    init.fields[0] *= 1e3
    with pytest.raises(StepFailureError) as info:
        run_simulation(line_space, model, TimeGrid(0.0, 10.0, 3), init, newton_cfg=NewtonConfig(max_iter=1))
    assert info.value.step == 1


@settings(max_examples=25, deadline=None)
@given(u0=st.floats(-1.5, 1.5), dt=st.floats(0.01, 1.0))
def test_scalar_avf_energy_identity(u0, dt):
    # gradient flow u' = -V'(u), V = u^4/4 - u^2/2: V(u1) - V(u0) = -(u1 - u0)^2 / dt
    s1 = avf_step(State(0.0, [[u0]]), dt, _logistic_ops(), tau=[1.0], newton_cfg=TIGHT)
    V = lambda u: u ** 4 / 4 - u ** 2 / 2  # noqa: E731
    u1 = s1.u[0]
    assert V(u1) - V(u0) == pytest.approx(-(u1 - u0) ** 2 / dt, abs=1e-12)


@pytest.mark.slow
def test_one_pulse_keeps_single_plateau():
    from skewrd.presets import build_grid, build_initial, build_model, build_space, preset_config
    cfg = preset_config("one-pulse")
    space = build_space(cfg)
    model = build_model(cfg)
    traj = run_simulation(space, model, build_grid(cfg), build_initial(cfg, space, 3))
    pos = space.vertex_values(traj.final.u).mean(axis=1) > 0
    runs = np.count_nonzero(np.diff(pos.astype(int)) == 1) + int(pos[0])
    assert isinstance(model, ThreeComponentModel)
    assert runs == 1


def test_fused_avf_average_matches_generic(any_space, rng):
    model = TwoComponentModel("A", beta=0.2, gamma=2.0, eps=0.1)
    ops = FullOrderOperators(any_space, model)
    u0, u1 = rng.normal(size=(2, any_space.n_dofs))
    from skewrd.quadrature import gauss_interval
    xi, w = gauss_interval(2)
    ref = avf_average(ops.nonlinear, u0, u1)
    assert np.allclose(ops.nonlinear_avf(u0, u1, xi, w), ref, atol=1e-13)
    refJ = sum(wg * xg * ops.nonlinear_jacobian(u0 + xg * (u1 - u0)) for xg, wg in zip(xi, w))
    assert abs(ops.jacobian_avf(u0, u1, xi, w) - refJ).max() < 1e-13
