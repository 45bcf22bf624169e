import math

import numpy as np
import pytest

from ldpwave import (
    ControlPath,
    EquilibriumSet,
    MAMOptions,
    MAMResult,
    ModelConfig,
    NoiseSpec,
    State,
    action_gradient,
    action_J,
    fact_double_well,
    fact_polynomial,
    feedback_control,
    find_equilibria,
    flow_controlled,
    heteroclinic_scan,
    quasipotential,
    quasipotential_avoiding,
    quasipotential_from_attractor,
    quasipotential_matrix,
    rate_function_table,
)
from ldpwave.action import action_objective

# V(0, (a, v)) = gamma (lambda a^2 + v^2) / b^2 for the single damped mode.
LINEAR_V = 0.5


@pytest.fixture(scope="module")
def linear() -> ModelConfig:
    return ModelConfig(0.5, fact_polynomial([0.0]), basis=1, noise=NoiseSpec([1.0]))


@pytest.fixture(scope="module")
def oracle_opts() -> MAMOptions:
    return MAMOptions(dt=0.1, T_schedule=(20.0,), eta_schedule=(0.1, 0.03, 0.01), restarts=("zero",))


@pytest.fixture(scope="module")
def cheap_opts() -> MAMOptions:
    return MAMOptions(
        dt=0.1, T_schedule=(20.0,), eta_schedule=(0.1,), sigma_schedule=(1.0, 0.01), max_iter=100, restarts=("zero",)
    )


@pytest.fixture(scope="module")
def linear_result(linear, oracle_opts) -> MAMResult:
    return quasipotential(State.zeros(1), State.at_rest([1.0]), linear, oracle_opts)


def test_options_defaults(linear):
    opts = MAMOptions()
    assert len(opts.eta_schedule) == 5
    assert opts.eta_schedule[0] == pytest.approx(0.2)
    assert opts.eta_schedule[-1] == pytest.approx(0.01)
    assert opts.horizons(linear) == pytest.approx((40.0, 100.0, 200.0, 400.0))
    assert MAMOptions.from_dict(opts.to_dict()) == opts


@pytest.mark.parametrize(
    "kwargs",
    [
        {"eta_schedule": (0.01, 0.1)},
        {"eta_schedule": (0.1, 0.0)},
        {"eta_min": 0.5, "eta_max": 0.1},
        {"restarts": ("random",)},
    ],
    ids=["ascending", "zero", "min_max", "restart"],
)
def test_options_nok(kwargs):
    with pytest.raises(ValueError):
        MAMOptions(**kwargs)


def test_quasipotential_linear_oracle(linear, linear_result):
    res = linear_result
    assert res.feasible
    assert res.eta == pytest.approx(0.01)
    assert res.value == pytest.approx(LINEAR_V, rel=0.05)
    assert res.reference_value == res.value
    assert res.value == pytest.approx(action_J(res.path, linear.noise))


def test_quasipotential_endpoint(linear, linear_result):
    res = linear_result
    traj = flow_controlled(State.zeros(1), res.path, linear)
    gap = linear.distance(traj.final, State.at_rest([1.0]))
    assert gap == pytest.approx(res.endpoint_gap)
    assert gap <= res.eta * 1.25


def test_quasipotential_curve(linear_result):
    etas = [eta for eta, _ in linear_result.curve]
    values = [value for _, value in linear_result.curve]
    assert etas == sorted(etas)
    assert all(v1 >= v2 for v1, v2 in zip(values, values[1:]))
    assert len(linear_result.log) == 3


def test_result_to_dict():
    res = MAMResult(math.inf, ControlPath.zeros(1, 0.1, 1), 0.7, 0.01, False, 20.0, "zero", ((0.01, math.inf),))
    data = res.to_dict()
    assert data["value"] == "inf"
    assert data["reference_value"] == "inf"
    assert data["curve"] == [[0.01, "inf"]]


def test_quasipotential_identity(linear):
    res = quasipotential(State.at_rest([0.3]), State.at_rest([0.3]), linear)
    assert res.value == 0
    assert res.restart == "identity"
    assert res.feasible


def test_quasipotential_downhill():
    cfg = ModelConfig(0.2, fact_double_well(2.5), basis=8)
    u_hat = find_equilibria(cfg)[2].state
    start = u_hat + State.at_rest(np.full(8, 0.02))
    res = quasipotential(start, u_hat, cfg, MAMOptions(T_schedule=(100.0,)))
    assert res.value == 0
    assert res.restart == "downhill"
    assert res.endpoint_gap <= 0.01
    assert res.path.n_steps * res.path.dt == pytest.approx(res.T)


@pytest.mark.parametrize(
    ("n_modes", "n_control", "n_directions"), [(4, 2, 5), (4, 4, 5), (8, 4, 20), (8, 8, 20)]
)
def test_gradient_finite_differences(n_modes, n_control, n_directions):
    cfg = ModelConfig(0.3, fact_double_well(2.5), basis=n_modes)
    rng = np.random.default_rng(0)
    phi = ControlPath(0.3 * rng.standard_normal((20, n_control)), 0.1)
    u1 = State(0.2 * rng.standard_normal(n_modes), 0.2 * rng.standard_normal(n_modes))
    position = np.zeros(n_modes)
    position[:2] = [1.0, 0.2]
    target = State.at_rest(position)
    grad = np.array(action_gradient(phi, u1, target, 0.05, 0.1, cfg).coeffs)
    assert grad.shape == (20, n_control)
    h = 1e-6
    for _ in range(n_directions):
        d = rng.standard_normal(grad.shape)
        plus = action_objective(phi.with_coeffs(np.array(phi.coeffs) + h * d), u1, target, 0.05, 0.1, cfg)
        minus = action_objective(phi.with_coeffs(np.array(phi.coeffs) - h * d), u1, target, 0.05, 0.1, cfg)
        assert (plus - minus) / (2 * h) == pytest.approx(np.sum(grad * d), rel=1e-5)


def test_gradient_linear(linear):
    rng = np.random.default_rng(1)
    phi = ControlPath(rng.standard_normal((30, 1)), 0.1)
    target = State.at_rest([20.0])
    grad = np.array(action_gradient(phi, State.zeros(1), target, 0.1, 0.5, linear).coeffs)
    h = 1e-6
    for k in (0, 10, 29):
        e = np.zeros_like(grad)
        e[k, 0] = h
        plus = action_objective(phi.with_coeffs(np.array(phi.coeffs) + e), State.zeros(1), target, 0.1, 0.5, linear)
        minus = action_objective(phi.with_coeffs(np.array(phi.coeffs) - e), State.zeros(1), target, 0.1, 0.5, linear)
        assert (plus - minus) / (2 * h) == pytest.approx(grad[k, 0], rel=1e-6, abs=1e-9)


def test_avoiding_nok(linear, cheap_opts):
    start, target = State.zeros(1), State.at_rest([1.0])
    with pytest.raises(ValueError):
        quasipotential_avoiding(start, target, [State.at_rest([0.05])], 0.1, linear, cheap_opts)
    with pytest.raises(ValueError):
        quasipotential_avoiding(start, target, [State.at_rest([-1.0])], 0.0, linear, cheap_opts)


def test_avoiding_far_ball(linear, cheap_opts):
    start, target = State.zeros(1), State.at_rest([1.0])
    free = quasipotential(start, target, linear, cheap_opts)
    res = quasipotential_avoiding(start, target, [State.at_rest([-3.0])], 0.1, linear, cheap_opts)
    assert res.value == free.value
    assert res.min_clearance > 0


@pytest.mark.parametrize("rho", [0.05, 0.2])
def test_avoiding_ball_on_path(linear, cheap_opts, rho):
    start, target = State.zeros(1), State.at_rest([1.0])
    free = quasipotential(start, target, linear, cheap_opts)
    traj = flow_controlled(start, free.path, linear)
    margin = np.minimum(traj.distances(start, linear), traj.distances(target, linear))
    blocker = traj.state(int(np.argmax(margin)))
    assert np.max(margin) > rho
    res = quasipotential_avoiding(start, target, [blocker], rho, linear, cheap_opts)
    assert res.feasible
    assert res.min_clearance >= 0
    detour = flow_controlled(start, res.path, linear)
    assert np.min(detour.distances(blocker, linear)[1:]) >= rho
    assert res.reference_value <= free.value
    assert res.reference_value <= res.value


def test_from_attractor_single_equilibrium(linear, cheap_opts):
    eq = find_equilibria(linear)
    target = State.at_rest([1.0])
    value = quasipotential_from_attractor(target, eq, linear, cheap_opts)
    assert value == quasipotential(eq[0].state, target, linear, cheap_opts).value


def test_from_attractor_on_connection():
    cfg = ModelConfig(0.2, fact_double_well(2.5), basis=8)
    eq = find_equilibria(cfg)
    connections = heteroclinic_scan(eq, cfg)
    waypoints = connections[0].waypoints
    u_star = waypoints[len(waypoints) // 2]
    value = quasipotential_from_attractor(u_star, eq, cfg, connections=connections, max_waypoints=len(waypoints))
    assert value == 0
    with pytest.raises(ValueError):
        quasipotential_from_attractor(u_star, EquilibriumSet(()), cfg)


def test_quasipotential_matrix(linear, cheap_opts):
    eq = find_equilibria(linear)
    V, results = quasipotential_matrix(linear, eq, cheap_opts, extra=State.at_rest([1.0]))
    assert V.size == 2
    assert V.provenance[0][0] == "diagonal"
    assert V[1, 0] == 0
    assert V.provenance[1][0].startswith("mam:downhill")
    assert 0.3 < V[0, 1] < LINEAR_V * 1.05
    assert set(results) == {(0, 1), (1, 0)}
    assert results[(0, 1)].value == V[0, 1]


def test_control_modes_from_feedback():
    cfg = ModelConfig(0.2, fact_double_well(2.5), basis=8)
    u_hat = find_equilibria(cfg)[2].state
    start = u_hat + State.at_rest(np.full(8, 0.02))
    opts = MAMOptions(T_schedule=(100.0,))
    gap = cfg.distance(start, u_hat)
    rho1 = min(opts.eta_schedule[0], gap)
    v0 = u_hat + (start - u_hat) * (rho1 / gap)
    expected = feedback_control(v0, u_hat, rho1, min(opts.eta_schedule[-1], rho1 / 2), cfg, dt=opts.dt)
    res = quasipotential(start, u_hat, cfg, opts)
    assert res.n_control == expected.n_control
    assert 1 <= res.n_control <= 8
    assert res.to_dict()["n_control"] == res.n_control
    fixed = quasipotential(start, u_hat, cfg, MAMOptions(T_schedule=(100.0,), n_control=8))
    assert fixed.n_control == 8


@pytest.mark.parametrize("n_steps", [1, 7, 40])
def test_action_scales_with_noise(n_steps):
    rng = np.random.default_rng(n_steps)
    phi = ControlPath(rng.standard_normal((n_steps, 2)), 0.05)
    weak, strong = NoiseSpec([1.0, 0.5]), NoiseSpec([2.0, 1.0])
    assert action_J(phi, strong) == pytest.approx(action_J(phi, weak) / 4, rel=1e-12)


def test_quasipotential_scales_with_noise(linear_result, oracle_opts):
    loud = ModelConfig(0.5, fact_polynomial([0.0]), basis=1, noise=NoiseSpec([2.0]))
    res = quasipotential(State.zeros(1), State.at_rest([1.0]), loud, oracle_opts)
    assert res.feasible
    assert res.value == pytest.approx(linear_result.value / 4, rel=0.05)
    assert res.value == pytest.approx(LINEAR_V / 4, rel=0.05)


@pytest.fixture(scope="module")
def double_well_matrix():
    # One mode: wells at +-sqrt(pi), saddle at 0.
    cfg = ModelConfig(0.5, fact_double_well(2.5), basis=1)
    eq = find_equilibria(cfg)
    opts = MAMOptions(dt=0.1, T_schedule=(20.0, 40.0), eta_schedule=(0.1, 0.03))
    V, _ = quasipotential_matrix(cfg, eq, opts)
    return eq, V


def test_double_well_matrix_triangle(double_well_matrix):
    eq, V = double_well_matrix
    assert len(eq) == 3
    for i in range(3):
        for j in range(3):
            for k in range(3):
                if len({i, j, k}) == 3:
                    assert V[i, k] <= (V[i, j] + V[j, k]) * 1.15 + 1e-6


def test_double_well_rate_zero_set(double_well_matrix):
    eq, V = double_well_matrix
    table = rate_function_table(V, stable=eq.stable_indices)
    zeros = np.flatnonzero(table.values <= 1e-9)
    assert len(zeros) > 0
    assert set(zeros.tolist()) <= set(eq.stable_indices)
    for k in eq.unstable_indices:
        assert table.values[k] > 0
