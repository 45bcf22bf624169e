import math

import numpy as np
import pytest
from scipy import stats

from ldpwave import (
    ControlPath,
    DivergenceError,
    InvalidStateError,
    ModelConfig,
    NoiseSpec,
    State,
    classify_stability,
    energy,
    fact_double_well,
    fact_polynomial,
    feedback_control,
    find_equilibria,
    flow_controlled,
    flow_deterministic,
    heteroclinic_scan,
    perturbation_bound_fit,
)
from ldpwave.dynamics import EquilibriumSet, stabilizing_feedback
from ldpwave.spectral import energy_arrays
from ldpwave.stepper import Stepper


@pytest.fixture(scope="module")
def doublewell() -> ModelConfig:
    return ModelConfig(0.2, fact_double_well(2.5), basis=8)


@pytest.fixture(scope="module")
def doublewell_eq(doublewell) -> EquilibriumSet:
    return find_equilibria(doublewell)


def linear_model(gamma: float = 0.5) -> ModelConfig:
    return ModelConfig(gamma, fact_polynomial([0.0]), basis=1, noise=NoiseSpec([1.0]))


def damped_cosine(t: np.ndarray, gamma: float) -> np.ndarray:
    """Solution of a'' + gamma a' + a = 0 with a(0) = 1, a'(0) = 0."""
    omega = math.sqrt(1 - gamma**2 / 4)
    return np.exp(-gamma * t / 2) * (np.cos(omega * t) + gamma / (2 * omega) * np.sin(omega * t))


@pytest.mark.parametrize("dt", [0.01, 0.1, 0.5])
def test_flow_linear_exact(dt):
    cfg = linear_model()
    traj = flow_deterministic(State([1.0], [0.0]), 20.0, dt, cfg)
    np.testing.assert_allclose(traj.positions[:, 0], damped_cosine(traj.times, 0.5), atol=1e-10)


@pytest.mark.parametrize("c", [0.5, -2.0])
def test_flow_controlled_linear_exact(c):
    cfg = linear_model()
    phi = ControlPath.constant([c], 200, 0.1)
    traj = flow_controlled(State.zeros(1), phi, cfg)
    expected = c * (1 - damped_cosine(traj.times, 0.5))
    np.testing.assert_allclose(traj.positions[:, 0], expected, atol=1e-10)
    assert traj.times[-1] == pytest.approx(phi.T)


def test_flow_controlled_zero_is_deterministic(doublewell):
    s0 = State(np.linspace(0.5, 0.0, 8), np.zeros(8))
    det = flow_deterministic(s0, 10.0, 0.05, doublewell)
    ctl = flow_controlled(s0, ControlPath.zeros(200, 0.05, 3), doublewell)
    np.testing.assert_array_equal(det.positions, ctl.positions)
    np.testing.assert_array_equal(det.velocities, ctl.velocities)


@pytest.mark.parametrize("coefficients", [[0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 1.0]], ids=["zero", "cubic", "singlewell"])
@pytest.mark.parametrize("dt", [0.01, 0.05])
def test_energy_decreases_along_flow(coefficients, dt):
    # u f(u) >= 0: the energy dissipates.
    cfg = ModelConfig(0.5, fact_polynomial(coefficients), basis=4)
    rng = np.random.default_rng(3)
    s0 = State(rng.standard_normal(4) / np.arange(1, 5), rng.standard_normal(4))
    traj = flow_deterministic(s0, 20.0, dt, cfg)
    values = energy_arrays(traj.positions, traj.velocities, cfg)
    assert values[0] == pytest.approx(energy(s0, cfg))
    assert np.all(np.diff(values) <= dt**2 * values[0])
    assert values[-1] < 0.5 * values[0]


def test_flow_controlled_superposition():
    cfg = ModelConfig(0.4, fact_polynomial([0.0]), basis=3)
    rng = np.random.default_rng(4)
    s1, s2 = State(*rng.standard_normal((2, 3))), State(*rng.standard_normal((2, 3)))
    phi1 = ControlPath(rng.standard_normal((150, 2)), 0.05)
    phi2 = ControlPath(rng.standard_normal((150, 2)), 0.05)
    both = flow_controlled(s1 + s2, phi1.with_coeffs(np.array(phi1.coeffs) + np.array(phi2.coeffs)), cfg)
    one, two = flow_controlled(s1, phi1, cfg), flow_controlled(s2, phi2, cfg)
    np.testing.assert_allclose(both.positions, one.positions + two.positions, atol=1e-8)
    np.testing.assert_allclose(both.velocities, one.velocities + two.velocities, atol=1e-8)
    scaled = flow_controlled(s1 * 3.0, phi1.with_coeffs(3.0 * np.array(phi1.coeffs)), cfg)
    np.testing.assert_allclose(scaled.positions, 3.0 * one.positions, atol=1e-8)


def test_flow_sample_every(doublewell):
    s0 = State.at_rest(np.full(8, 0.1))
    full = flow_deterministic(s0, 5.0, 0.05, doublewell)
    thin = flow_deterministic(s0, 5.0, 0.05, doublewell, sample_every=7)
    np.testing.assert_array_equal(thin.positions, full.positions[::7].tolist() + [full.positions[-1]])
    assert thin.times[-1] == full.times[-1]


def test_flow_divergence():
    cfg = ModelConfig(0.2, fact_polynomial([0.0, 0.0, 0.0, -1.0]), basis=2)
    with pytest.raises(DivergenceError):
        flow_deterministic(State.at_rest([5.0, 0.0]), 50.0, 0.05, cfg)


def test_stepper_resolution(doublewell):
    with pytest.raises(ValueError):
        Stepper(doublewell, 0.5)  # sqrt(lambda_8) = 8


def test_equilibria_doublewell(doublewell, doublewell_eq):
    eq = doublewell_eq
    assert len(eq) == 3
    assert eq.labels == ["stable", "unstable", "stable"]
    assert eq.stable_indices == [0, 2]
    np.testing.assert_allclose(eq[1].state.position, 0.0, atol=1e-12)
    np.testing.assert_allclose(eq[0].state.position, -eq[2].state.position, atol=1e-8)
    assert eq[2].state.position[0] > 0
    for e in eq:
        assert e.residual < 1e-8
        assert np.linalg.norm(doublewell.residual(e.state.position)) < 1e-8
        assert not e.degenerate
    assert eq[0].certified and eq[2].certified


def test_equilibria_are_fixed_points(doublewell, doublewell_eq):
    for e in doublewell_eq:
        traj = flow_deterministic(e.state, 10.0, 0.05, doublewell)
        assert doublewell.distance(traj.final, e.state) < 1e-8


def test_equilibria_singlewell():
    cfg = ModelConfig(0.3, fact_polynomial([0.0, 1.0, 0.0, 1.0]), basis=4)
    eq = find_equilibria(cfg)
    assert len(eq) == 1
    assert eq.labels == ["stable"]


def test_equilibria_degenerate():
    cfg = ModelConfig(0.2, fact_double_well(1.0), basis=4)  # pitchfork threshold
    eq = find_equilibria(cfg)
    assert len(eq) == 1
    assert eq[0].degenerate
    assert not eq[0].certified
    assert eq[0].label == "marginal"


def test_equilibria_roundtrip(doublewell_eq):
    again = EquilibriumSet.from_dict(doublewell_eq.to_dict())
    assert again.labels == doublewell_eq.labels
    np.testing.assert_array_equal(again[2].state.position, doublewell_eq[2].state.position)


def test_stability_linear():
    report = classify_stability(State.zeros(1), linear_model(0.5))
    assert report.label == "stable"
    np.testing.assert_allclose(report.eigenvalues.real, -0.25)
    assert report.margin == pytest.approx(0.25)


def test_stability_nok(doublewell):
    with pytest.raises(InvalidStateError):
        classify_stability(State.at_rest(np.full(8, 0.3)), doublewell)
    with pytest.raises(InvalidStateError):
        classify_stability(State(np.zeros(8), np.ones(8)), doublewell)


@pytest.mark.parametrize("n_control", [2, 8])
def test_stabilizing_feedback_zero_at_target(doublewell, doublewell_eq, n_control):
    target = doublewell_eq[2].state
    law = stabilizing_feedback(doublewell, target, n_control)
    np.testing.assert_allclose(law(target.position), 0.0, atol=1e-9)
    assert np.all(law(np.ones(8))[n_control:] == 0)


def _start(u_hat: State, cfg: ModelConfig, radius: float) -> State:
    direction = State(np.linspace(1.0, 0.2, cfg.n_modes), np.linspace(-0.5, 0.5, cfg.n_modes))
    return u_hat + direction * (radius / cfg.distance(direction, State.zeros(cfg.n_modes)))


def test_feedback_control(doublewell, doublewell_eq):
    u_hat = doublewell_eq[2].state
    v0 = _start(u_hat, doublewell, 0.2)
    result = feedback_control(v0, u_hat, 0.2, 0.02, doublewell)
    assert result.decay_ok
    assert result.endpoint_ok
    assert result.n_control == result.tried[-1]
    assert len(result.sup_norms) == len(result.tried)
    assert result.energy > 0
    assert result.T == pytest.approx(2 * math.log(10) / doublewell.alpha, abs=0.05)
    # Replaying the recorded control reproduces the closed loop.
    replay = flow_controlled(v0, result.control, doublewell)
    np.testing.assert_allclose(replay.positions, result.trajectory.positions, atol=1e-12)


def test_feedback_energy_scaling(doublewell, doublewell_eq):
    u_hat = doublewell_eq[2].state
    radii = [0.01, 0.02, 0.04, 0.08]
    energies = []
    for r in radii:
        v0 = _start(u_hat, doublewell, r)
        energies.append(feedback_control(v0, u_hat, r, r / 2, doublewell, n_start=8).energy)
    slope = stats.linregress(np.log(radii), np.log(energies)).slope
    assert slope == pytest.approx(2.0, abs=0.2)


def test_feedback_nok(doublewell, doublewell_eq):
    u_hat = doublewell_eq[2].state
    with pytest.raises(ValueError):
        feedback_control(_start(u_hat, doublewell, 0.3), u_hat, 0.2, 0.02, doublewell)
    with pytest.raises(ValueError):
        feedback_control(u_hat, u_hat, 0.2, 0.3, doublewell)


def test_heteroclinic_scan(doublewell, doublewell_eq):
    connections = heteroclinic_scan(doublewell_eq, doublewell)
    assert len(connections) == 2
    assert all(c.source == 1 for c in connections)
    assert sorted(c.target for c in connections) == [0, 2]
    assert all(c.status == "connected" for c in connections)
    assert all(c.eigenvalue.real > 0 for c in connections)
    assert len(connections[0].waypoints) > 10


def test_heteroclinic_scan_stable_only():
    cfg = ModelConfig(0.3, fact_polynomial([0.0, 1.0, 0.0, 1.0]), basis=4)
    assert heteroclinic_scan(find_equilibria(cfg), cfg) == []


def test_perturbation_bound_fit():
    cfg = ModelConfig(0.3, fact_double_well(2.5), basis=4)
    fit = perturbation_bound_fit(cfg, State.at_rest([0.5, 0.0, 0.0, 0.0]), 5.0, n_samples=4)
    assert np.isfinite(fit.C)
    assert fit.C == pytest.approx(np.max(fit.per_sample))
    assert fit.worst_ratio <= 1 + 1e-9
    assert np.all(fit.actions > 0)
