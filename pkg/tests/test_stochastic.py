import numpy as np
import pytest

import ldpwave.stochastic
from ldpwave import (
    Ball,
    ModelConfig,
    NeighborhoodSystem,
    NoiseSpec,
    State,
    boundary_chain_run,
    estimate_stationary,
    estimate_transition,
    exit_time_moments,
    exponential_moment_check,
    fact_polynomial,
    flow_deterministic,
    simulate,
)
from ldpwave.stochastic import (
    BallUnion,
    clopper_pearson,
    gaussian_ball_mass,
    gaussian_energy_mgf,
    stationary_gaussian,
)


@pytest.fixture(scope="module")
def linear() -> ModelConfig:
    return ModelConfig(0.5, fact_polynomial([0.0]), basis=1, noise=NoiseSpec([1.0]))


@pytest.fixture(scope="module")
def linear_two_points(linear) -> NeighborhoodSystem:
    return NeighborhoodSystem([State.zeros(1), State.at_rest([1.0])], 0.1, 0.3, 1.0).validate(linear)


def test_simulate_reproducible(linear):
    s0 = State.at_rest([0.5])
    t1 = simulate(s0, 0.2, 10.0, 0.05, 42, linear)
    t2 = simulate(s0, 0.2, 10.0, 0.05, 42, linear)
    t3 = simulate(s0, 0.2, 10.0, 0.05, 43, linear)
    np.testing.assert_array_equal(t1.positions, t2.positions)
    assert not np.array_equal(t1.positions, t3.positions)


def test_simulate_eps_zero(linear):
    s0 = State.at_rest([0.5])
    noisy = simulate(s0, 0.0, 10.0, 0.05, 42, linear)
    np.testing.assert_array_equal(noisy.positions, flow_deterministic(s0, 10.0, 0.05, linear).positions)


def test_ball():
    cfg = ModelConfig(0.5, fact_polynomial([0.0]), basis=2)
    ball = Ball({"position": [1.0]}, 0.5)
    assert ball.center.n_modes == 1
    a = np.array([[1.0, 0.0], [1.0, 0.4], [0.0, 0.0]])
    v = np.zeros_like(a)
    np.testing.assert_array_equal(ball.contains(a, v, cfg), [True, False, False])
    outside = Ball(State.at_rest([1.0]), 0.5, complement=True)
    np.testing.assert_array_equal(outside.contains(a, v, cfg), [False, True, True])
    union = BallUnion((ball, Ball(State.zeros(2), 0.1)))
    np.testing.assert_array_equal(union.contains(a, v, cfg), [True, False, True])
    with pytest.raises(ValueError):
        Ball(State.zeros(1), 0.0)


def test_stationary_gaussian(linear):
    mean, cov = stationary_gaussian(linear, 0.2)
    np.testing.assert_array_equal(mean, [0.0, 0.0])
    # Var a = eps b^2 / (2 gamma lambda), Var v = eps b^2 / (2 gamma)
    np.testing.assert_allclose(np.diag(cov), [0.2, 0.2])
    assert gaussian_energy_mgf(linear, 0.2, 0.0) == 1.0
    with pytest.raises(ValueError):
        stationary_gaussian(ModelConfig(0.5, fact_polynomial([0.0, 1.0]), basis=1), 0.2)


def test_estimate_stationary_gaussian(linear):
    ball = Ball(State.zeros(1), 0.5)
    est = estimate_stationary(linear, 0.2, [ball], burn_in=20.0, T_total=2e4, dt=0.1, seed=1)
    expected = gaussian_ball_mass(linear, 0.2, ball, n_samples=200_000)
    assert est.n_samples == 200_000
    assert est.counts[0] > 0
    assert est.ci_low[0] - 0.02 <= expected <= est.ci_high[0] + 0.02
    assert est.to_frame().shape[0] == 1


def test_estimate_stationary_reproducible(linear):
    ball = Ball(State.zeros(1), 0.5)
    kwargs = {"burn_in": 5.0, "T_total": 500.0, "dt": 0.1, "seed": 3}
    e1 = estimate_stationary(linear, 0.2, [ball], **kwargs, stream=(0,))
    e2 = estimate_stationary(linear, 0.2, [ball], **kwargs, stream=(0,))
    e3 = estimate_stationary(linear, 0.2, [ball], **kwargs, stream=(1,))
    assert e1.fractions[0] == e2.fractions[0]
    assert e1.fractions[0] != e3.fractions[0]


def test_estimate_stationary_nok(linear):
    ball = Ball(State.zeros(1), 0.5)
    with pytest.raises(ValueError):
        estimate_stationary(linear, 0.0, [ball], 1.0, 10.0)
    with pytest.raises(ValueError):
        estimate_stationary(linear, 0.1, [ball], 1.0, 10.0, n_batches=1)


def test_estimate_stationary_unvisited(linear):
    far = Ball(State.at_rest([50.0]), 0.1)
    est = estimate_stationary(linear, 0.05, [far], 1.0, 100.0, dt=0.1)
    assert est.counts[0] == 0
    assert est.insufficient[0]


@pytest.mark.parametrize(
    "radii",
    [(0.3, 0.1, 1.0), (0.1, 0.3, 0.2), (0.0, 0.3, 1.0)],
    ids=["inner_outer", "outer_star", "zero"],
)
def test_neighborhoods_nok(radii):
    with pytest.raises(ValueError):
        NeighborhoodSystem([State.zeros(1)], *radii)


def test_neighborhoods_extra(linear):
    with pytest.raises(ValueError):
        NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0, extra=State.at_rest([2.0]))
    with pytest.raises(ValueError):  # rho0p must stay below rho1
        NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0, State.at_rest([2.0]), 0.05, 0.2)
    ns = NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0, State.at_rest([2.0]), 0.02, 0.05)
    assert ns.n_points == 2
    assert ns.primary == [0]
    np.testing.assert_array_equal(ns.inner_radii, [0.1, 0.02])
    np.testing.assert_array_equal(ns.outer_radii, [0.3, 0.05])


def test_neighborhoods_intersect(linear):
    ns = NeighborhoodSystem([State.zeros(1), State.at_rest([0.5])], 0.1, 0.3, 1.0)
    with pytest.raises(ValueError):
        ns.validate(linear)


def test_neighborhoods_geometry(linear, linear_two_points):
    ns = linear_two_points
    p = ns.boundary_point(1, State([1.0], [1.0]), linear)
    d = ns.distances(p.position, p.velocity, linear)
    assert d.shape == (2,)
    assert d[1] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        ns.boundary_point(0, State.zeros(1), linear)


def test_boundary_chain(linear):
    ns = NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0)
    chain = boundary_chain_run(linear, ns, 0.2, 5, seed=7, max_time=1e4)
    assert chain.complete
    assert chain.n_hits == 5
    assert np.all(chain.indices == 0)
    assert np.all(np.diff(chain.taus) > 0)
    assert np.all(chain.sigmas < chain.taus)
    assert np.all(chain.sigmas[1:] > chain.taus[:-1])
    for p in chain.points:
        assert linear.distance(p, State.zeros(1)) == pytest.approx(0.1, abs=1e-3)
    assert chain.transition_counts(1)[0, 0] == 5
    assert len(chain.to_frame()) == 5


def test_boundary_chain_reproducible(linear):
    ns = NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0)
    c1 = boundary_chain_run(linear, ns, 0.2, 3, seed=7)
    c2 = boundary_chain_run(linear, ns, 0.2, 3, seed=7)
    np.testing.assert_array_equal(c1.taus, c2.taus)


def test_boundary_chain_restarts_at_hit(linear, monkeypatch):
    ns = NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0)
    starts = []
    run_passages = ldpwave.stochastic._run_passages

    def recording(cfg, ns, stepper, rng, eps, a, v, *args, **kwargs):
        starts.append((np.array(a), np.array(v), kwargs.get("t0")))
        return run_passages(cfg, ns, stepper, rng, eps, a, v, *args, **kwargs)

    monkeypatch.setattr(ldpwave.stochastic, "_run_passages", recording)
    chain = boundary_chain_run(linear, ns, 0.2, 3, seed=7, max_time=1e4)
    assert chain.complete
    assert len(starts) == 3
    for n in range(2):
        a, v, t0 = starts[n + 1]
        np.testing.assert_array_equal(a[0], chain.points[n].position)
        np.testing.assert_array_equal(v[0], chain.points[n].velocity)
        assert t0 == chain.taus[n]


def test_boundary_chain_deterministic(linear):
    ns = NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0)
    chain = boundary_chain_run(linear, ns, 0.0, 3, seed=0, max_time=50.0)
    assert chain.no_exit
    assert not chain.complete
    assert chain.n_hits == 0


def test_boundary_chain_between_points(linear, linear_two_points):
    chain = boundary_chain_run(linear, linear_two_points, 0.05, 1, seed=0, start_index=1, max_time=200.0)
    assert chain.indices.tolist() == [0]
    np.testing.assert_array_equal(chain.transition_matrix(2), [[0.0, 0.0], [1.0, 0.0]])


def test_estimate_transition(linear, linear_two_points):
    (est,) = estimate_transition(linear, linear_two_points, [0.05], 1, 0, 50, seed=2, max_time=100.0)
    assert est.n_finished > 0
    assert est.probabilities.sum() == pytest.approx(1.0)
    assert est.p_hat > 0.5
    assert est.ci_low <= est.p_hat <= est.ci_high
    assert not est.bound_only
    assert est.neg_eps_log_low <= est.neg_eps_log <= est.neg_eps_log_high
    with pytest.raises(ValueError):
        estimate_transition(linear, linear_two_points, [0.05], 1, 1, 10, seed=2)


def test_estimate_transition_decreases_with_eps(linear, linear_two_points):
    # Leaving the attractor at 0 costs a positive action, so the estimates fall with eps.
    estimates = estimate_transition(linear, linear_two_points, [0.4, 0.2, 0.1], 0, 1, 400, seed=3, max_time=100.0)
    p = [est.p_hat for est in estimates]
    assert p[0] > p[1] > p[2]
    assert estimates[0].hits > 0


def test_clopper_pearson():
    lo, hi = clopper_pearson(0, 10)
    assert lo == 0.0
    assert hi == pytest.approx(1 - 0.025**0.1)
    assert clopper_pearson(10, 10)[1] == 1.0
    lo3, hi3 = clopper_pearson(3, 10)
    lo7, hi7 = clopper_pearson(7, 10)
    assert lo3 == pytest.approx(1 - hi7)
    assert hi3 == pytest.approx(1 - lo7)


def test_exit_time_moments(linear):
    ns = NeighborhoodSystem([State.zeros(1)], 0.1, 0.3, 1.0)
    moments = exit_time_moments(linear, ns, 0.2, [0.0, 0.01], 40, seed=1, max_time=2000.0)
    assert moments.mgf[0] == 1.0
    assert moments.stable[0]
    assert moments.largest_stable_delta is not None
    assert np.all(moments.taus > 0)
    assert moments.mgf[1] >= 1.0
    with pytest.raises(ValueError):
        exit_time_moments(linear, ns, 0.2, [0.1, 0.0], 10)


def test_exponential_moment_zero_kappa(linear):
    series = exponential_moment_check(linear, 0.1, 0.0, 10.0, n_replicas=10)
    np.testing.assert_array_equal(series.values, 1.0)
    assert series.bounded
    assert series.slope == 0.0


def test_exponential_moment_stationary_level(linear):
    series = exponential_moment_check(linear, 0.1, 0.1, 40.0, n_replicas=400, seed=5)
    assert series.reductions == 0
    late = series.values[series.times >= 30.0]
    assert np.mean(late) == pytest.approx(gaussian_energy_mgf(linear, 0.1, 0.1), rel=0.005)


def test_exponential_moment_nok(linear):
    with pytest.raises(ValueError):
        exponential_moment_check(linear, 0.1, -1.0, 1.0)
    with pytest.raises(ValueError):
        exponential_moment_check(linear, 0.1, 10.0, 1.0)  # threshold is 0.25 here
