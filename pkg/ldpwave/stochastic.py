"""Stochastic flow with noise sqrt(eps) sum_j b_j dbeta_j e_j: simulation, stationary
occupation, the boundary Markov chain and exit-time and energy moments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .common import InvalidStateError, make_rng, print_status, progress
from .dynamics import Trajectory, _n_steps
from .model import ModelConfig
from .spectral import State, as_state, energy_arrays, norm_h_arrays
from .stepper import Stepper


def simulate(
    s0: State,
    eps: float,
    T: float,
    dt: float,
    seed: int,
    cfg: ModelConfig,
    sample_every: int = 1,
) -> Trajectory:
    """Integrate the stochastic equation over [0, T].

    Parameters
    ----------
    s0 : State
    eps : float
        Noise intensity, >= 0; eps = 0 gives the deterministic flow exactly.
    T, dt : float
        Horizon and time step.
    seed : int
        Seed of the counter-based generator; equal seeds give identical paths.
    cfg : ModelConfig
    sample_every : int, optional (default: 1)

    Returns
    -------
    Trajectory
    """
    s0 = as_state(s0, cfg.n_modes)
    stepper = Stepper(cfg, dt)
    rng = make_rng(seed) if eps > 0 else None
    times, a, v, _ = stepper.run(
        s0.position, s0.velocity, _n_steps(T, dt), eps=eps, rng=rng, sample_every=sample_every
    )
    return Trajectory(times, a, v)


# --- Events.


@dataclass(frozen=True)
class Ball:
    """Closed ball B(center, radius) in the phase-space norm, or its complement."""

    center: State
    radius: float
    complement: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", as_state(self.center))  # because frozen
        if not self.radius > 0:
            raise ValueError(f"'radius' must be positive; got {self.radius}.")

    def contains(self, a: np.ndarray, v: np.ndarray, cfg: ModelConfig) -> np.ndarray:
        center = self.center.padded(cfg.n_modes)
        if np.isinf(self.radius):
            inside = np.ones(np.shape(a)[:-1], bool)
        else:
            d = norm_h_arrays(a - center.position, v - center.velocity, cfg.eigenvalues, cfg.alpha)
            inside = d <= self.radius
        return ~inside if self.complement else inside

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": self.center.to_dict(),
            "radius": self.radius,
            "complement": self.complement,
        }


@dataclass(frozen=True)
class BallUnion:
    balls: Tuple[Ball, ...]

    def contains(self, a: np.ndarray, v: np.ndarray, cfg: ModelConfig) -> np.ndarray:
        out = np.zeros(np.shape(a)[:-1], bool)
        for ball in self.balls:
            out |= ball.contains(a, v, cfg)
        return out


# --- Stationary measure.


@dataclass(frozen=True)
class StationaryEstimate:
    """Time-average occupation of each event with batch-means confidence intervals.

    insufficient : CI half-width above the requested maximum, or no visit at all.
    """

    eps: float
    fractions: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    half_width: np.ndarray
    counts: np.ndarray
    insufficient: np.ndarray
    n_samples: int
    n_batches: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "event": np.arange(len(self.fractions)),
                "eps": self.eps,
                "fraction": self.fractions,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
                "count": self.counts,
                "insufficient": self.insufficient,
            }
        )


def estimate_stationary(
    cfg: ModelConfig,
    eps: float,
    events: Sequence[Any],
    burn_in: float,
    T_total: float,
    dt: float = 0.05,
    seed: int = 0,
    s0: State = None,
    n_batches: int = 20,
    level: float = 0.95,
    max_half_width: float = None,
    chunk: int = 50_000,
    stream: Tuple[int, ...] = (),
    verbose: bool = False,
) -> StationaryEstimate:
    """Occupation fractions of ``events`` along one long path after ``burn_in``.

    Parameters
    ----------
    cfg : ModelConfig
    eps : float
        Noise intensity, > 0.
    events : Sequence of Ball or BallUnion
    burn_in, T_total : float
        Discarded initial time and averaging time.
    dt : float, optional (default: 0.05)
    seed : int, optional (default: 0)
    s0 : State, optional
        Start; default the zero state.
    n_batches : int, optional (default: 20)
        Number of batches for the batch-means confidence interval.
    level : float, optional (default: 0.95)
    max_half_width : float, optional
        Flag events whose CI half-width exceeds this.
    chunk : int, optional
        Steps held in memory at once.
    stream : Tuple[int], optional
        Sub-stream of the generator, for independent cells with a common seed.

    Returns
    -------
    StationaryEstimate

    Notes
    -----
    For constant f the path is generated with per-mode recursive filters, which is exact
    and orders of magnitude faster than stepping.
    """
    if not eps > 0:
        raise ValueError(f"'eps' must be positive; got {eps}.")
    if n_batches < 2:
        raise ValueError(f"'n_batches' must be at least 2; got {n_batches}.")
    s0 = State.zeros(cfg.n_modes) if s0 is None else as_state(s0, cfg.n_modes)
    stepper = Stepper(cfg, dt)
    rng = make_rng(seed, *stream)
    n_burn = int(round(burn_in / dt))
    n_total = _n_steps(T_total, dt)
    if n_total < n_batches:
        raise ValueError(f"Need at least {n_batches} steps to average over; got {n_total}.")
    fast = cfg.nonlinearity.degree < 1

    def advance(a, v, n):
        if fast:
            pos, vel = stepper.run_linear(a, v, n, eps, rng)
        else:
            _, pos, vel, _ = stepper.run(a, v, n, eps=eps, rng=rng)
        return pos[1:], vel[1:]

    a, v = s0.position, s0.velocity
    for start in range(0, n_burn, chunk):
        pos, vel = advance(a, v, min(chunk, n_burn - start))
        a, v = pos[-1], vel[-1]

    counts = np.zeros((len(events), n_batches))
    sizes = np.bincount(np.arange(n_total) * n_batches // n_total, minlength=n_batches)
    starts = range(0, n_total, chunk)
    for start in progress(starts, verbose, desc=f"eps={eps:g}", total=len(starts)):
        pos, vel = advance(a, v, min(chunk, n_total - start))
        a, v = pos[-1], vel[-1]
        batch = (start + np.arange(len(pos))) * n_batches // n_total
        for e, event in enumerate(events):
            inside = event.contains(pos, vel, cfg)
            counts[e] += np.bincount(batch, weights=inside, minlength=n_batches)

    per_batch = counts / sizes
    fractions = counts.sum(axis=1) / n_total
    se = per_batch.std(axis=1, ddof=1) / math.sqrt(n_batches)
    half = stats.t.ppf((1 + level) / 2, n_batches - 1) * se
    total = counts.sum(axis=1)
    insufficient = total == 0
    if max_half_width is not None:
        insufficient |= half > max_half_width
    return StationaryEstimate(
        eps=eps,
        fractions=fractions,
        ci_low=np.clip(fractions - half, 0.0, 1.0),
        ci_high=np.clip(fractions + half, 0.0, 1.0),
        half_width=half,
        counts=total.astype(int),
        insufficient=insufficient,
        n_samples=n_total,
        n_batches=n_batches,
    )


def stationary_gaussian(cfg: ModelConfig, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary mean (2N,) and covariance (2N, 2N) of the state when f is constant.

    The covariance is block diagonal, eps times the solution of the per-mode Lyapunov
    equation; ordering is [a_1, v_1, a_2, v_2, ...].
    """
    if cfg.nonlinearity.degree >= 1:
        raise ValueError("The stationary measure is Gaussian only for constant f.")
    n = cfg.n_modes
    c = cfg.h_modes - cfg.nonlinear_modes(np.zeros(n))
    mean = np.zeros(2 * n)
    mean[0::2] = c / cfg.eigenvalues
    cov = np.zeros((2 * n, 2 * n))
    # Lyapunov solution of the mode, as in the stepper: diag(b^2/(2 gamma lambda), b^2/(2 gamma)).
    for j, (lam, b) in enumerate(zip(cfg.eigenvalues, cfg.noise.b)):
        cov[2 * j, 2 * j] = eps * b**2 / (2 * cfg.gamma * lam)
        cov[2 * j + 1, 2 * j + 1] = eps * b**2 / (2 * cfg.gamma)
    return mean, cov


def gaussian_ball_mass(
    cfg: ModelConfig, eps: float, ball: Ball, n_samples: int = 2_000_000, seed: int = 0
) -> float:
    """Stationary probability of ``ball`` for constant f, by sampling the exact Gaussian."""
    mean, cov = stationary_gaussian(cfg, eps)
    x = make_rng(seed).multivariate_normal(mean, cov, size=n_samples, method="cholesky")
    return float(np.mean(ball.contains(x[:, 0::2], x[:, 1::2], cfg)))


def gaussian_energy_mgf(cfg: ModelConfig, eps: float, kappa: float) -> float:
    """E exp(kappa |x|^2) under the stationary Gaussian, for f = 0 and h = 0."""
    if not (cfg.nonlinearity.is_zero and not np.any(cfg.h_modes)):
        raise ValueError("Closed form only for f = 0 and h = 0.")
    _, cov = stationary_gaussian(cfg, eps)
    out = 1.0
    for j, lam in enumerate(cfg.eigenvalues):
        M = np.array([[lam + cfg.alpha**2, cfg.alpha], [cfg.alpha, 1.0]])
        P = cov[2 * j : 2 * j + 2, 2 * j : 2 * j + 2]
        det = np.linalg.det(np.eye(2) - 2 * kappa * P @ M)
        if det <= 0:
            return np.inf
        out *= det**-0.5
    return float(out)


# --- Neighborhoods and the boundary chain.


@dataclass(frozen=True)
class NeighborhoodSystem:
    """Balls g_i = B(u_i, rho1) inside g~_i = B(u_i, rho0) around the points u_1..u_l, and
    optionally g_(l+1) = B(u_(l+1), rho1p) inside g~_(l+1) = B(u_(l+1), rho0p).

    Parameters
    ----------
    centers : Sequence[State]
        The points u_1..u_l (usually the equilibria).
    rho1, rho0, rho_star : float
        Radii, 0 < rho1 < rho0 < rho_star.
    extra : State, optional
        Non-stationary point u_(l+1); needs rho1p < rho0p < rho1.
    rho1p, rho0p : float, optional

    Notes
    -----
    Use ``.validate(cfg)`` to check that the outer balls are pairwise disjoint.
    """

    centers: Tuple[State, ...]
    rho1: float
    rho0: float
    rho_star: float
    extra: Optional[State] = None
    rho1p: Optional[float] = None
    rho0p: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(as_state(c) for c in self.centers))
        if not len(self.centers):
            raise ValueError("At least one center is needed.")
        radii = [self.rho1, self.rho0, self.rho_star]
        if self.extra is not None:
            if self.rho1p is None or self.rho0p is None:
                raise ValueError("An extra point needs the radii 'rho1p' and 'rho0p'.")
            object.__setattr__(self, "extra", as_state(self.extra))
            radii = [self.rho1p, self.rho0p] + radii
        if not (radii[0] > 0 and all(r1 < r2 for r1, r2 in zip(radii, radii[1:]))):
            raise ValueError(f"Radii must be strictly increasing and positive; got {radii}.")

    @property
    def points(self) -> List[State]:
        return list(self.centers) + ([self.extra] if self.extra is not None else [])

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def primary(self) -> List[int]:
        """Indices of g' (all balls but the one around the extra point)."""
        return list(range(len(self.centers)))

    @property
    def inner_radii(self) -> np.ndarray:
        extra = [self.rho1p] if self.extra is not None else []
        return np.array([self.rho1] * len(self.centers) + extra)

    @property
    def outer_radii(self) -> np.ndarray:
        extra = [self.rho0p] if self.extra is not None else []
        return np.array([self.rho0] * len(self.centers) + extra)

    def validate(self, cfg: ModelConfig) -> NeighborhoodSystem:
        points, outer = self.points, self.outer_radii
        for i in range(len(points)):
            for k in range(i + 1, len(points)):
                d = cfg.distance(points[i].padded(cfg.n_modes), points[k].padded(cfg.n_modes))
                if d <= outer[i] + outer[k]:
                    raise ValueError(
                        f"Neighborhoods of points {i} and {k} intersect: distance {d:.4g},"
                        f" radii {outer[i]:g} and {outer[k]:g}."
                    )
        return self

    def distances(self, a: np.ndarray, v: np.ndarray, cfg: ModelConfig) -> np.ndarray:
        """Distance of states (..., N) to every point; shape (..., n_points)."""
        out = []
        for p in self.points:
            p = p.padded(cfg.n_modes)
            out.append(norm_h_arrays(a - p.position, v - p.velocity, cfg.eigenvalues, cfg.alpha))
        return np.stack(out, axis=-1)

    def boundary_point(self, i: int, direction: State, cfg: ModelConfig) -> State:
        """Point on the boundary of g_i in the given direction."""
        direction = as_state(direction, cfg.n_modes)
        norm = norm_h_arrays(direction.position, direction.velocity, cfg.eigenvalues, cfg.alpha)
        if not norm > 0:
            raise ValueError("Direction must be nonzero.")
        return self.points[i].padded(cfg.n_modes) + direction * (self.inner_radii[i] / norm)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "centers": [c.to_dict() for c in self.centers],
            "rho1": self.rho1,
            "rho0": self.rho0,
            "rho_star": self.rho_star,
            "extra": None if self.extra is None else self.extra.to_dict(),
            "rho1p": self.rho1p,
            "rho0p": self.rho0p,
        }


def _refine(
    prev: Tuple[np.ndarray, np.ndarray],
    cur: Tuple[np.ndarray, np.ndarray],
    g,
    tol: float,
) -> float:
    """Bisection on the segment prev -> cur for the sign change of g; returns theta."""
    lo, hi = 0.0, 1.0
    theta = 1.0
    for _ in range(60):
        theta = (lo + hi) / 2
        value = g(prev[0] + theta * (cur[0] - prev[0]), prev[1] + theta * (cur[1] - prev[1]))
        if abs(value) <= tol:
            break
        if (value > 0) == (g(*prev) > 0):
            lo = theta
        else:
            hi = theta
    return theta


@dataclass
class _Passages:
    """Per-replica exit/hit bookkeeping of a batched run."""

    n: int
    sigma: np.ndarray = None
    tau: np.ndarray = None
    index: np.ndarray = None
    points: List[Optional[State]] = None

    def __post_init__(self):
        self.sigma = np.full(self.n, np.inf)
        self.tau = np.full(self.n, np.inf)
        self.index = np.full(self.n, -1)
        self.points = [None] * self.n


def _run_passages(
    cfg: ModelConfig,
    ns: NeighborhoodSystem,
    stepper: Stepper,
    rng: Optional[np.random.Generator],
    eps: float,
    a: np.ndarray,
    v: np.ndarray,
    max_steps: int,
    t0: float = 0.0,
    noise_block: int = 1024,
) -> Tuple[_Passages, np.ndarray, np.ndarray, int]:
    """Step a batch (R, N) until every replica has left g~ and then hit g, or until
    ``max_steps``. Returns the passages, the final states and the number of steps."""
    n = a.shape[0]
    inner, outer = ns.inner_radii, ns.outer_radii
    tol = 1e-3 * ns.rho1
    out = _Passages(n)
    d = ns.distances(a, v, cfg)
    if np.any(np.all(d > outer, axis=-1)):
        raise InvalidStateError("Every start must lie inside one of the outer balls.")
    exited = np.zeros(n, bool)
    done = np.zeros(n, bool)
    taken = 0

    def g_exit(x, y):
        return float(np.min(ns.distances(x, y, cfg) - outer))

    def g_hit(x, y):
        return float(np.min(ns.distances(x, y, cfg) - inner))

    for k in range(max_steps):
        if k % noise_block == 0 and eps > 0:
            noise_a, noise_v = stepper.draw_noise(rng, eps, min(noise_block, max_steps - k), (n,))
        prev_a, prev_v = a, v
        a, v = stepper.step(a, v)
        if eps > 0:
            a, v = a + noise_a[k % noise_block], v + noise_v[k % noise_block]
        taken = k + 1
        stepper.check(a, v, t0 + taken * stepper.dt)
        d = ns.distances(a, v, cfg)
        t_prev = t0 + k * stepper.dt

        hit = exited & ~done & np.any(d <= inner, axis=-1)
        for r in np.flatnonzero(hit):
            theta = _refine((prev_a[r], prev_v[r]), (a[r], v[r]), g_hit, tol)
            za, zv = prev_a[r] + theta * (a[r] - prev_a[r]), prev_v[r] + theta * (v[r] - prev_v[r])
            out.tau[r] = t_prev + theta * stepper.dt
            out.index[r] = int(np.argmin(ns.distances(za, zv, cfg) - inner))
            out.points[r] = State(za, zv)
        done |= hit

        leaving = ~exited & np.all(d > outer, axis=-1)
        for r in np.flatnonzero(leaving):
            theta = _refine((prev_a[r], prev_v[r]), (a[r], v[r]), g_exit, tol)
            out.sigma[r] = t_prev + theta * stepper.dt
        exited |= leaving
        if np.all(done):
            break
    return out, a, v, taken


def _boundary_starts(
    cfg: ModelConfig, ns: NeighborhoodSystem, i: int, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Random points on the boundary of g_i, directions shaped like the noise."""
    da = rng.standard_normal((n, cfg.n_modes)) * cfg.noise.b
    dv = rng.standard_normal((n, cfg.n_modes)) * cfg.noise.b
    norm = norm_h_arrays(da, dv, cfg.eigenvalues, cfg.alpha)[:, None]
    center = ns.points[i].padded(cfg.n_modes)
    r = ns.inner_radii[i]
    return center.position + r * da / norm, center.velocity + r * dv / norm


@dataclass(frozen=True)
class ChainSample:
    """Boundary chain Z_n = S(tau_n) with the exit times sigma_(n-1) preceding each hit.

    complete : False if the time budget ran out before the requested number of hits.
    no_exit : True if the path never left the starting outer ball (deterministic limit).
    """

    taus: np.ndarray
    sigmas: np.ndarray
    indices: np.ndarray
    points: Tuple[State, ...]
    start_index: int
    n_requested: int
    complete: bool
    no_exit: bool

    @property
    def n_hits(self) -> int:
        return len(self.taus)

    def transition_counts(self, n_points: int) -> np.ndarray:
        counts = np.zeros((n_points, n_points), int)
        sequence = [self.start_index] + list(self.indices)
        for i, j in zip(sequence, sequence[1:]):
            counts[i, j] += 1
        return counts

    def transition_matrix(self, n_points: int) -> np.ndarray:
        """Empirical one-step matrix; rows without visits are zero."""
        counts = self.transition_counts(n_points).astype(float)
        totals = counts.sum(axis=1, keepdims=True)
        return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)

    def to_frame(self) -> pd.DataFrame:
        n = len(self.points[0].position) if self.points else 0
        data = {"n": np.arange(1, self.n_hits + 1), "sigma": self.sigmas, "tau": self.taus, "index": self.indices}
        data.update({f"a_{j + 1}": [p.position[j] for p in self.points] for j in range(n)})
        data.update({f"v_{j + 1}": [p.velocity[j] for p in self.points] for j in range(n)})
        return pd.DataFrame(data)


def boundary_chain_run(
    cfg: ModelConfig,
    ns: NeighborhoodSystem,
    eps: float,
    n_steps: int,
    seed: int,
    s0: State = None,
    start_index: int = 0,
    dt: float = 0.05,
    max_time: float = 1e4,
) -> ChainSample:
    """Run the boundary chain: alternately detect the exit from g~ and the next hit of
    the boundary of g on one simulated path.

    Parameters
    ----------
    cfg : ModelConfig
    ns : NeighborhoodSystem
    eps : float
    n_steps : int
        Number of chain steps (hits) wanted.
    seed : int
    s0 : State, optional
        Start inside g~; default: the boundary point of g_(start_index) along e_1.
    start_index : int, optional (default: 0)
    dt : float, optional (default: 0.05)
    max_time : float, optional (default: 1e4)
        Time budget of the whole run.

    Returns
    -------
    ChainSample
    """
    ns.validate(cfg)
    if s0 is None:
        direction = np.zeros(cfg.n_modes)
        direction[0] = 1.0
        s0 = ns.boundary_point(start_index, State.at_rest(direction), cfg)
    s0 = as_state(s0, cfg.n_modes)
    stepper = Stepper(cfg, dt)
    rng = make_rng(seed) if eps > 0 else None
    budget = _n_steps(max_time, dt)

    a, v = s0.position[None, :], s0.velocity[None, :]
    taus, sigmas, indices, points = [], [], [], []
    t, used, no_exit = 0.0, 0, False
    while len(taus) < n_steps and used < budget:
        passages, a, v, taken = _run_passages(
            cfg, ns, stepper, rng, eps, a, v, budget - used, t0=t
        )
        used += taken
        if not np.isfinite(passages.tau[0]):
            no_exit = not np.isfinite(passages.sigma[0])
            break
        z = passages.points[0]  # the chain restarts at the hit point Z_n
        a, v = z.position[None, :], z.velocity[None, :]
        t = float(passages.tau[0])
        taus.append(passages.tau[0])
        sigmas.append(passages.sigma[0])
        indices.append(int(passages.index[0]))
        points.append(passages.points[0])

    return ChainSample(
        taus=np.array(taus),
        sigmas=np.array(sigmas),
        indices=np.array(indices, int),
        points=tuple(points),
        start_index=start_index,
        n_requested=n_steps,
        complete=len(taus) == n_steps,
        no_exit=no_exit,
    )


# --- Transitions.


def clopper_pearson(k: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    """Exact binomial confidence interval for k successes out of n."""
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class TransitionEstimate:
    """Estimate of P~(boundary of g_i -> boundary of g_j) at one eps.

    bound_only : no hit observed; ``neg_eps_log`` is then the lower bound -eps ln(upper CI).
    """

    eps: float
    i: int
    j: int
    hits: int
    n_finished: int
    n_samples: int
    probabilities: np.ndarray
    p_hat: float
    ci_low: float
    ci_high: float
    neg_eps_log: float
    neg_eps_log_low: float
    neg_eps_log_high: float
    bound_only: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eps": self.eps,
            "i": self.i,
            "j": self.j,
            "hits": self.hits,
            "n_finished": self.n_finished,
            "n_samples": self.n_samples,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "neg_eps_log": self.neg_eps_log,
            "neg_eps_log_low": self.neg_eps_log_low,
            "neg_eps_log_high": self.neg_eps_log_high,
            "bound_only": self.bound_only,
        }


def _neg_eps_log(eps: float, p: float) -> float:
    return -eps * math.log(p) if p > 0 else math.inf


def estimate_transition(
    cfg: ModelConfig,
    ns: NeighborhoodSystem,
    eps_list: Iterable[float],
    i: int,
    j: int,
    n_samples: int,
    seed: int,
    dt: float = 0.05,
    max_time: float = 500.0,
    level: float = 0.95,
    verbose: bool = False,
) -> List[TransitionEstimate]:
    """Monte Carlo estimate of the probability that the chain started on the boundary of
    g_i next hits the boundary of g_j, with -eps ln P~ per eps.

    Parameters
    ----------
    cfg : ModelConfig
    ns : NeighborhoodSystem
    eps_list : Iterable[float]
    i, j : int
        Distinct indices into ``ns.points``.
    n_samples : int
        Replicas per eps, started at random points of the boundary of g_i.
    seed : int
    dt : float, optional (default: 0.05)
    max_time : float, optional (default: 500)
        Replicas that do not complete an exit and a hit within this time are dropped.
    level : float, optional (default: 0.95)
        Level of the Clopper-Pearson interval.

    Returns
    -------
    List[TransitionEstimate]
        One per eps; ``probabilities`` holds the estimates for all targets and sums to 1.
    """
    if i == j:
        raise ValueError("Transition estimates need distinct balls (i != j).")
    ns.validate(cfg)
    stepper = Stepper(cfg, dt)
    out = []
    for e, eps in enumerate(progress(list(eps_list), verbose, desc="eps")):
        rng = make_rng(seed, e)
        a, v = _boundary_starts(cfg, ns, i, n_samples, rng)
        passages, _, _, _ = _run_passages(cfg, ns, stepper, rng, eps, a, v, _n_steps(max_time, dt))
        finished = passages.index[passages.index >= 0]
        n = len(finished)
        counts = np.bincount(finished, minlength=ns.n_points)
        probabilities = counts / n if n else np.zeros(ns.n_points)
        k = int(counts[j])
        lo, hi = clopper_pearson(k, n, level) if n else (0.0, 1.0)
        p_hat = k / n if n else 0.0
        if verbose:
            print_status(f"eps = {eps:g}: {k} of {n} finished replicas hit ball {j}.")
        out.append(
            TransitionEstimate(
                eps=eps,
                i=i,
                j=j,
                hits=k,
                n_finished=n,
                n_samples=n_samples,
                probabilities=probabilities,
                p_hat=p_hat,
                ci_low=lo,
                ci_high=hi,
                neg_eps_log=_neg_eps_log(eps, hi) if k == 0 else _neg_eps_log(eps, p_hat),
                neg_eps_log_low=_neg_eps_log(eps, hi),
                neg_eps_log_high=_neg_eps_log(eps, lo),
                bound_only=k == 0,
            )
        )
    return out


# --- Moments.


@dataclass(frozen=True)
class ExitTimeMoments:
    """Empirical E exp(delta tau_1) per delta; ``stable`` flags finite, CI-bounded values."""

    deltas: np.ndarray
    mgf: np.ndarray
    half_width: np.ndarray
    stable: np.ndarray
    largest_stable_delta: Optional[float]
    taus: np.ndarray
    n_censored: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"delta": self.deltas, "mgf": self.mgf, "half_width": self.half_width, "stable": self.stable}
        )


def exit_time_moments(
    cfg: ModelConfig,
    ns: NeighborhoodSystem,
    eps: float,
    delta_list: Iterable[float],
    n_samples: int,
    seed: int = 0,
    i: int = 0,
    dt: float = 0.05,
    max_time: float = 500.0,
    level: float = 0.95,
) -> ExitTimeMoments:
    """Empirical moment generating function of the first chain time tau_1, started on
    the boundary of g_i.

    A delta is flagged unstable when replicas were censored by ``max_time``, when the
    CI half-width exceeds half the estimate, or when a single sample carries more than
    half of the sum (heavy tail).
    """
    deltas = np.asarray(list(delta_list), float)
    if np.any(deltas < 0) or np.any(np.diff(deltas) <= 0):
        raise ValueError(f"'delta_list' must be nonnegative and ascending; got {deltas}.")
    ns.validate(cfg)
    stepper = Stepper(cfg, dt)
    rng = make_rng(seed)
    a, v = _boundary_starts(cfg, ns, i, n_samples, rng)
    passages, _, _, _ = _run_passages(cfg, ns, stepper, rng, eps, a, v, _n_steps(max_time, dt))
    censored = ~np.isfinite(passages.tau)
    taus = np.where(censored, max_time, passages.tau)
    z = stats.norm.ppf((1 + level) / 2)

    mgf, half, stable = [], [], []
    with np.errstate(over="ignore"):
        for delta in deltas:
            values = np.exp(delta * taus)
            mean = float(np.mean(values))
            hw = float(z * np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else np.inf
            share = float(np.max(values) / np.sum(values)) if np.isfinite(mean) else 1.0
            ok = bool(
                delta == 0
                or (np.isfinite(mean) and not np.any(censored) and hw <= 0.5 * mean and share <= 0.5)
            )
            mgf.append(mean)
            half.append(hw)
            stable.append(ok)
    stable = np.array(stable)
    largest = float(deltas[stable][-1]) if np.any(stable) else None
    return ExitTimeMoments(deltas, np.array(mgf), np.array(half), stable, largest, taus, int(censored.sum()))


@dataclass(frozen=True)
class MomentSeries:
    """Ensemble estimate of E exp(kappa E(v(t))) and the trend test after burn-in."""

    times: np.ndarray
    values: np.ndarray
    half_width: np.ndarray
    kappa: float
    kappa_requested: float
    reductions: int
    slope: float
    p_value: float
    bounded: bool

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "value": self.values, "half_width": self.half_width})


def exponential_moment_check(
    cfg: ModelConfig,
    eps: float,
    kappa: float,
    T: float,
    dt: float = 0.05,
    n_replicas: int = 200,
    seed: int = 0,
    s0: State = None,
    burn_in: float = 0.5,
    sample_every: int = 10,
    level: float = 0.95,
    verbose: bool = False,
) -> MomentSeries:
    """Time series of the empirical E exp(kappa E(v(t))) over an ensemble of replicas.

    Parameters
    ----------
    cfg : ModelConfig
    eps : float
    kappa : float
        Exponent, 0 <= kappa <= alpha / (2 eps intensity).
    T : float
        Horizon.
    dt : float, optional (default: 0.05)
    n_replicas : int, optional (default: 200)
    seed : int, optional (default: 0)
    s0 : State, optional
        Common start; default zero.
    burn_in : float, optional (default: 0.5)
        Fraction of the horizon excluded from the trend test.
    sample_every : int, optional (default: 10)
    level : float, optional (default: 0.95)
        Confidence of the one-sided test for an upward trend.

    Returns
    -------
    MomentSeries
        ``bounded`` is False only if an upward trend is significant. On overflow kappa is
        halved until the series is finite; ``reductions`` counts the halvings.
    """
    if kappa < 0:
        raise ValueError(f"'kappa' must be nonnegative; got {kappa}.")
    if eps > 0 and kappa > cfg.kappa_threshold / eps * (1 + 1e-12):
        raise ValueError(
            f"'kappa' = {kappa} exceeds the admissible alpha / (2 eps intensity) = {cfg.kappa_threshold / eps:.4g}."
        )
    s0 = State.zeros(cfg.n_modes) if s0 is None else as_state(s0, cfg.n_modes)
    stepper = Stepper(cfg, dt)
    a0 = np.tile(s0.position, (n_replicas, 1))
    v0 = np.tile(s0.velocity, (n_replicas, 1))
    rng = make_rng(seed) if eps > 0 else None
    times, a, v, _ = stepper.run(
        a0, v0, _n_steps(T, dt), eps=eps, rng=rng, sample_every=sample_every
    )
    energies = energy_arrays(a, v, cfg)  # (K, R)

    requested, reductions = kappa, 0
    while True:
        with np.errstate(over="ignore"):
            samples = np.exp(kappa * energies)
        if np.all(np.isfinite(samples)) and np.max(samples) < 1e300:
            break
        kappa /= 2
        reductions += 1
        print_status(f"Exponential moment overflowed; reducing kappa to {kappa:.4g}.")

    values = samples.mean(axis=1)
    half = stats.norm.ppf((1 + level) / 2) * samples.std(axis=1) / math.sqrt(n_replicas)
    after = times >= burn_in * times[-1]
    if np.ptp(values[after]) == 0:
        slope, p_value = 0.0, 1.0
    else:
        fit = stats.linregress(times[after], values[after], alternative="greater")
        slope, p_value = float(fit.slope), float(fit.pvalue)
    if verbose:
        print_status(f"Moment series: slope {slope:.3g} after burn-in (p = {p_value:.3g}).")
    return MomentSeries(
        times=times,
        values=values,
        half_width=half,
        kappa=kappa,
        kappa_requested=requested,
        reductions=reductions,
        slope=slope,
        p_value=p_value,
        bounded=not (p_value < 1 - level),
    )
