"""Action functional, its adjoint gradient, and the minimum action method for the
quasipotentials V, V~ (avoiding other equilibria) and V from the attractor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .common import DivergenceError, print_status, progress
from .control import ControlPath, action_J
from .dynamics import (
    Connection,
    EquilibriumSet,
    Trajectory,
    _n_steps,
    feedback_control,
    flow_controlled,
    flow_deterministic,
    stabilizing_feedback,
)
from .fwgraph import QuasipotentialMatrix
from .model import ModelConfig
from .spectral import State, as_state, norm_h_arrays
from .stepper import Stepper

__all__ = [
    "ControlPath",
    "MAMOptions",
    "MAMResult",
    "action_J",
    "action_gradient",
    "action_objective",
    "quasipotential",
    "quasipotential_avoiding",
    "quasipotential_from_attractor",
    "quasipotential_matrix",
]

# Extra sigma stages, each 10x smaller, while a path still enters a forbidden ball.
BARRIER_TIGHTENINGS = 3


@dataclass(frozen=True)
class MAMOptions:
    """Settings of the minimum action method.

    Parameters
    ----------
    dt : float, optional (default: 0.05)
    T_schedule : Sequence[float], optional
        Horizons to try; default (2, 5, 10, 20) / alpha.
    eta_schedule : Sequence[float], optional
        Target radii, descending; default geometric from ``eta_max`` to ``eta_min``.
    eta_max, eta_min : float, optional (default: 0.2, 0.01)
    n_eta : int, optional (default: 5)
    sigma_schedule : Sequence[float], optional (default: (1, 0.1, 0.01, 0.001))
        Penalty continuation.
    n_control : int, optional
        Number of controlled modes; default the number the stabilizing feedback needs to
        steer into the smallest target ball (found per target).
    max_iter : int, optional (default: 200)
        Descent iterations per (eta, sigma) stage.
    ftol : float, optional (default: 1e-10)
        Relative objective decrease below which a stage stops.
    gap_rtol : float, optional (default: 0.25)
        A run is feasible for eta when its endpoint gap is at most eta (1 + gap_rtol).
    restarts : Sequence[str], optional (default: ('feedback', 'zero'))
        Initial controls: the stabilizing feedback towards the target, and zero.
    """

    dt: float = 0.05
    T_schedule: Optional[Tuple[float, ...]] = None
    eta_schedule: Optional[Tuple[float, ...]] = None
    eta_max: float = 0.2
    eta_min: float = 0.01
    n_eta: int = 5
    sigma_schedule: Tuple[float, ...] = (1.0, 0.1, 0.01, 0.001)
    n_control: Optional[int] = None
    max_iter: int = 200
    ftol: float = 1e-10
    gap_rtol: float = 0.25
    restarts: Tuple[str, ...] = ("feedback", "zero")

    def __post_init__(self):
        for name in ("T_schedule", "eta_schedule", "sigma_schedule", "restarts"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))  # because frozen
        if self.eta_schedule is None:
            if not 0 < self.eta_min <= self.eta_max:
                raise ValueError(f"Need 0 < eta_min <= eta_max; got {self.eta_min}, {self.eta_max}.")
            etas = tuple(np.geomspace(self.eta_max, self.eta_min, self.n_eta).tolist())
            object.__setattr__(self, "eta_schedule", etas)
        if any(e <= 0 for e in self.eta_schedule) or list(self.eta_schedule) != sorted(
            self.eta_schedule, reverse=True
        ):
            raise ValueError(f"'eta_schedule' must be positive and descending; got {self.eta_schedule}.")
        for r in self.restarts:
            if r not in ("feedback", "zero"):
                raise ValueError(f"Restarts must be one of 'feedback', 'zero'; got '{r}'.")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> MAMOptions:
        return cls(**data)

    def horizons(self, cfg: ModelConfig) -> Tuple[float, ...]:
        if self.T_schedule is not None:
            return self.T_schedule
        return tuple(c / cfg.alpha for c in (2, 5, 10, 20))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dt": self.dt,
            "T_schedule": None if self.T_schedule is None else list(self.T_schedule),
            "eta_schedule": list(self.eta_schedule),
            "sigma_schedule": list(self.sigma_schedule),
            "n_control": self.n_control,
            "max_iter": self.max_iter,
            "ftol": self.ftol,
            "gap_rtol": self.gap_rtol,
            "restarts": list(self.restarts),
        }


@dataclass(frozen=True)
class MAMResult:
    """Best feasible control found and the value-vs-eta curve.

    value : action_J(path); +inf if no run was feasible (then ``feasible`` is False).
    eta : smallest radius on the schedule with a feasible run.
    curve : (eta, value) pairs; value is nonincreasing in eta.
    reference_value : for runs avoiding balls, the unconstrained value min(V, V~);
        otherwise equal to ``value``.
    min_clearance : smallest distance of the path to the avoided balls, minus their radius;
        nonnegative for feasible results.
    n_control : number of controlled modes.
    log : one record per (T, restart, eta) run.

    Reported values are upper bounds on the infimum.
    """

    value: float
    path: ControlPath
    endpoint_gap: float
    eta: float
    feasible: bool
    T: float
    restart: str
    curve: Tuple[Tuple[float, float], ...]
    log: Tuple[Dict[str, Any], ...] = field(repr=False, default=())
    reference_value: float = None
    min_clearance: float = math.inf
    n_control: int = None

    def __post_init__(self):
        if self.reference_value is None:
            object.__setattr__(self, "reference_value", self.value)  # because frozen

    def to_dict(self) -> Dict[str, Any]:
        def num(x):
            return x if math.isfinite(x) else "inf"

        return {
            "value": num(self.value),
            "reference_value": num(self.reference_value),
            "endpoint_gap": num(self.endpoint_gap),
            "eta": self.eta,
            "feasible": self.feasible,
            "T": self.T,
            "restart": self.restart,
            "min_clearance": num(self.min_clearance),
            "n_control": self.n_control,
            "curve": [[eta, num(v)] for eta, v in self.curve],
            "log": [{k: num(v) if isinstance(v, float) else v for k, v in r.items()} for r in self.log],
        }


# --- Objective and adjoint gradient.


class _Problem:
    """Penalized objective J(phi) + |gap - eta|_+^2 / 2 sigma (+ barrier) on a fixed grid."""

    def __init__(
        self,
        cfg: ModelConfig,
        u1: State,
        target: State,
        eta: float,
        sigma: float,
        dt: float,
        n_control: int,
        forbidden: Sequence[State] = (),
        rho_avoid: float = None,
        barrier_radius: float = None,
    ):
        self.cfg, self.u1, self.target = cfg, u1, target
        self.eta, self.sigma = eta, sigma
        self.stepper = Stepper(cfg, dt)
        self.dt = dt
        self.n_control = n_control
        self.weights = cfg.noise.b[:n_control] ** -2
        self.forbidden = [as_state(s, cfg.n_modes) for s in forbidden]
        self.rho_avoid = rho_avoid
        self.barrier_radius = rho_avoid if barrier_radius is None else barrier_radius

    def _dist_grad(self, a, v, center):
        """Distance to ``center`` and its gradient w.r.t. (a, v)."""
        cfg = self.cfg
        da, dv = a - center.position, v - center.velocity
        d = float(norm_h_arrays(da, dv, cfg.eigenvalues, cfg.alpha))
        if d == 0:
            return 0.0, np.zeros_like(a), np.zeros_like(v)
        z = dv + cfg.alpha * da
        return d, (cfg.eigenvalues * da + cfg.alpha * z) / d, z / d

    def forward(self, coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        controls = np.zeros((len(coeffs), self.cfg.n_modes))
        controls[:, : self.n_control] = coeffs
        _, a, v, _ = self.stepper.run(self.u1.position, self.u1.velocity, len(coeffs), controls=controls)
        return a, v, controls

    def parts(self, coeffs: np.ndarray, a: np.ndarray, v: np.ndarray) -> Dict[str, float]:
        action = float(0.5 * self.dt * np.sum(coeffs**2 * self.weights))
        gap = self._dist_grad(a[-1], v[-1], self.target)[0]
        penalty = max(0.0, gap - self.eta) ** 2 / (2 * self.sigma)
        barrier, clearance = 0.0, math.inf
        for center in self.forbidden:
            d = norm_h_arrays(a[1:] - center.position, v[1:] - center.velocity, self.cfg.eigenvalues, self.cfg.alpha)
            barrier += float(self.dt * np.sum(np.maximum(0.0, self.barrier_radius - d) ** 2)) / (2 * self.sigma)
            clearance = min(clearance, float(np.min(d)) - self.rho_avoid)
        return {
            "objective": action + penalty + barrier,
            "action": action,
            "gap": gap,
            "penalty": penalty,
            "barrier": barrier,
            "clearance": clearance,
        }

    def value(self, coeffs: np.ndarray) -> float:
        try:
            a, v, _ = self.forward(coeffs)
        except DivergenceError:
            return math.inf
        return self.parts(coeffs, a, v)["objective"]

    def gradient(self, coeffs: np.ndarray) -> Tuple[float, np.ndarray]:
        """Objective and its Euclidean gradient w.r.t. the coefficients (adjoint sweep)."""
        a, v, controls = self.forward(coeffs)
        objective = self.parts(coeffs, a, v)["objective"]
        K = len(coeffs)

        gap, ga, gv = self._dist_grad(a[K], v[K], self.target)
        excess = max(0.0, gap - self.eta) / self.sigma
        lam_a, lam_v = excess * ga, excess * gv
        grad = np.empty_like(coeffs)
        for k in range(K, 0, -1):
            if self.forbidden:
                da, dv = self._barrier_grad(a[k], v[k])
                lam_a, lam_v = lam_a + da, lam_v + dv
            lam_a, lam_v, g_phi = self.stepper.step_adjoint(a[k - 1], v[k - 1], controls[k - 1], lam_a, lam_v)
            grad[k - 1] = g_phi[: self.n_control] + self.dt * coeffs[k - 1] * self.weights
        return objective, grad

    def _barrier_grad(self, a, v):
        out_a, out_v = np.zeros_like(a), np.zeros_like(v)
        for center in self.forbidden:
            d, ga, gv = self._dist_grad(a, v, center)
            depth = max(0.0, self.barrier_radius - d)
            if depth > 0:
                out_a -= self.dt * depth / self.sigma * ga
                out_v -= self.dt * depth / self.sigma * gv
        return out_a, out_v


def action_objective(
    phi: ControlPath, u1: State, target: State, eta: float, sigma: float, cfg: ModelConfig
) -> float:
    """J_T(phi) + max(0, |S^phi(T; u1) - target| - eta)^2 / (2 sigma)."""
    problem = _Problem(cfg, as_state(u1, cfg.n_modes), as_state(target, cfg.n_modes), eta, sigma, phi.dt, phi.n_control)
    return problem.value(np.array(phi.coeffs))


def action_gradient(
    phi: ControlPath, u1: State, target: State, eta: float, sigma: float, cfg: ModelConfig
) -> ControlPath:
    """Gradient of ``action_objective`` w.r.t. the control coefficients, by the discrete
    adjoint of the stepper.

    Returns
    -------
    ControlPath
        Same grid and modes as ``phi``; entry (k, j) is the derivative w.r.t. phi_j(t_k).

    Notes
    -----
    Raises DivergenceError if the forward flow blows up.
    """
    problem = _Problem(cfg, as_state(u1, cfg.n_modes), as_state(target, cfg.n_modes), eta, sigma, phi.dt, phi.n_control)
    _, grad = problem.gradient(np.array(phi.coeffs))
    return phi.with_coeffs(grad)


# --- Optimizer.


def _descend(problem: _Problem, x: np.ndarray, max_iter: int, ftol: float) -> Tuple[np.ndarray, int]:
    """Gradient descent in the H_theta x L2(0, T) metric with Barzilai-Borwein steps and
    Armijo backtracking."""
    riesz = 1 / (problem.weights * problem.dt)  # b^2 / dt
    f, g = problem.gradient(x)
    step = 1.0
    for it in range(max_iter):
        G = riesz * g
        slope = float(np.sum(g * G))
        if slope <= 1e-300:
            return x, it
        t = step
        while True:
            x_new = x - t * G
            f_new = problem.value(x_new)
            if f_new <= f - 1e-4 * t * slope:
                break
            t /= 2
            if t < 1e-14:
                return x, it
        f_new, g_new = problem.gradient(x_new)
        s, y = x_new - x, g_new - g
        sy = float(np.sum(s * y))
        step = float(np.sum(s * s / riesz)) / sy if sy > 0 else 2 * t
        done = f - f_new <= ftol * (1 + abs(f))
        x, f, g = x_new, f_new, g_new
        if done:
            return x, it + 1
    return x, max_iter


def _zero_path(dt: float, n_control: int) -> ControlPath:
    return ControlPath.zeros(1, dt, n_control)


def _min_clearance(traj: Trajectory, forbidden: Sequence[State], rho: float, cfg: ModelConfig) -> float:
    clearance = math.inf
    for center in forbidden:
        clearance = min(clearance, float(np.min(traj.distances(as_state(center, cfg.n_modes), cfg)[1:])) - rho)
    return clearance


def _initial_controls(
    cfg: ModelConfig, u1: State, u2: State, n_steps: int, n_control: int, restart: str, dt: float
) -> Optional[np.ndarray]:
    if restart == "zero":
        return np.zeros((n_steps, n_control))
    law = stabilizing_feedback(cfg, u2, n_control, hold=True)
    try:
        _, _, _, applied = Stepper(cfg, dt).run(u1.position, u1.velocity, n_steps, feedback=law)
    except DivergenceError:
        return None
    return applied[:, :n_control]


def _control_modes(u1: State, u2: State, gap: float, cfg: ModelConfig, opts: MAMOptions) -> int:
    """Modes the stabilizing feedback needs to steer from the largest target ball (entered
    from the side of ``u1``) into the smallest one."""
    if opts.n_control is not None:
        return opts.n_control
    rho1 = min(opts.eta_schedule[0], gap)
    rho2 = min(opts.eta_schedule[-1], rho1 / 2)
    v0 = u2 + (u1 - u2) * (rho1 / gap)
    try:
        return feedback_control(v0, u2, rho1, rho2, cfg, dt=opts.dt).n_control
    except DivergenceError:
        return cfg.n_modes


def _minimize(
    u1: State,
    u2: State,
    cfg: ModelConfig,
    opts: MAMOptions,
    forbidden: Sequence[State] = (),
    rho_avoid: float = None,
    verbose: bool = False,
) -> MAMResult:
    u1, u2 = as_state(u1, cfg.n_modes), as_state(u2, cfg.n_modes)
    if opts.n_control is not None and not 1 <= opts.n_control <= cfg.n_modes:
        raise ValueError(f"'n_control' must be in 1..{cfg.n_modes}; got {opts.n_control}.")
    etas = opts.eta_schedule
    eta_min = etas[-1]

    # Trivial and downhill cases cost nothing.
    gap0 = cfg.distance(u1, u2)
    if gap0 <= eta_min:
        n_control = opts.n_control or cfg.n_modes
        curve = tuple((eta, 0.0) for eta in sorted(etas))
        return MAMResult(
            0.0, _zero_path(opts.dt, n_control), gap0, eta_min, True, 0.0, "identity", curve, n_control=n_control
        )
    n_control = _control_modes(u1, u2, gap0, cfg, opts)
    horizons = opts.horizons(cfg)
    try:
        drift = flow_deterministic(u1, max(horizons), opts.dt, cfg)
        gaps = drift.distances(u2, cfg)
        hits = np.flatnonzero(gaps <= eta_min)
        if len(hits) and hits[0] > 0:
            k = int(hits[0])
            head = Trajectory(drift.times[: k + 1], drift.positions[: k + 1], drift.velocities[: k + 1])
            clearance = _min_clearance(head, forbidden, rho_avoid, cfg) if forbidden else math.inf
            if clearance >= 0:
                path = ControlPath.zeros(k, opts.dt, n_control)
                curve = tuple((eta, 0.0) for eta in sorted(etas))
                return MAMResult(
                    0.0, path, float(gaps[k]), eta_min, True, k * opts.dt, "downhill", curve,
                    min_clearance=clearance, n_control=n_control,
                )
    except DivergenceError:
        pass

    # The barrier pushes paths out of balls slightly larger than the forbidden ones; only
    # paths that clear the forbidden balls themselves are accepted.
    barrier_radius = rho_avoid * (1 + opts.gap_rtol) if forbidden else None
    log, candidates = [], []
    cells = [(T, restart) for T in horizons for restart in opts.restarts]
    for T, restart in progress(cells, verbose, desc="MAM"):
        n_steps = _n_steps(T, opts.dt)
        x = _initial_controls(cfg, u1, u2, n_steps, n_control, restart, opts.dt)
        if x is None:
            continue
        for eta in etas:
            iterations = 0
            sigmas = list(opts.sigma_schedule)
            tightenings = BARRIER_TIGHTENINGS if forbidden else 0
            while sigmas:
                sigma = sigmas.pop(0)
                problem = _Problem(
                    cfg, u1, u2, eta, sigma, opts.dt, n_control, forbidden, rho_avoid, barrier_radius
                )
                try:
                    x, its = _descend(problem, x, opts.max_iter, opts.ftol)
                except DivergenceError:
                    its = 0
                iterations += its
                if not sigmas and tightenings:
                    try:
                        a, v, _ = problem.forward(x)
                    except DivergenceError:
                        break
                    if problem.parts(x, a, v)["clearance"] < 0:
                        sigmas.append(sigma / 10)
                        tightenings -= 1
            try:
                a, v, _ = problem.forward(x)
            except DivergenceError:
                continue
            parts = problem.parts(x, a, v)
            path = ControlPath(x, opts.dt)
            record = {
                "T": n_steps * opts.dt,
                "restart": restart,
                "eta": eta,
                "value": action_J(path, cfg.noise),
                "gap": parts["gap"],
                "clearance": parts["clearance"],
                "iterations": iterations,
            }
            record["feasible"] = record["gap"] <= eta * (1 + opts.gap_rtol) and record["clearance"] >= 0
            log.append(record)
            candidates.append((record, path))
            if verbose:
                print_status(
                    f"T = {record['T']:g}, {restart}, eta = {eta:.3g}: value {record['value']:.5g},"
                    f" gap {record['gap']:.3g}."
                )

    def admissible(record, eta) -> bool:
        return record["gap"] <= eta * (1 + opts.gap_rtol) and record["clearance"] >= 0

    curve = []
    for eta in sorted(etas):
        values = [r["value"] for r, _ in candidates if admissible(r, eta)]
        curve.append((eta, min(values) if values else math.inf))
    for eta, value in curve:  # ascending eta: first finite is the smallest feasible eta
        if math.isfinite(value):
            record, path = min(
                ((r, p) for r, p in candidates if admissible(r, eta) and r["value"] == value),
                key=lambda rp: rp[0]["gap"],
            )
            return MAMResult(
                value, path, record["gap"], eta, True, record["T"], record["restart"], tuple(curve),
                tuple(log), min_clearance=record["clearance"], n_control=n_control,
            )
    best = min(candidates, key=lambda rp: rp[0]["gap"]) if candidates else None
    return MAMResult(
        math.inf,
        best[1] if best else _zero_path(opts.dt, n_control),
        best[0]["gap"] if best else gap0,
        eta_min,
        False,
        best[0]["T"] if best else 0.0,
        best[0]["restart"] if best else "none",
        tuple(curve),
        tuple(log),
        min_clearance=best[0]["clearance"] if best else math.inf,
        n_control=n_control,
    )


def quasipotential(
    u1: State, u2: State, cfg: ModelConfig, opts: MAMOptions = None, verbose: bool = False
) -> MAMResult:
    """Minimum action to steer ``u1`` into small neighborhoods of ``u2``.

    Parameters
    ----------
    u1, u2 : State
    cfg : ModelConfig
    opts : MAMOptions, optional
    verbose : bool, optional (default: False)

    Returns
    -------
    MAMResult

    Notes
    -----
    For every horizon and restart the penalized objective is minimized with continuation
    in decreasing eta and, per eta, decreasing sigma. If the uncontrolled flow from ``u1``
    reaches the smallest target ball, the value is 0.
    """
    return _minimize(u1, u2, cfg, opts or MAMOptions(), verbose=verbose)


def quasipotential_avoiding(
    u1: State,
    u2: State,
    forbidden: Sequence[State],
    rho_avoid: float,
    cfg: ModelConfig,
    opts: MAMOptions = None,
    verbose: bool = False,
) -> MAMResult:
    """V~(u1, u2): as ``quasipotential``, over paths that stay out of the balls of radius
    ``rho_avoid`` around the ``forbidden`` points.

    Returns the unconstrained result if its path already avoids the balls; otherwise the
    result of a run with a barrier penalty, with ``reference_value`` = min(V, V~).
    """
    opts = opts or MAMOptions()
    forbidden = [as_state(s, cfg.n_modes) for s in forbidden]
    if not forbidden:
        return quasipotential(u1, u2, cfg, opts, verbose)
    if not rho_avoid > 0:
        raise ValueError(f"'rho_avoid' must be positive; got {rho_avoid}.")
    u1, u2 = as_state(u1, cfg.n_modes), as_state(u2, cfg.n_modes)
    for s in forbidden:
        if min(cfg.distance(s, u1), cfg.distance(s, u2)) <= rho_avoid:
            raise ValueError("Forbidden balls must not contain the start or the target.")

    free = quasipotential(u1, u2, cfg, opts, verbose)
    traj = flow_controlled(u1, free.path, cfg)
    clearance = _min_clearance(traj, forbidden, rho_avoid, cfg)
    if clearance >= 0:
        return replace(free, min_clearance=clearance)
    constrained = _minimize(u1, u2, cfg, opts, forbidden, rho_avoid, verbose)
    return replace(constrained, reference_value=min(free.value, constrained.value))


def quasipotential_from_attractor(
    u_star: State,
    eq: EquilibriumSet,
    cfg: ModelConfig,
    opts: MAMOptions = None,
    connections: Iterable[Connection] = (),
    max_waypoints: int = 10,
    verbose: bool = False,
) -> float:
    """V from the attractor: minimum of the quasipotential to ``u_star`` over the
    equilibria and the waypoints of the scanned connections between them.

    Parameters
    ----------
    u_star : State
    eq : EquilibriumSet
        Nonempty.
    cfg : ModelConfig
    opts : MAMOptions, optional
    connections : Iterable[Connection], optional
        Output of ``heteroclinic_scan``; its waypoints are reached at zero cost.
    max_waypoints : int, optional (default: 10)
        Waypoints used per connection (evenly spaced).

    Returns
    -------
    float
    """
    if not len(eq):
        raise ValueError("Need at least one equilibrium.")
    opts = opts or MAMOptions()
    seeds = list(eq.states)
    for connection in connections:
        points = connection.waypoints
        if points:
            idx = np.unique(np.linspace(0, len(points) - 1, min(max_waypoints, len(points))).astype(int))
            seeds.extend(points[i] for i in idx)
    u_star = as_state(u_star, cfg.n_modes)
    # nearest first; a zero value stops the search
    seeds.sort(key=lambda s: cfg.distance(s, u_star))
    best = math.inf
    for seed in seeds:
        result = quasipotential(seed, u_star, cfg, opts, verbose)
        best = min(best, result.value)
        if best == 0:
            break
    return best


def quasipotential_matrix(
    cfg: ModelConfig,
    eq: EquilibriumSet,
    opts: MAMOptions = None,
    avoiding: bool = False,
    rho_avoid: float = None,
    extra: State = None,
    verbose: bool = False,
) -> Tuple[QuasipotentialMatrix, Dict[Tuple[int, int], MAMResult]]:
    """Quasipotentials between all equilibria (and the optional extra point).

    Parameters
    ----------
    cfg : ModelConfig
    eq : EquilibriumSet
    opts : MAMOptions, optional
    avoiding : bool, optional (default: False)
        Compute V~ (paths avoid the balls of radius ``rho_avoid`` around all other
        points) instead of V.
    rho_avoid : float, optional
    extra : State, optional
        Additional point, appended as the last row and column.

    Returns
    -------
    QuasipotentialMatrix, Dict
        The matrix and the optimizer result per off-diagonal entry.
    """
    opts = opts or MAMOptions()
    points = list(eq.states) + ([as_state(extra, cfg.n_modes)] if extra is not None else [])
    n = len(points)
    values = np.zeros((n, n))
    provenance = [["diagonal" if i == j else "" for j in range(n)] for i in range(n)]
    results = {}
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    for i, j in progress(pairs, verbose, desc="pairs"):
        if avoiding:
            others = [points[k] for k in range(n) if k not in (i, j)]
            result = quasipotential_avoiding(points[i], points[j], others, rho_avoid, cfg, opts)
        else:
            result = quasipotential(points[i], points[j], cfg, opts)
        values[i, j] = result.value
        provenance[i][j] = f"mam:{result.restart}:T={result.T:g}:eta={result.eta:g}"
        results[(i, j)] = result
    return QuasipotentialMatrix(values, provenance), results
