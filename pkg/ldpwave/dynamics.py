"""Deterministic and controlled flows, equilibria and their stability, the stabilizing
feedback control and the connection scan between equilibria."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from .common import InvalidStateError, make_rng, print_status
from .control import ControlPath, action_J
from .model import ModelConfig
from .spectral import State, as_state, norm_h_arrays, project_PN
from .stepper import Stepper


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of a flow; positions and velocities have shape (n_samples, N)."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int) -> State:
        return State(self.positions[k], self.velocities[k])

    @property
    def initial(self) -> State:
        return self.state(0)

    @property
    def final(self) -> State:
        return self.state(-1)

    def states(self) -> Iterator[State]:
        for k in range(len(self)):
            yield self.state(k)

    def norms(self, cfg: ModelConfig) -> np.ndarray:
        return norm_h_arrays(self.positions, self.velocities, cfg.eigenvalues, cfg.alpha)

    def distances(self, s: State, cfg: ModelConfig) -> np.ndarray:
        """Phase-space distance of every sampled state to ``s``."""
        return norm_h_arrays(
            self.positions - s.position, self.velocities - s.velocity, cfg.eigenvalues, cfg.alpha
        )

    def to_frame(self) -> pd.DataFrame:
        n = self.positions.shape[1]
        data = {"t": self.times}
        data.update({f"a_{j + 1}": self.positions[:, j] for j in range(n)})
        data.update({f"v_{j + 1}": self.velocities[:, j] for j in range(n)})
        return pd.DataFrame(data)


def _n_steps(T: float, dt: float) -> int:
    if not T > 0:
        raise ValueError(f"'T' must be positive; got {T}.")
    return max(1, math.ceil(T / dt - 1e-9))


def flow_deterministic(
    s0: State, T: float, dt: float, cfg: ModelConfig, sample_every: int = 1
) -> Trajectory:
    """Integrate the limiting equation (no noise, no control) over [0, T].

    Parameters
    ----------
    s0 : State
        Initial state.
    T : float
        Horizon; rounded up to a whole number of steps.
    dt : float
        Time step.
    cfg : ModelConfig
    sample_every : int, optional (default: 1)
        Keep every n-th state; endpoints are always kept.

    Returns
    -------
    Trajectory
    """
    s0 = as_state(s0, cfg.n_modes)
    stepper = Stepper(cfg, dt)
    times, a, v, _ = stepper.run(s0.position, s0.velocity, _n_steps(T, dt), sample_every=sample_every)
    return Trajectory(times, a, v)


def flow_controlled(
    s0: State, phi: ControlPath, cfg: ModelConfig, sample_every: int = 1
) -> Trajectory:
    """Integrate the controlled equation with forcing h + phi, phi piecewise constant on
    its own time grid. phi = 0 reproduces ``flow_deterministic`` exactly."""
    s0 = as_state(s0, cfg.n_modes)
    stepper = Stepper(cfg, phi.dt)
    controls = phi.padded(cfg.n_modes)
    if not np.any(controls):
        controls = None  # same stepper path as the uncontrolled flow
    times, a, v, _ = stepper.run(
        s0.position, s0.velocity, phi.n_steps, controls=controls, sample_every=sample_every
    )
    return Trajectory(times, a, v)


# --- Stability.


@dataclass(frozen=True)
class StabilityReport:
    """Linearization spectrum of an equilibrium.

    label : 'stable', 'unstable' or 'marginal' (some |Re mu| below tolerance).
    margin : smallest |Re mu|; the hyperbolicity margin.
    """

    label: str
    eigenvalues: np.ndarray
    margin: float
    max_real: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "margin": self.margin,
            "max_real": self.max_real,
            "eigenvalues": [[float(mu.real), float(mu.imag)] for mu in self.eigenvalues],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> StabilityReport:
        mu = np.array([complex(re, im) for re, im in data["eigenvalues"]])
        return cls(data["label"], mu, data["margin"], data["max_real"])


def linearization(position: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """First-order block operator [[0, I], [-(Lambda + Df), -gamma I]] at ``position``."""
    n = cfg.n_modes
    stiffness = np.diag(cfg.eigenvalues) + cfg.nonlinear_jacobian(position)
    return np.block([[np.zeros((n, n)), np.eye(n)], [-stiffness, -cfg.gamma * np.eye(n)]])


def classify_stability(u_hat: State, cfg: ModelConfig, tol: float = 1e-8) -> StabilityReport:
    """Classify an equilibrium by the eigenvalues of its linearization.

    Parameters
    ----------
    u_hat : State
        Equilibrium (zero velocity).
    cfg : ModelConfig
    tol : float, optional (default: 1e-8)
        Eigenvalues with |Re mu| < tol make the equilibrium 'marginal'.

    Returns
    -------
    StabilityReport
    """
    u_hat = as_state(u_hat, cfg.n_modes)
    if np.any(u_hat.velocity != 0) or np.linalg.norm(cfg.residual(u_hat.position)) > 1e-6:
        raise InvalidStateError("State is not an equilibrium of the limiting equation.")
    mu = linalg.eigvals(linearization(u_hat.position, cfg))
    mu = mu[np.lexsort((-mu.imag, -mu.real))]
    margin = float(np.min(np.abs(mu.real)))
    max_real = float(np.max(mu.real))
    if margin < tol:
        label = "marginal"
    elif max_real < 0:
        label = "stable"
    else:
        label = "unstable"
    return StabilityReport(label, mu, margin, max_real)


# --- Equilibria.


@dataclass(frozen=True)
class Equilibrium:
    state: State
    stability: StabilityReport
    residual: float
    degenerate: bool
    certified: bool
    residual_history: Tuple[float, ...] = ()

    @property
    def label(self) -> str:
        return self.stability.label

    @property
    def is_stable(self) -> bool:
        return self.stability.label == "stable"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "position": self.state.position.tolist(),
            "stability": self.stability.to_dict(),
            "residual": self.residual,
            "degenerate": self.degenerate,
            "certified": self.certified,
            "residual_history": list(self.residual_history),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Equilibrium:
        return cls(
            State.at_rest(data["position"]),
            StabilityReport.from_dict(data["stability"]),
            data["residual"],
            data["degenerate"],
            data["certified"],
            tuple(data.get("residual_history", ())),
        )


@dataclass(frozen=True)
class EquilibriumSet:
    """Equilibria of the limiting equation, ordered by their first modal coefficient."""

    equilibria: Tuple[Equilibrium, ...]

    def __post_init__(self):
        object.__setattr__(self, "equilibria", tuple(self.equilibria))  # because frozen

    def __len__(self) -> int:
        return len(self.equilibria)

    def __getitem__(self, i: int) -> Equilibrium:
        return self.equilibria[i]

    def __iter__(self) -> Iterator[Equilibrium]:
        return iter(self.equilibria)

    @property
    def states(self) -> List[State]:
        return [e.state for e in self.equilibria]

    @property
    def labels(self) -> List[str]:
        return [e.label for e in self.equilibria]

    @property
    def stable_indices(self) -> List[int]:
        return [i for i, e in enumerate(self.equilibria) if e.is_stable]

    @property
    def unstable_indices(self) -> List[int]:
        return [i for i, e in enumerate(self.equilibria) if e.label == "unstable"]

    def nearest(self, s: State, cfg: ModelConfig) -> Tuple[int, float]:
        """Index of and distance to the equilibrium closest to ``s``."""
        distances = [cfg.distance(s, e.state) for e in self.equilibria]
        i = int(np.argmin(distances))
        return i, float(distances[i])

    def to_dict(self) -> Dict[str, Any]:
        return {"equilibria": [e.to_dict() for e in self.equilibria]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> EquilibriumSet:
        return cls(tuple(Equilibrium.from_dict(d) for d in data["equilibria"]))


def _newton(
    cfg: ModelConfig, a: np.ndarray, tol: float, max_iter: int
) -> Tuple[Optional[np.ndarray], List[float]]:
    """Damped Newton iteration on the modal residual; None if it fails."""
    lam = np.diag(cfg.eigenvalues)
    r = cfg.residual(a)
    rn = float(np.linalg.norm(r))
    history = [rn]
    for _ in range(max_iter):
        J = lam + cfg.nonlinear_jacobian(a)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while True:
            a_new = a + t * step
            r_new = cfg.residual(a_new)
            rn_new = float(np.linalg.norm(r_new))
            if rn_new <= (1 - 1e-4 * t) * rn or rn_new < tol or t < 1e-4:
                break
            t /= 2
        if not np.isfinite(rn_new) or np.linalg.norm(a_new) > 1e6:
            return None, history
        a, r, rn = a_new, r_new, rn_new
        history.append(rn)
        # Singular roots converge linearly; keep iterating until the steps vanish too.
        if rn < tol and np.linalg.norm(t * step) <= 1e-10 * (1 + np.linalg.norm(a)):
            break
    return (a if rn < tol else None), history


def _is_quadratic(history: List[float]) -> bool:
    """Convergence order estimate from the last three residuals above round-off."""
    r = [x for x in history if x > 1e-13]
    if len(r) < 3:
        return True
    r0, r1, r2 = r[-3:]
    if r1 >= r0:
        return False
    return math.log(r2 / r1) / math.log(r1 / r0) >= 1.5


def find_equilibria(
    cfg: ModelConfig,
    seeds: Iterable[Any] = (),
    tol: float = 1e-10,
    max_iter: int = 100,
    dedup_distance: float = 1e-6,
) -> EquilibriumSet:
    """Equilibria of the limiting equation, by Newton multistart.

    Parameters
    ----------
    cfg : ModelConfig
    seeds : Iterable, optional
        Additional start positions (modal vectors or States).
    tol : float, optional (default: 1e-10)
        Residual tolerance of -Laplace(u) + f(u) - h in modal Euclidean norm.
    max_iter : int, optional (default: 100)
    dedup_distance : float, optional (default: 1e-6)
        Roots closer than this (phase-space norm) are merged.

    Returns
    -------
    EquilibriumSet

    Notes
    -----
    Starts from the origin and from +-c e_j / sqrt(lambda_j) for j <= 3, c in {0.5, 1, 2}.
    A root with singular Jacobian is reported with ``degenerate=True``.
    """
    n = cfg.n_modes
    starts = [np.zeros(n)]
    for j in range(min(3, n)):
        for c in (0.5, 1.0, 2.0):
            for sign in (1.0, -1.0):
                seed = np.zeros(n)
                seed[j] = sign * c / math.sqrt(cfg.eigenvalues[j])
                starts.append(seed)
    for seed in seeds:
        position = seed.position if isinstance(seed, State) else np.asarray(seed, float)
        starts.append(State.at_rest(position).padded(n).position)

    roots = []
    for start in starts:
        a, history = _newton(cfg, start, tol, max_iter)
        if a is None:
            continue
        candidate = State.at_rest(a)
        if any(cfg.distance(candidate, other) < dedup_distance for other, _ in roots):
            continue
        roots.append((candidate, history))

    equilibria = []
    for state, history in sorted(roots, key=lambda item: tuple(item[0].position)):
        J = np.diag(cfg.eigenvalues) + cfg.nonlinear_jacobian(state.position)
        singular = np.linalg.svd(J, compute_uv=False)
        degenerate = bool(singular[-1] <= 1e-8 * singular[0])
        equilibria.append(
            Equilibrium(
                state,
                classify_stability(state, cfg),
                float(np.linalg.norm(cfg.residual(state.position))),
                degenerate,
                not degenerate and _is_quadratic(history),
                tuple(history),
            )
        )
    return EquilibriumSet(tuple(equilibria))


# --- Feedback control.


def stabilizing_feedback(
    cfg: ModelConfig, target: State, n_control: int, hold: bool = True
):
    """Zero-order-hold feedback a -> P_N[f(a) - f(target)] (+ P_N[Lambda t + f(t) - h]).

    With all modes controlled the closed loop is the damped linear wave equation for the
    deviation from ``target``. The hold term, needed when ``target`` is not an
    equilibrium, is left out with ``hold=False``.
    """
    f_target = cfg.nonlinear_modes(target.position)
    offset = 0.0
    if hold:
        offset = project_PN(cfg.residual(target.position), n_control)

    def law(a: np.ndarray) -> np.ndarray:
        return project_PN(cfg.nonlinear_modes(a) - f_target, n_control) + offset

    return law


@dataclass(frozen=True)
class FeedbackResult:
    """Outcome of ``feedback_control``.

    control : realized open-loop control on the first ``n_control`` modes.
    decay_ok : |S(t) - u_hat|^2 <= tol_factor e^(-alpha t) |v0 - u_hat|^2 on the grid.
    sup_norms : realized sup-norm of the trajectory for every tried N.
    """

    control: ControlPath
    trajectory: Trajectory
    n_control: int
    T: float
    decay_ok: bool
    endpoint_distance: float
    endpoint_ok: bool
    energy: float
    tried: Tuple[int, ...]
    sup_norms: Tuple[float, ...]


def feedback_control(
    v0: State,
    u_hat: State,
    rho1: float,
    rho2: float,
    cfg: ModelConfig,
    dt: float = 0.05,
    n_start: int = 4,
    tol_factor: float = 1.05,
    verbose: bool = False,
) -> FeedbackResult:
    """Steer ``v0`` from B(u_hat, rho1) into B(u_hat, rho2) with the feedback
    phi = P_N[f(v) - f(u_hat)] over T = 2 ln(rho1 / rho2) / alpha.

    Parameters
    ----------
    v0 : State
        Start, within rho1 of ``u_hat``.
    u_hat : State
        Equilibrium.
    rho1, rho2 : float
        Radii, 0 < rho2 < rho1.
    cfg : ModelConfig
    dt : float, optional (default: 0.05)
    n_start : int, optional (default: 4)
        First number of controlled modes; doubled until the decay bound holds on the
        whole grid or all modes are controlled.
    tol_factor : float, optional (default: 1.05)
        Tolerance factor on the decay bound.
    verbose : bool, optional (default: False)
        Report N escalation and realized sup-norms.

    Returns
    -------
    FeedbackResult
    """
    v0, u_hat = as_state(v0, cfg.n_modes), as_state(u_hat, cfg.n_modes)
    if not 0 < rho2 < rho1:
        raise ValueError(f"Need 0 < rho2 < rho1; got rho1 = {rho1}, rho2 = {rho2}.")
    d0 = cfg.distance(v0, u_hat)
    if d0 > rho1 * (1 + 1e-9):
        raise ValueError(f"Start is at distance {d0:.4g} from the equilibrium; exceeds rho1 = {rho1}.")
    T = 2 * math.log(rho1 / rho2) / cfg.alpha
    n_steps = _n_steps(T, dt)
    stepper = Stepper(cfg, dt)

    n_control, tried, sup_norms = min(n_start, cfg.n_modes), [], []
    while True:
        law = stabilizing_feedback(cfg, u_hat, n_control, hold=False)
        times, a, v, applied = stepper.run(v0.position, v0.velocity, n_steps, feedback=law)
        dist2 = norm_h_arrays(a - u_hat.position, v - u_hat.velocity, cfg.eigenvalues, cfg.alpha) ** 2
        decay_ok = bool(np.all(dist2 <= tol_factor * np.exp(-cfg.alpha * times) * d0**2 + 1e-20))
        tried.append(n_control)
        sup_norms.append(float(np.max(norm_h_arrays(a, v, cfg.eigenvalues, cfg.alpha))))
        if verbose:
            print_status(
                f"Feedback with N = {n_control}: decay bound {'holds' if decay_ok else 'violated'},"
                f" sup-norm {sup_norms[-1]:.4g}."
            )
        if decay_ok or n_control == cfg.n_modes:
            break
        n_control = min(2 * n_control, cfg.n_modes)

    control = ControlPath(applied[:, :n_control], dt)
    endpoint = float(np.sqrt(dist2[-1]))
    return FeedbackResult(
        control=control,
        trajectory=Trajectory(times, a, v),
        n_control=n_control,
        T=n_steps * dt,
        decay_ok=decay_ok,
        endpoint_distance=endpoint,
        endpoint_ok=endpoint <= rho2 / 2 * tol_factor,
        energy=action_J(control, cfg.noise),
        tried=tuple(tried),
        sup_norms=tuple(sup_norms),
    )


# --- Connections.


@dataclass(frozen=True)
class Connection:
    """Orbit leaving ``source`` along an unstable direction.

    target : index of the equilibrium reached, None if 'undetermined'.
    waypoints : states sampled along the orbit; reached from ``source`` at zero cost.
    """

    source: int
    target: Optional[int]
    sign: int
    eigenvalue: complex
    end_distance: float
    waypoints: Tuple[State, ...] = field(repr=False, default=())

    @property
    def status(self) -> str:
        return "connected" if self.target is not None else "undetermined"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source,
            "target": self.target,
            "status": self.status,
            "sign": self.sign,
            "eigenvalue": [float(self.eigenvalue.real), float(self.eigenvalue.imag)],
            "end_distance": self.end_distance,
        }


def heteroclinic_scan(
    eq: EquilibriumSet,
    cfg: ModelConfig,
    delta: float = 1e-3,
    horizon: float = 200.0,
    dt: float = 0.05,
    capture_radius: float = 0.05,
    n_waypoints: int = 50,
    tol: float = 1e-8,
) -> List[Connection]:
    """Follow the flow from u_k +- delta w for every unstable eigendirection w of every
    unstable equilibrium u_k, and record which equilibrium it reaches.

    Parameters
    ----------
    eq : EquilibriumSet
    cfg : ModelConfig
    delta : float, optional (default: 1e-3)
        Size of the initial displacement (phase-space norm).
    horizon : float, optional (default: 200)
    dt : float, optional (default: 0.05)
    capture_radius : float, optional (default: 0.05)
        An orbit ending farther than this from every equilibrium is 'undetermined'.
    n_waypoints : int, optional (default: 50)
        Number of states kept along each orbit.

    Returns
    -------
    List[Connection]
        Empty if no equilibrium is unstable.
    """
    n = cfg.n_modes
    n_steps = _n_steps(horizon, dt)
    sample_every = max(1, n_steps // n_waypoints)
    connections = []
    for k in eq.unstable_indices:
        u_hat = eq[k].state
        mu, vectors = linalg.eig(linearization(u_hat.position, cfg))
        for idx in np.flatnonzero((mu.real > tol) & (mu.imag >= 0)):
            w = vectors[:, idx].real
            if np.linalg.norm(w) < 1e-12:
                w = vectors[:, idx].imag
            w = w / norm_h_arrays(w[:n], w[n:], cfg.eigenvalues, cfg.alpha)
            for sign in (1, -1):
                s0 = State(u_hat.position + sign * delta * w[:n], u_hat.velocity + sign * delta * w[n:])
                traj = flow_deterministic(s0, horizon, dt, cfg, sample_every)
                m, distance = eq.nearest(traj.final, cfg)
                connections.append(
                    Connection(
                        source=k,
                        target=m if distance < capture_radius else None,
                        sign=sign,
                        eigenvalue=complex(mu[idx]),
                        end_distance=distance,
                        waypoints=tuple(traj.states()),
                    )
                )
    return connections


# --- Perturbation bound.


@dataclass(frozen=True)
class PerturbationFit:
    """Smallest C with |S^phi(t) - S(t)|^2 <= C int_0^t |phi(s)|^2 e^(Cs) ds, per sample
    control, and the overall C (maximum) with the worst ratio of both sides at that C."""

    C: float
    per_sample: np.ndarray
    actions: np.ndarray
    worst_ratio: float


def _bound_rhs(C: float, times: np.ndarray, phi_sq: np.ndarray) -> np.ndarray:
    """C int_0^t_k |phi|^2 e^(Cs) ds at the grid times, exact for piecewise constant phi."""
    with np.errstate(over="ignore"):
        steps = np.exp(C * times[:-1]) * np.expm1(C * np.diff(times))
    return np.concatenate([[0.0], np.cumsum(phi_sq * steps)])


def perturbation_bound_fit(
    cfg: ModelConfig,
    s0: State,
    T: float,
    dt: float = 0.05,
    n_samples: int = 8,
    amplitude: float = 0.05,
    seed: int = 0,
) -> PerturbationFit:
    """Regress the perturbation bound over random small controls on all modes."""
    s0 = as_state(s0, cfg.n_modes)
    n_steps = _n_steps(T, dt)
    base = flow_deterministic(s0, T, dt, cfg)
    rng = make_rng(seed)
    per_sample, actions, samples = [], [], []
    for _ in range(n_samples):
        coeffs = amplitude * rng.standard_normal((n_steps, cfg.n_modes)) * cfg.noise.b
        phi = ControlPath(coeffs, dt)
        traj = flow_controlled(s0, phi, cfg)
        dev = norm_h_arrays(
            traj.positions - base.positions, traj.velocities - base.velocities, cfg.eigenvalues, cfg.alpha
        ) ** 2
        phi_sq = np.sum(coeffs**2, axis=1)
        samples.append((dev, phi_sq))
        actions.append(action_J(phi, cfg.noise))

        def slack(C: float) -> float:
            return float(np.min(_bound_rhs(C, base.times, phi_sq)[1:] - dev[1:]))

        lo, hi = 1e-8, 1e3
        if slack(hi) < 0:
            per_sample.append(np.inf)
            continue
        for _ in range(100):
            mid = math.sqrt(lo * hi)
            lo, hi = (lo, mid) if slack(mid) >= 0 else (mid, hi)
        per_sample.append(hi)

    C = float(np.max(per_sample))
    worst = 0.0
    if np.isfinite(C):
        for dev, phi_sq in samples:
            rhs = _bound_rhs(C, base.times, phi_sq)[1:]
            worst = max(worst, float(np.max(dev[1:] / rhs)))
    return PerturbationFit(C, np.array(per_sample), np.array(actions), worst)
