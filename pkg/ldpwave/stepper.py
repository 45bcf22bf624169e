"""Exponential midpoint integrator for the Galerkin system, with exact Ornstein-Uhlenbeck
noise increments and the discrete adjoint of one step.

Per mode j the linear part a'' + gamma a' + lambda_j a = c is propagated exactly for
constant forcing c over a step (zero-order hold). The forcing c = h + phi - P f(u) is
evaluated at a half-step predictor. All arrays carry the modes on the last axis and may
have arbitrary leading batch axes.
"""

from __future__ import annotations

import math
from typing import Callable, Tuple

import numpy as np
from scipy import linalg, signal

from .common import DivergenceError
from .model import ModelConfig
from .spectral import norm_h_arrays

Feedback = Callable[[np.ndarray], np.ndarray]


def _discretize(lam: float, gamma: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """State matrix and zero-order-hold input vector of one mode over ``dt``."""
    F = np.zeros((3, 3))
    F[:2, :2] = [[0.0, 1.0], [-lam, -gamma]]
    F[1, 2] = 1.0
    Fd = linalg.expm(F * dt)[:2, :]
    return Fd[:, :2], Fd[:, 2]


class Stepper:
    """Time stepper for the configured model at fixed step ``dt``.

    Parameters
    ----------
    cfg : ModelConfig
    dt : float
        Time step; dt * sqrt(lambda_N) must stay below pi so that the fastest mode is
        resolved by the sampling grid.
    """

    def __init__(self, cfg: ModelConfig, dt: float):
        if not dt > 0:
            raise ValueError(f"'dt' must be positive; got {dt}.")
        if dt * math.sqrt(cfg.eigenvalues[-1]) >= math.pi:
            raise ValueError(
                f"Time step {dt} does not resolve mode {cfg.n_modes}; need"
                f" dt < {math.pi / math.sqrt(cfg.eigenvalues[-1]):.4g}."
            )
        self.cfg = cfg
        self.dt = float(dt)
        self.eigenvalues = cfg.eigenvalues
        self.h = cfg.h_modes
        self.alpha = cfg.alpha
        self.ceiling = cfg.blowup_ceiling

        full = [_discretize(lam, cfg.gamma, dt) for lam in cfg.eigenvalues]
        half = [_discretize(lam, cfg.gamma, dt / 2) for lam in cfg.eigenvalues]
        self.E = np.array([e for e, _ in full])  # (N, 2, 2)
        self.C = np.array([c for _, c in full])  # (N, 2)
        E_h = np.array([e for e, _ in half])
        C_h = np.array([c for _, c in half])
        self.E00, self.E01, self.E10, self.E11 = (self.E[:, i, k] for i in (0, 1) for k in (0, 1))
        self.C0, self.C1 = self.C[:, 0], self.C[:, 1]
        self.Eh00, self.Eh01 = E_h[:, 0, 0], E_h[:, 0, 1]
        self.Ch0 = C_h[:, 0]

        # Unit-eps covariance of the exact increment: P_inf - E P_inf E^T.
        self.stationary_cov = np.array(
            [
                linalg.solve_continuous_lyapunov(
                    np.array([[0.0, 1.0], [-lam, -cfg.gamma]]),
                    -np.array([[0.0, 0.0], [0.0, b**2]]),
                )
                for lam, b in zip(cfg.eigenvalues, cfg.noise.b)
            ]
        )
        step_cov = self.stationary_cov - self.E @ self.stationary_cov @ self.E.transpose(0, 2, 1)
        step_cov = (step_cov + step_cov.transpose(0, 2, 1)) / 2
        w, V = np.linalg.eigh(step_cov)  # square-root factor; tolerates rank loss at tiny dt
        self.noise_factor = V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]

    # --- deterministic step

    def forcing(self, a: np.ndarray, phi: np.ndarray = None) -> np.ndarray:
        out = self.h - self.cfg.nonlinear_modes(a)
        return out if phi is None else out + phi

    def predictor(self, a: np.ndarray, v: np.ndarray, phi: np.ndarray = None) -> np.ndarray:
        return self.Eh00 * a + self.Eh01 * v + self.Ch0 * self.forcing(a, phi)

    def step(
        self, a: np.ndarray, v: np.ndarray, phi: np.ndarray = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """One step from (a, v) with control ``phi`` held constant over the step."""
        c = self.forcing(self.predictor(a, v, phi), phi)
        return (
            self.E00 * a + self.E01 * v + self.C0 * c,
            self.E10 * a + self.E11 * v + self.C1 * c,
        )

    # --- noise

    def draw_noise(
        self, rng: np.random.Generator, eps: float, n_steps: int, batch_shape: Tuple = ()
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Exact OU increments of ``n_steps`` steps; arrays of shape (n_steps, *batch, N)."""
        z = rng.standard_normal((n_steps, *batch_shape, len(self.eigenvalues), 2))
        inc = np.einsum("jab,...jb->...ja", self.noise_factor, z) * math.sqrt(eps)
        return inc[..., 0], inc[..., 1]

    def check(self, a: np.ndarray, v: np.ndarray, t: float) -> None:
        norm = norm_h_arrays(a, v, self.eigenvalues, self.alpha)
        if not np.all(norm <= self.ceiling):  # also catches nan
            raise DivergenceError(
                f"Phase-space norm exceeded the ceiling {self.ceiling:g} at t = {t:.4g}."
            )

    # --- runs

    def run(
        self,
        a: np.ndarray,
        v: np.ndarray,
        n_steps: int,
        controls: np.ndarray = None,
        feedback: Feedback = None,
        eps: float = 0.0,
        rng: np.random.Generator = None,
        sample_every: int = 1,
        noise_block: int = 4096,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Integrate ``n_steps`` steps.

        Parameters
        ----------
        a, v : np.ndarray
            Initial modal position and velocity, shape (*batch, N).
        n_steps : int
        controls : np.ndarray, optional
            Open-loop control, shape (n_steps, N).
        feedback : Callable, optional
            Zero-order-hold feedback law a -> phi, evaluated at the start of each step.
        eps : float, optional (default: 0)
            Noise intensity; no random numbers are drawn when 0.
        rng : np.random.Generator, optional
            Needed when eps > 0.
        sample_every : int, optional (default: 1)
            Keep every n-th state (the initial and final states are always kept).

        Returns
        -------
        times, positions, velocities, applied
            Sampled times, states of shape (n_samples, *batch, N), and the control applied
            at each step, shape (n_steps, *batch, N) (None without control).
        """
        if controls is not None and feedback is not None:
            raise ValueError("Give either open-loop 'controls' or a 'feedback' law, not both.")
        if eps < 0:
            raise ValueError(f"'eps' must be nonnegative; got {eps}.")
        if eps > 0 and rng is None:
            raise ValueError("A random generator is needed when eps > 0.")
        a, v = np.array(a, float), np.array(v, float)
        self.check(a, v, 0.0)

        keep = sorted(set(range(0, n_steps + 1, sample_every)) | {n_steps})
        times, positions, velocities = [], [], []
        applied = None
        if feedback is not None:
            applied = np.zeros((n_steps, *a.shape))
        elif controls is not None:
            applied = np.asarray(controls, float)
        noise_a = noise_v = None

        for k in range(n_steps + 1):
            if k == keep[len(times)]:
                times.append(k * self.dt)
                positions.append(a)
                velocities.append(v)
            if k == n_steps:
                break
            if feedback is not None:
                phi = feedback(a)
                applied[k] = phi
            else:
                phi = None if controls is None else applied[k]
            a, v = self.step(a, v, phi)
            if eps > 0:
                i = k % noise_block
                if i == 0:
                    noise_a, noise_v = self.draw_noise(
                        rng, eps, min(noise_block, n_steps - k), a.shape[:-1]
                    )
                a, v = a + noise_a[i], v + noise_v[i]
            self.check(a, v, (k + 1) * self.dt)

        return np.array(times), np.array(positions), np.array(velocities), applied

    def run_linear(
        self,
        a: np.ndarray,
        v: np.ndarray,
        n_steps: int,
        eps: float,
        rng: np.random.Generator,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Uncontrolled run for constant f, as per-mode recursive filters.

        With x_(k+1) = E x_k + w_k, Cayley-Hamilton gives
        x_(k+2) - tr(E) x_(k+1) + det(E) x_k = w_(k+1) + (E - tr(E) I) w_k, i.e. an IIR
        filter on the inputs [x_0, w_0, w_1, ...]. Returns positions and velocities of
        shape (n_steps + 1, N), initial state included.
        """
        if self.cfg.nonlinearity.degree >= 1:
            raise ValueError("Recursive-filter runs need f constant; use Stepper.run.")
        a, v = np.asarray(a, float), np.asarray(v, float)
        c = self.h - self.cfg.nonlinear_modes(np.zeros_like(a))
        w_a = np.broadcast_to(self.C0 * c, (n_steps, len(c))).copy()
        w_v = np.broadcast_to(self.C1 * c, (n_steps, len(c))).copy()
        if eps > 0:
            noise_a, noise_v = self.draw_noise(rng, eps, n_steps)
            w_a += noise_a
            w_v += noise_v
        positions = np.empty((n_steps + 1, len(c)))
        velocities = np.empty((n_steps + 1, len(c)))
        for j in range(len(c)):
            E = self.E[j]
            tr, det = np.trace(E), np.linalg.det(E)
            inp = np.stack([np.r_[a[j], w_a[:, j]], np.r_[v[j], w_v[:, j]]])  # (2, n+1)
            shifted = np.zeros_like(inp)
            shifted[:, 1:] = (E - tr * np.eye(2)) @ inp[:, :-1]
            out = signal.lfilter([1.0], [1.0, -tr, det], inp + shifted, axis=1)
            positions[:, j], velocities[:, j] = out
        return positions, velocities

    # --- adjoint

    def step_adjoint(
        self,
        a: np.ndarray,
        v: np.ndarray,
        phi: np.ndarray,
        lam_a: np.ndarray,
        lam_v: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pull back the gradient (lam_a, lam_v) w.r.t. the end of a step from (a, v).

        Returns
        -------
        lam_a, lam_v, grad_phi
            Gradients w.r.t. the start state of the step and w.r.t. its control.
        """
        cfg = self.cfg
        ap = self.predictor(a, v, phi)
        lam_c = self.C0 * lam_a + self.C1 * lam_v
        new_a = self.E00 * lam_a + self.E10 * lam_v
        new_v = self.E01 * lam_a + self.E11 * lam_v
        lam_ap = -cfg.nonlinear_derivative(ap, lam_c)
        grad_phi = lam_c + self.Ch0 * lam_ap
        new_a = new_a + self.Eh00 * lam_ap - cfg.nonlinear_derivative(a, self.Ch0 * lam_ap)
        new_v = new_v + self.Eh01 * lam_ap
        return new_a, new_v, grad_phi
