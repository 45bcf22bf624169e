"""Piecewise-constant controls acting on the lowest eigenmodes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class ControlPath:
    """Control phi(t, x) = sum_{j <= n_control} phi_j(t) e_j(x) on [0, T].

    Parameters
    ----------
    coeffs : np.ndarray
        Array of shape (n_steps, n_control); row k is the value on [t_k, t_(k+1)).
    dt : float
        Time step of the uniform grid t_k = k dt.
    """

    coeffs: np.ndarray
    dt: float

    def __post_init__(self):
        coeffs = np.array(self.coeffs, float, ndmin=2)
        if coeffs.ndim != 2 or coeffs.shape[0] < 1 or coeffs.shape[1] < 1:
            raise ValueError(
                f"'coeffs' must have shape (n_steps, n_control); got {coeffs.shape}."
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("Control has non-finite coefficients.")
        if not self.dt > 0:
            raise ValueError(f"'dt' must be positive; got {self.dt}.")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)  # because frozen
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def zeros(cls, n_steps: int, dt: float, n_control: int) -> ControlPath:
        return cls(np.zeros((n_steps, n_control)), dt)

    @classmethod
    def constant(cls, value, n_steps: int, dt: float) -> ControlPath:
        """Control that takes modal vector ``value`` at all times."""
        return cls(np.tile(np.asarray(value, float), (n_steps, 1)), dt)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ControlPath:
        return cls(data["coeffs"], data["dt"])

    @property
    def n_steps(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_control(self) -> int:
        return self.coeffs.shape[1]

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def t_grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def padded(self, n_modes: int) -> np.ndarray:
        """Coefficients as (n_steps, n_modes) array, zero in the uncontrolled modes."""
        if n_modes < self.n_control:
            raise ValueError(
                f"Control acts on {self.n_control} modes; cannot pad to {n_modes}."
            )
        out = np.zeros((self.n_steps, n_modes))
        out[:, : self.n_control] = self.coeffs
        return out

    def with_coeffs(self, coeffs: np.ndarray) -> ControlPath:
        return ControlPath(coeffs, self.dt)

    def to_dict(self) -> Dict[str, Any]:
        return {"dt": self.dt, "coeffs": self.coeffs.tolist()}

    def to_frame(self) -> pd.DataFrame:
        """One row per step: start time and modal coefficients phi_1..phi_Nc."""
        df = pd.DataFrame(
            self.coeffs, columns=[f"phi_{j}" for j in range(1, self.n_control + 1)]
        )
        df.insert(0, "t", self.t_grid[:-1])
        return df


def action_J(phi: ControlPath, noise) -> float:
    """Action J_T(phi) = 1/2 int_0^T |phi(s)|^2_{H_theta} ds, exact for piecewise constant phi.

    Parameters
    ----------
    phi : ControlPath
    noise : NoiseSpec
        Provides the weights b_j^-2.

    Returns
    -------
    float
    """
    if phi.n_control > noise.n_modes:
        raise ValueError(
            f"Control acts on {phi.n_control} modes; noise only has {noise.n_modes}."
        )
    b2 = noise.b[: phi.n_control] ** 2
    return float(0.5 * phi.dt * np.sum(phi.coeffs**2 / b2))
