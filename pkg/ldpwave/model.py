from __future__ import annotations

import math
import pathlib
from dataclasses import dataclass, field
from typing import Any, Dict, Union

import numpy as np
import yaml

from .nonlinearity import NonlinearityReport, NonlinearitySpec, validate_nonlinearity
from .spectral import NoiseSpec, SpectralBasis, State


@dataclass(frozen=True)
class ModelConfig:
    """Damped nonlinear wave equation d2u/dt2 + gamma du/dt - Laplace(u) + f(u) = h on
    (0, L) with Dirichlet boundary conditions, Galerkin-truncated to ``basis.n_modes``.

    Parameters
    ----------
    gamma : float
        Damping coefficient, > 0.
    nonlinearity : NonlinearitySpec or Dict
        Polynomial f; a dictionary {'coefficients': [...]} is converted.
    basis : SpectralBasis, Dict or int
        Galerkin basis; a dictionary {'n_modes': .., 'domain_length': ..} or an integer
        (number of modes on (0, pi)) is converted.
    noise : NoiseSpec or Dict, optional
        Noise coefficients b_j; a dictionary is converted with ``NoiseSpec.from_dict``.
        Default: b_j = j^(-2).
    h_modes : Iterable[float], optional
        Modal coefficients of the forcing h; shorter vectors are zero-padded. Default: 0.
    alpha : float, optional
        Parameter of the phase-space norm. Default: 0.1 * min(gamma, lambda_1 / gamma).
    blowup_ceiling : float, optional (default: 1e6)
        Phase-space norm above which a flow is considered divergent.

    Notes
    -----
    May be loaded from yaml file with the .from_file() class method. The validation report
    of the nonlinearity is available as ``.report``.
    """

    gamma: float
    nonlinearity: NonlinearitySpec
    basis: SpectralBasis = 8
    noise: NoiseSpec = None
    h_modes: np.ndarray = None
    alpha: float = None
    blowup_ceiling: float = 1e6
    report: NonlinearityReport = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"'gamma' must be positive; got {self.gamma}.")

        # Finish initialisation.
        basis = self.basis
        if isinstance(basis, dict):
            basis = SpectralBasis(**basis)
        elif not isinstance(basis, SpectralBasis):
            basis = SpectralBasis(int(basis))
        object.__setattr__(self, "basis", basis)  # because frozen

        nonlinearity = self.nonlinearity
        if isinstance(nonlinearity, dict):
            nonlinearity = NonlinearitySpec.from_dict(nonlinearity)
        object.__setattr__(self, "nonlinearity", nonlinearity)

        noise = self.noise
        if noise is None:
            noise = NoiseSpec.power_law(basis.n_modes)
        elif isinstance(noise, dict):
            noise = NoiseSpec.from_dict(noise, basis.n_modes)
        if noise.n_modes != basis.n_modes:
            raise ValueError(
                f"Noise has {noise.n_modes} coefficients; basis has {basis.n_modes} modes."
            )
        object.__setattr__(self, "noise", noise)

        h = np.zeros(basis.n_modes)
        if self.h_modes is not None:
            given = np.array(self.h_modes, float, ndmin=1)
            if len(given) > basis.n_modes or not np.all(np.isfinite(given)):
                raise ValueError(
                    f"'h_modes' must be finite with at most {basis.n_modes} entries; got {given}."
                )
            h[: len(given)] = given
        h.setflags(write=False)
        object.__setattr__(self, "h_modes", h)

        alpha = self.alpha
        if alpha is None:
            alpha = 0.1 * min(self.gamma, basis.eigenvalues[0] / self.gamma)
        if not alpha > 0:
            raise ValueError(f"'alpha' must be positive; got {alpha}.")
        object.__setattr__(self, "alpha", float(alpha))

        if not self.blowup_ceiling > 0:
            raise ValueError(f"'blowup_ceiling' must be positive; got {self.blowup_ceiling}.")

        report = validate_nonlinearity(nonlinearity, basis, self.gamma)
        object.__setattr__(self, "report", report)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ModelConfig:
        return cls(**data)

    @classmethod
    def from_file(cls, filepath: Union[str, pathlib.Path]) -> ModelConfig:
        """Load model configuration from file.

        Parameters
        ----------
        filepath : Union[str, pathlib.Path]
            Path to load yaml model file from.
        """
        conf_yml = yaml.load(open(filepath), Loader=yaml.FullLoader)
        return cls(**conf_yml)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.gamma,
            "nonlinearity": self.nonlinearity.to_dict(),
            "basis": self.basis.to_dict(),
            "noise": self.noise.to_dict(),
            "h_modes": self.h_modes.tolist(),
            "alpha": self.alpha,
            "blowup_ceiling": self.blowup_ceiling,
        }

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.basis.eigenvalues

    @property
    def is_linear(self) -> bool:
        """True if f is affine, i.e. the Galerkin system is linear."""
        return self.nonlinearity.degree <= 1

    @property
    def kappa_threshold(self) -> float:
        """Largest admissible exponent per unit noise, alpha / (2 * intensity); divide by eps."""
        return self.alpha / (2 * self.noise.intensity)

    @property
    def energy_lower_constant(self) -> float:
        """Constant C * L in energy(s) >= |s|^2 / 2 - 2 C L."""
        return self.report.C * self.basis.domain_length

    def nonlinear_modes(self, position: np.ndarray) -> np.ndarray:
        """Modal projection of f(u), u given by modal ``position`` (last axis)."""
        if self.nonlinearity.is_zero:
            return np.zeros_like(position, dtype=float)
        u = self.basis.to_physical(position)
        return self.basis.from_physical(self.nonlinearity(u))

    def nonlinear_derivative(self, position: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """Modal projection of f'(u) w, with u and w given by modal vectors."""
        if self.nonlinearity.degree < 1:
            return np.zeros_like(direction, dtype=float)
        u = self.basis.to_physical(position)
        w = self.basis.to_physical(direction)
        return self.basis.from_physical(self.nonlinearity.derivative(u) * w)

    def nonlinear_jacobian(self, position: np.ndarray) -> np.ndarray:
        """Symmetric matrix of ``nonlinear_derivative`` at a single ``position``."""
        u = self.basis.to_physical(position)
        weighted = self.basis.modes * (self.basis.weights * self.nonlinearity.derivative(u))[:, None]
        return self.basis.modes.T @ weighted

    def residual(self, position: np.ndarray) -> np.ndarray:
        """Modal residual -Laplace(u) + f(u) - h of the stationary equation."""
        return self.eigenvalues * position + self.nonlinear_modes(position) - self.h_modes

    def distance(self, s1: State, s2: State) -> float:
        """Phase-space distance |s1 - s2|."""
        diff_a = s1.position - s2.position
        diff_v = s1.velocity - s2.velocity
        return math.sqrt(
            float(np.sum(self.eigenvalues * diff_a**2) + np.sum((diff_v + self.alpha * diff_a) ** 2))
        )
