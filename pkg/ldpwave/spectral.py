"""Sine eigenbasis of the Dirichlet Laplacian on (0, L), phase-space states and norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Union

import numpy as np

from .common import InvalidStateError, QuadratureRangeError


@dataclass(frozen=True)
class SpectralBasis:
    """Galerkin basis e_j(x) = sqrt(2/L) sin(j pi x / L), j = 1..n_modes.

    Parameters
    ----------
    n_modes : int
        Galerkin truncation level N_G.
    domain_length : float, optional (default: pi)
        Length L of the spatial interval (0, L).

    Notes
    -----
    The collocation grid has M = max(2N+1, ceil(3/2 (2N+1))) interior points with equal
    weights L/(M+1). Products of sines with total frequency up to 2M+1 are integrated
    exactly, which includes the projection of a cubic nonlinearity onto the basis and
    the quartic energy density.
    """

    n_modes: int
    domain_length: float = math.pi
    eigenvalues: np.ndarray = field(init=False, repr=False, compare=False)
    grid: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    modes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValueError(f"'n_modes' must be a positive integer; got {self.n_modes}.")
        if not self.domain_length > 0:
            raise ValueError(f"'domain_length' must be positive; got {self.domain_length}.")
        n, length = int(self.n_modes), float(self.domain_length)
        m = max(2 * n + 1, math.ceil(1.5 * (2 * n + 1)))
        j = np.arange(1, n + 1)
        x = length * np.arange(1, m + 1) / (m + 1)
        modes = math.sqrt(2 / length) * np.sin(np.outer(x, j) * math.pi / length)
        for name, value in [
            ("n_modes", n),
            ("domain_length", length),
            ("eigenvalues", (j * math.pi / length) ** 2),
            ("grid", x),
            ("weights", np.full(m, length / (m + 1))),
            ("modes", modes),  # shape (M, N): modes[m, j] = e_j(x_m)
        ]:
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)  # because frozen

    @property
    def n_grid(self) -> int:
        return len(self.grid)

    def to_physical(self, v: np.ndarray) -> np.ndarray:
        """Grid values of the function with modal coefficients ``v`` (last axis)."""
        v = np.asarray(v, float)
        if v.shape[-1] != self.n_modes:
            raise ValueError(
                f"Modal vector has {v.shape[-1]} coefficients; basis has {self.n_modes} modes."
            )
        return v @ self.modes.T

    def from_physical(self, u: np.ndarray) -> np.ndarray:
        """Modal coefficients (L2-projection by quadrature) of grid values ``u`` (last axis)."""
        u = np.asarray(u, float)
        if u.shape[-1] != self.n_grid:
            raise ValueError(
                f"Grid vector has {u.shape[-1]} values; basis grid has {self.n_grid} points."
            )
        return (u * self.weights) @ self.modes

    def integrate(self, u: np.ndarray) -> np.ndarray:
        """Quadrature of grid values ``u`` over (0, L) (last axis)."""
        return np.asarray(u, float) @ self.weights

    def to_dict(self) -> Dict[str, Any]:
        return {"n_modes": self.n_modes, "domain_length": self.domain_length}


def to_physical(v: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Grid values of modal vector ``v``; see ``SpectralBasis.to_physical``."""
    return basis.to_physical(v)


def from_physical(u: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Modal vector of grid values ``u``; see ``SpectralBasis.from_physical``."""
    return basis.from_physical(u)


@dataclass(frozen=True)
class State:
    """Point [u, du/dt] of the phase space, as modal coefficient vectors."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        position = np.array(self.position, float, ndmin=1)
        velocity = np.array(self.velocity, float, ndmin=1)
        if position.ndim != 1 or position.shape != velocity.shape:
            raise InvalidStateError(
                f"Position and velocity must be 1-D of equal length; got shapes"
                f" {position.shape} and {velocity.shape}."
            )
        if not (np.all(np.isfinite(position)) and np.all(np.isfinite(velocity))):
            raise InvalidStateError("State has non-finite entries.")
        position.setflags(write=False)
        velocity.setflags(write=False)
        object.__setattr__(self, "position", position)  # because frozen
        object.__setattr__(self, "velocity", velocity)

    @classmethod
    def zeros(cls, n_modes: int) -> State:
        return cls(np.zeros(n_modes), np.zeros(n_modes))

    @classmethod
    def at_rest(cls, position: Iterable[float]) -> State:
        """State with the given modal position and zero velocity."""
        position = np.asarray(position, float)
        return cls(position, np.zeros_like(position))

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> State:
        """Inverse of ``.vector``."""
        vector = np.asarray(vector, float)
        n = len(vector) // 2
        return cls(vector[:n], vector[n:])

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> State:
        """From {'position': [...], 'velocity': [...]}; a missing velocity means rest."""
        if "velocity" not in data:
            return cls.at_rest(data["position"])
        return cls(data["position"], data["velocity"])

    @property
    def n_modes(self) -> int:
        return len(self.position)

    @property
    def vector(self) -> np.ndarray:
        """Concatenation [position, velocity]."""
        return np.concatenate([self.position, self.velocity])

    def padded(self, n_modes: int) -> State:
        """Same state with modal vectors zero-padded (or truncated) to ``n_modes``."""
        position, velocity = np.zeros(n_modes), np.zeros(n_modes)
        k = min(n_modes, self.n_modes)
        position[:k], velocity[:k] = self.position[:k], self.velocity[:k]
        return State(position, velocity)

    def to_dict(self) -> Dict[str, Any]:
        return {"position": self.position.tolist(), "velocity": self.velocity.tolist()}

    def __add__(self, other: State) -> State:
        return State(self.position + other.position, self.velocity + other.velocity)

    def __sub__(self, other: State) -> State:
        return State(self.position - other.position, self.velocity - other.velocity)

    def __mul__(self, factor: float) -> State:
        return State(factor * self.position, factor * self.velocity)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NoiseSpec:
    """Coefficients b_j of the noise sum_j b_j dbeta_j e_j.

    Parameters
    ----------
    b : Iterable[float]
        Positive coefficients, one per Galerkin mode.
    law : str, optional
        Textual description of the generating rule, e.g. 'b_j = j^(-2)'.
    """

    b: np.ndarray
    law: str = "explicit"

    def __post_init__(self):
        b = np.array(self.b, float, ndmin=1)
        if b.ndim != 1 or not np.all(np.isfinite(b)) or not np.all(b > 0):
            raise ValueError(f"All noise coefficients must be positive and finite; got {b}.")
        terms = np.arange(1, len(b) + 1) ** 2 * b**2
        tail = terms[len(terms) // 2 :]
        if len(terms) >= 4 and np.any(np.diff(tail) > 0):
            raise ValueError(
                "Partial sums of lambda_j b_j^2 must settle; the terms increase in the tail."
            )
        b.setflags(write=False)
        object.__setattr__(self, "b", b)  # because frozen

    @classmethod
    def power_law(cls, n_modes: int, exponent: float = 2.0, scale: float = 1.0) -> NoiseSpec:
        """b_j = scale * j^(-exponent). Needs exponent > 3/2 for sum lambda_j b_j^2 < inf."""
        if exponent <= 1.5:
            raise ValueError(
                f"'exponent' must exceed 1.5 for sum lambda_j b_j^2 to converge; got {exponent}."
            )
        b = scale * np.arange(1, n_modes + 1, dtype=float) ** (-exponent)
        return cls(b, f"b_j = {scale:g} * j^(-{exponent:g})")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], n_modes: int) -> NoiseSpec:
        """From config: either {'coefficients': [...]} or {'exponent': p, 'scale': s}."""
        if "coefficients" in data:
            b = np.asarray(data["coefficients"], float)
            if len(b) != n_modes:
                raise ValueError(
                    f"Expected {n_modes} noise coefficients, got {len(b)}."
                )
            return cls(b, data.get("law", "explicit"))
        return cls.power_law(n_modes, data.get("exponent", 2.0), data.get("scale", 1.0))

    @property
    def n_modes(self) -> int:
        return len(self.b)

    @property
    def intensity(self) -> float:
        """Sum of b_j^2."""
        return float(np.sum(self.b**2))

    def intensity_h1(self, basis: SpectralBasis) -> float:
        """Sum of lambda_j b_j^2."""
        return float(np.sum(basis.eigenvalues * self.b**2))

    def to_dict(self) -> Dict[str, Any]:
        return {"coefficients": self.b.tolist(), "law": self.law}


# ---


def norm_h_arrays(
    position: np.ndarray, velocity: np.ndarray, eigenvalues: np.ndarray, alpha: float
) -> np.ndarray:
    """Phase-space norm on raw modal arrays (last axis = modes); broadcasts over batches."""
    return np.sqrt(
        np.sum(eigenvalues * position**2, axis=-1)
        + np.sum((velocity + alpha * position) ** 2, axis=-1)
    )


def norm_H(s: State, alpha: float, basis: SpectralBasis) -> float:
    """Norm |u|^2 = ||grad u_1||^2 + ||u_2 + alpha u_1||^2 of a phase-space point.

    Parameters
    ----------
    s : State
    alpha : float
        Positive norm parameter.
    basis : SpectralBasis

    Returns
    -------
    float
    """
    if not alpha > 0:
        raise ValueError(f"'alpha' must be positive; got {alpha}.")
    if s.n_modes != basis.n_modes:
        raise InvalidStateError(
            f"State has {s.n_modes} modes; basis has {basis.n_modes}."
        )
    return float(norm_h_arrays(s.position, s.velocity, basis.eigenvalues, alpha))


def norm_Htheta(v: np.ndarray, noise: NoiseSpec) -> float:
    """Noise-weighted norm (sum_j b_j^-2 v_j^2)^(1/2) of a modal vector."""
    v = np.asarray(v, float)
    if len(v) > noise.n_modes:
        raise ValueError(
            f"Vector has {len(v)} coefficients; noise only has {noise.n_modes}."
        )
    if not np.all(np.isfinite(v)):
        raise ValueError("Vector has non-finite entries.")
    return float(np.sqrt(np.sum(v**2 / noise.b[: len(v)] ** 2)))


def project_PN(v: np.ndarray, N: int) -> np.ndarray:
    """Orthogonal projection onto the span of e_1..e_N (zeroes the rest)."""
    v = np.asarray(v, float)
    if not 1 <= N <= v.shape[-1]:
        raise ValueError(f"'N' must be in 1..{v.shape[-1]}; got {N}.")
    out = v.copy()
    out[..., N:] = 0.0
    return out


def energy(s: State, cfg) -> float:
    """Energy |u|_H^2 + 2 int_D F(u_1) dx, with F the primitive of f, F(0) = 0.

    Parameters
    ----------
    s : State
    cfg : ModelConfig

    Returns
    -------
    float
    """
    return float(energy_arrays(s.position, s.velocity, cfg))


def energy_arrays(position: np.ndarray, velocity: np.ndarray, cfg) -> np.ndarray:
    """Energy on raw modal arrays; broadcasts over leading batch axes."""
    basis = cfg.basis
    with np.errstate(over="ignore", invalid="ignore"):
        u = basis.to_physical(position)
        potential = basis.integrate(cfg.nonlinearity.primitive(u))
        value = norm_h_arrays(position, velocity, basis.eigenvalues, cfg.alpha) ** 2
        value = value + 2 * potential
    if not np.all(np.isfinite(value)):
        raise QuadratureRangeError("Energy quadrature overflowed; state is too large.")
    return value


StateLike = Union[State, Dict[str, Any]]


def as_state(value: StateLike, n_modes: int = None) -> State:
    """Accept a ``State`` or its dictionary form; pad to ``n_modes`` if given."""
    state = value if isinstance(value, State) else State.from_dict(value)
    if n_modes is not None and state.n_modes != n_modes:
        state = state.padded(n_modes)
    return state
