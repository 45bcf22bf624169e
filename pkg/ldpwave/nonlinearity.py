"""Collection of nonlinearities f(u) and their validation against the growth and
dissipativity conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P

from .common import UnsupportedNonlinearityError


@dataclass(frozen=True)
class NonlinearitySpec:
    """Polynomial nonlinearity f(u) = sum_k c_k u^k.

    Parameters
    ----------
    coefficients : Iterable[float]
        Coefficients c_0, c_1, ... in increasing degree.
    kind : str, optional (default: 'polynomial')
        Only 'polynomial' is supported.

    Notes
    -----
    The primitive F is normalized with F(0) = 0.
    """

    coefficients: np.ndarray
    kind: str = "polynomial"
    f: Polynomial = field(init=False, repr=False, compare=False)
    df: Polynomial = field(init=False, repr=False, compare=False)
    ddf: Polynomial = field(init=False, repr=False, compare=False)
    F: Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind != "polynomial":
            raise UnsupportedNonlinearityError(
                f"Only polynomial nonlinearities are supported; got kind '{self.kind}'."
            )
        c = np.trim_zeros(np.array(self.coefficients, float, ndmin=1), "b")
        if not len(c):
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise ValueError(f"Coefficients must be finite; got {c}.")
        c.setflags(write=False)
        f = Polynomial(c)
        object.__setattr__(self, "coefficients", c)  # because frozen
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "df", f.deriv())
        object.__setattr__(self, "ddf", f.deriv(2))
        object.__setattr__(self, "F", f.integ(lbnd=0))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> NonlinearitySpec:
        return cls(data["coefficients"], data.get("kind", "polynomial"))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.coefficients == 0))

    # Direct polyval on raw coefficients; Polynomial.__call__ adds domain-mapping overhead.

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return P.polyval(u, self.f.coef)

    def derivative(self, u: np.ndarray) -> np.ndarray:
        return P.polyval(u, self.df.coef)

    def primitive(self, u: np.ndarray) -> np.ndarray:
        return P.polyval(u, self.F.coef)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "coefficients": self.coefficients.tolist()}


def fact_polynomial(coefficients: Iterable[float]) -> NonlinearitySpec:
    """Returns nonlinearity with coefficients c_0, c_1, ... in increasing degree."""
    return NonlinearitySpec(coefficients)


def fact_double_well(kappa: float) -> NonlinearitySpec:
    """Returns f(u) = u^3 - kappa u.

    On (0, pi), kappa = lambda_1 = 1 is the pitchfork threshold: for kappa < 1 the only
    equilibrium (h = 0) is 0, for 1 < kappa < 4 there are three.
    """
    return NonlinearitySpec([0.0, -kappa, 0.0, 1.0])


zero: NonlinearitySpec = NonlinearitySpec([0.0])
cubic: NonlinearitySpec = NonlinearitySpec([0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class NonlinearityReport:
    """Outcome of ``validate_nonlinearity``.

    rho : minimal growth exponent; 0.0 means any positive exponent works.
    nu, C : dissipativity constants (pointwise C, per unit length).
    """

    rho: float
    growth_constant: float
    nu: float
    C: float
    nu_bound: float
    bounded_below: bool
    rho_ok: bool
    nu_ok: bool
    notes: List[str] = field(default_factory=list)

    @property
    def dissipative(self) -> bool:
        """Dissipativity conditions hold with an admissible nu."""
        return self.bounded_below and self.nu_ok

    @property
    def assumptions_hold(self) -> bool:
        return self.dissipative and self.rho_ok

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho,
            "growth_constant": self.growth_constant,
            "nu": self.nu,
            "C": self.C,
            "nu_bound": self.nu_bound,
            "bounded_below": self.bounded_below,
            "rho_ok": self.rho_ok,
            "nu_ok": self.nu_ok,
            "dissipative": self.dissipative,
            "assumptions_hold": self.assumptions_hold,
            "notes": list(self.notes),
        }


def _min_nu(g: Polynomial) -> float:
    """Smallest nu >= 0 for which g(u) + nu u^2 is bounded below (inf if none)."""
    c = np.trim_zeros(g.coef, "b")
    deg = len(c) - 1
    if deg > 2:
        return 0.0 if (deg % 2 == 0 and c[-1] > 0) else np.inf
    c = np.pad(c, (0, 3 - len(c)))
    nu = max(0.0, -c[2])
    if c[1] != 0 and c[2] + nu <= 0:
        nu += 1e-3  # linear term needs strictly positive curvature
    return nu


def _min_value(g: Polynomial) -> float:
    """Global minimum of a polynomial that is bounded below."""
    if g.degree() < 1:
        return float(g.coef[0]) if len(g.coef) else 0.0
    crit = g.deriv().roots()
    crit = crit[np.abs(crit.imag) < 1e-9].real
    candidates = np.concatenate([crit, [0.0]])
    return float(np.min(g(candidates)))


def validate_nonlinearity(spec: NonlinearitySpec, basis, gamma: float) -> NonlinearityReport:
    """Check a polynomial f against the growth restriction and dissipativity conditions.

    Parameters
    ----------
    spec : NonlinearitySpec
    basis : SpectralBasis
        Provides lambda_1.
    gamma : float
        Damping.

    Returns
    -------
    NonlinearityReport
        Minimal rho with |f''(u)| <= C (|u|^(rho-1) + 1), and the smallest nu with the
        matching C such that F(u) >= -nu u^2 - C and f(u) u - F(u) >= -nu u^2 - C.
    """
    if not isinstance(spec, NonlinearitySpec):
        raise UnsupportedNonlinearityError(
            f"Expected a polynomial NonlinearitySpec; got {type(spec)}."
        )
    notes = []

    # Growth.
    if spec.degree >= 3:
        rho = float(spec.degree - 1)
        u = np.linspace(-50, 50, 20001)
        growth = float(np.max(np.abs(spec.ddf(u)) / (np.abs(u) ** (rho - 1) + 1)))
    else:
        rho = 0.0
        growth = float(np.max(np.abs(spec.ddf.coef))) if len(spec.ddf.coef) else 0.0
        notes.append("f'' is constant; any positive rho satisfies the growth restriction.")
    rho_ok = rho < 2
    if not rho_ok:
        notes.append(
            f"rho = {rho:g} violates the strict rho < 2 growth restriction; that restriction"
            " is specific to three space dimensions and not needed on an interval."
        )

    # Dissipativity.
    identity = Polynomial([0.0, 1.0])
    conditions = [spec.F, identity * spec.f - spec.F]
    nu = max(_min_nu(g) for g in conditions)
    bounded = bool(np.isfinite(nu))
    if bounded:
        shift = Polynomial([0.0, 0.0, nu])
        C = max(0.0, *[-_min_value(g + shift) for g in conditions])
    else:
        C = np.inf
        notes.append("F or uf - F is unbounded below for every nu; f is not dissipative.")
    nu_bound = min(float(basis.eigenvalues[0]), gamma) / 8
    nu_ok = bounded and nu <= nu_bound
    if bounded and not nu_ok:
        notes.append(f"nu = {nu:g} exceeds (lambda_1 ^ gamma)/8 = {nu_bound:g}.")

    return NonlinearityReport(
        rho, growth, float(nu), float(C), nu_bound, bounded, rho_ok, nu_ok, notes
    )
