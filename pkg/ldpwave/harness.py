"""End-to-end experiments comparing Monte Carlo estimates of the stationary measure with
the computed rate function, and report emission."""

from __future__ import annotations

import json
import math
import pathlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from scipy import stats

from .action import MAMOptions, quasipotential, quasipotential_from_attractor, quasipotential_matrix
from .common import print_status
from .dynamics import EquilibriumSet, find_equilibria
from .fwgraph import QuasipotentialMatrix, rate_function, rate_function_table
from .model import ModelConfig
from .spectral import State, as_state
from .stochastic import (
    Ball,
    BallUnion,
    NeighborhoodSystem,
    StationaryEstimate,
    estimate_stationary,
    estimate_transition,
)

SCHEMA_VERSION = 1
RELATIVE_TOLERANCE = 0.3

CONSISTENT, INCONSISTENT, INCONCLUSIVE = "consistent", "inconsistent", "inconclusive"


@dataclass(frozen=True)
class Radii:
    """Radii of the neighborhoods g_i (rho1) inside g~_i (rho0) inside rho_star; primed
    radii for the optional extra point."""

    rho1: float
    rho0: float
    rho_star: float
    rho1p: Optional[float] = None
    rho0p: Optional[float] = None
    extra: Optional[State] = None

    def __post_init__(self):
        if not 0 < self.rho1 < self.rho0 < self.rho_star:
            raise ValueError(
                f"Need 0 < rho1 < rho0 < rho_star; got {self.rho1}, {self.rho0}, {self.rho_star}."
            )
        if self.extra is not None:
            object.__setattr__(self, "extra", as_state(self.extra))  # because frozen

    def system(self, centers: Sequence[State]) -> NeighborhoodSystem:
        return NeighborhoodSystem(
            centers, self.rho1, self.rho0, self.rho_star, self.extra, self.rho1p, self.rho0p
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho1": self.rho1,
            "rho0": self.rho0,
            "rho_star": self.rho_star,
            "rho1p": self.rho1p,
            "rho0p": self.rho0p,
            "extra": None if self.extra is None else self.extra.to_dict(),
        }


@dataclass(frozen=True)
class Sampling:
    """Monte Carlo budgets."""

    dt: float = 0.05
    burn_in: float = 50.0
    t_total: float = 2000.0
    n_batches: int = 20
    n_transition_samples: int = 200
    max_time: float = 500.0
    max_half_width: Optional[float] = None

    def __post_init__(self):
        for name in ("dt", "t_total", "n_batches", "n_transition_samples", "max_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Sampling budget '{name}' must be positive; got {getattr(self, name)}.")
        if self.burn_in < 0:
            raise ValueError(f"'burn_in' must be nonnegative; got {self.burn_in}.")
        if self.max_half_width is not None and not self.max_half_width > 0:
            raise ValueError(f"'max_half_width' must be positive; got {self.max_half_width}.")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dt": self.dt,
            "burn_in": self.burn_in,
            "t_total": self.t_total,
            "n_batches": self.n_batches,
            "n_transition_samples": self.n_transition_samples,
            "max_time": self.max_time,
            "max_half_width": self.max_half_width,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Class to hold the configuration of an experiment.

    Parameters
    ----------
    model : ModelConfig
    seed : int
    eps_schedule : Sequence[float]
        Noise intensities, strictly decreasing.
    neighborhoods : Radii
    sampling : Sampling, optional
    action : MAMOptions, optional
        Settings of the quasipotential computations.
    probes : Sequence[State], optional
        Additional points u at which the rate function is evaluated and mu(B(u, rho1))
        estimated.
    equilibrium_seeds : Sequence, optional
        Extra Newton start positions.
    stability_eta : float, optional (default: 0.3)
        Radius of the neighborhood of the equilibria in the stochastic-stability check.
    tightness_radii : Sequence[float], optional
        Radii R of the complements of B(0, R) in the tightness check.
    output : str, optional (default: 'output')
        Output directory.
    n_workers : int, optional (default: 1)
        Processes over the eps cells.
    schema_version : int, optional (default: 1)

    Notes
    -----
    Use ``.from_file()`` to create an instance from a yaml file.
    """

    model: ModelConfig
    seed: int
    eps_schedule: Tuple[float, ...]
    neighborhoods: Radii
    sampling: Sampling = None
    action: MAMOptions = None
    probes: Tuple[State, ...] = ()
    equilibrium_seeds: Tuple[Any, ...] = ()
    stability_eta: float = 0.3
    tightness_radii: Tuple[float, ...] = (1.0, 2.0, 3.0)
    output: str = "output"
    n_workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"Unsupported schema version {self.schema_version}; expected {SCHEMA_VERSION}."
            )
        conversions = {
            "model": (ModelConfig, ModelConfig.from_dict),
            "neighborhoods": (Radii, lambda d: Radii(**d)),
            "sampling": (Sampling, lambda d: Sampling(**(d or {}))),
            "action": (MAMOptions, lambda d: MAMOptions.from_dict(d or {})),
        }
        for name, (cls, convert) in conversions.items():
            value = getattr(self, name)
            if not isinstance(value, cls):
                object.__setattr__(self, name, convert(value))  # because frozen
        eps = tuple(float(e) for e in self.eps_schedule)
        if not eps or eps[-1] <= 0 or any(e1 <= e2 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError(f"'eps_schedule' must be positive and strictly decreasing; got {eps}.")
        object.__setattr__(self, "eps_schedule", eps)
        object.__setattr__(
            self, "probes", tuple(as_state(p, self.model.n_modes) for p in self.probes)
        )
        object.__setattr__(self, "equilibrium_seeds", tuple(self.equilibrium_seeds))
        object.__setattr__(self, "tightness_radii", tuple(float(r) for r in self.tightness_radii))
        if not self.stability_eta > 0:
            raise ValueError(f"'stability_eta' must be positive; got {self.stability_eta}.")
        if self.n_workers < 1:
            raise ValueError(f"'n_workers' must be at least 1; got {self.n_workers}.")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ExperimentConfig:
        return cls(**data)

    @classmethod
    def from_file(cls, filepath: Union[str, pathlib.Path]) -> ExperimentConfig:
        """Create instance from yaml configuration file."""
        with open(filepath) as f:
            data = yaml.load(f, Loader=yaml.FullLoader)
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "eps_schedule": list(self.eps_schedule),
            "model": self.model.to_dict(),
            "neighborhoods": self.neighborhoods.to_dict(),
            "sampling": self.sampling.to_dict(),
            "action": self.action.to_dict(),
            "probes": [p.to_dict() for p in self.probes],
            "equilibrium_seeds": [
                s.to_dict() if isinstance(s, State) else np.asarray(s, float).tolist()
                for s in self.equilibrium_seeds
            ],
            "stability_eta": self.stability_eta,
            "tightness_radii": list(self.tightness_radii),
            "output": self.output,
            "n_workers": self.n_workers,
        }

    def to_file(self, filepath: Union[str, pathlib.Path]) -> None:
        with open(filepath, "w") as f:
            yaml.dump(self.to_dict(), f, sort_keys=False)

    def with_eps(self, eps_schedule: Iterable[float]) -> ExperimentConfig:
        return replace(self, eps_schedule=tuple(eps_schedule))


# --- Reports.


def _clean(value: Any) -> Any:
    """json-safe scalar: nan -> None, inf -> 'inf', numpy scalars -> python."""
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


def _unclean(value: Any) -> Any:
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    return value


@dataclass(frozen=True)
class LdpReport:
    """Table of Monte Carlo cells against rate-function values, with verdicts.

    Parameters
    ----------
    kind : str
        Experiment that produced the report.
    columns : Sequence[str]
        Column order of the rows.
    rows : Sequence[Dict]
        One record per cell.
    summary : Sequence[Dict]
        One record per tested object (ball, pair, ...), each with a 'verdict'.
    """

    kind: str
    columns: Tuple[str, ...]
    rows: Tuple[Dict[str, Any], ...] = ()
    summary: Tuple[Dict[str, Any], ...] = ()
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))  # because frozen
        rows = tuple({c: row.get(c) for c in self.columns} for row in self.rows)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "summary", tuple(dict(s) for s in self.summary))

    @property
    def verdicts(self) -> List[str]:
        return [s["verdict"] for s in self.summary]

    @property
    def inconclusive(self) -> bool:
        return INCONCLUSIVE in self.verdicts

    @property
    def verdict(self) -> str:
        """Overall: inconsistent if any, else inconclusive if any, else consistent."""
        verdicts = set(self.verdicts)
        for v in (INCONSISTENT, "violated", INCONCLUSIVE):
            if v in verdicts:
                return v
        return CONSISTENT

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.rows), columns=list(self.columns))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "columns": list(self.columns),
            "summary": [{k: _clean(v) for k, v in s.items()} for s in self.summary],
            "rows": [{k: _clean(v) for k, v in r.items()} for r in self.rows],
            "meta": {k: _clean(v) for k, v in self.meta.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> LdpReport:
        def restore(record):
            return {k: _unclean(v) for k, v in record.items()}

        return cls(
            data["kind"],
            data["columns"],
            [restore(r) for r in data["rows"]],
            [restore(s) for s in data["summary"]],
            restore(data.get("meta", {})),
        )


def emit(
    report: LdpReport,
    out_dir: Union[str, pathlib.Path],
    formats: Iterable[str] = ("csv", "json"),
) -> List[pathlib.Path]:
    """Write the report as ``<kind>.csv`` (one row per cell) and ``<kind>.json`` (summary
    and rows).

    Returns
    -------
    List[pathlib.Path]
        Written files.
    """
    out_dir = pathlib.Path(out_dir)
    written = []
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise ValueError(f"Format must be one of 'csv', 'json'; got '{fmt}'.")
        path = out_dir / f"{report.kind}.{fmt}"
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            if fmt == "csv":
                report.to_frame().to_csv(path, index=False, float_format="%.12g")
            else:
                with open(path, "w") as f:
                    json.dump(report.to_dict(), f, indent=2)
                    f.write("\n")
        except OSError as e:
            raise OSError(f"Could not write report to {path}: {e}") from e
        written.append(path)
    return written


# --- Shared pieces.


def _equilibria(cfg: ExperimentConfig, eq: Optional[EquilibriumSet]) -> EquilibriumSet:
    if eq is None:
        eq = find_equilibria(cfg.model, seeds=cfg.equilibrium_seeds)
    if not len(eq):
        raise ValueError("No equilibria found.")
    return eq


def _stationary_cell(args) -> StationaryEstimate:
    cfg, events, eps, k, verbose = args
    s = cfg.sampling
    return estimate_stationary(
        cfg.model,
        eps,
        events,
        burn_in=s.burn_in,
        T_total=s.t_total,
        dt=s.dt,
        seed=cfg.seed,
        n_batches=s.n_batches,
        max_half_width=s.max_half_width,
        stream=(k,),
        verbose=verbose,
    )


def _stationary_sweep(
    cfg: ExperimentConfig, events: Sequence[Any], verbose: bool = False
) -> List[StationaryEstimate]:
    """Occupation estimates for every eps; cell k uses random stream k, so the result does
    not depend on the number of workers."""
    cells = [(cfg, list(events), eps, k, verbose and cfg.n_workers == 1) for k, eps in enumerate(cfg.eps_schedule)]
    if cfg.n_workers == 1:
        return [_stationary_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=cfg.n_workers) as pool:
        return list(pool.map(_stationary_cell, cells))


def _neg_eps_log(eps: float, p: float) -> float:
    return -eps * math.log(p) if p > 0 else math.inf


def _stationary_rows(
    estimates: Sequence[StationaryEstimate], labels: Sequence[str], rates: Sequence[float]
) -> List[Dict[str, Any]]:
    rows = []
    for j, (label, rate) in enumerate(zip(labels, rates)):
        for est in estimates:
            eps = est.eps
            mu, lo, hi = float(est.fractions[j]), float(est.ci_low[j]), float(est.ci_high[j])
            low, high = _neg_eps_log(eps, hi), _neg_eps_log(eps, lo)
            beta = max(abs(low - rate), abs(high - rate)) if math.isfinite(rate) else math.inf
            rows.append(
                {
                    "ball": j,
                    "label": label,
                    "eps": eps,
                    "mu": mu,
                    "ci_low": lo,
                    "ci_high": hi,
                    "neg_eps_log_mu": _neg_eps_log(eps, mu),
                    "neg_eps_log_low": low,
                    "neg_eps_log_high": high,
                    "rate": rate,
                    "beta": beta,
                    "insufficient": bool(est.insufficient[j]),
                }
            )
    return rows


STATIONARY_COLUMNS = (
    "ball", "label", "eps", "mu", "ci_low", "ci_high", "neg_eps_log_mu",
    "neg_eps_log_low", "neg_eps_log_high", "rate", "beta", "insufficient",
)


def slope_fit(eps: Sequence[float], mu: Sequence[float], level: float = 0.95) -> Dict[str, float]:
    """Regression of ln mu against 1/eps; returns the decay rate -slope and its CI
    half-width (nan if fewer than 3 points or any mu = 0)."""
    eps, mu = np.asarray(eps, float), np.asarray(mu, float)
    if len(eps) < 3 or np.any(mu <= 0):
        return {"estimate": math.nan, "ci": math.nan, "intercept": math.nan}
    fit = stats.linregress(1 / eps, np.log(mu))
    ci = float(stats.t.ppf((1 + level) / 2, len(eps) - 2) * fit.stderr)
    return {"estimate": -float(fit.slope), "ci": ci, "intercept": float(fit.intercept)}


def slope_verdict(estimate: float, ci: float, rate: float, rtol: float = RELATIVE_TOLERANCE) -> str:
    """Compare a fitted decay rate with the rate function.

    Inconclusive when there is no fit or the CI dominates the estimate; consistent when
    the estimate is within ``rtol`` of the rate, widened by the CI.
    """
    if math.isnan(estimate) or not math.isfinite(rate):
        return INCONCLUSIVE
    if ci > max(abs(estimate), rate, 0.05):
        return INCONCLUSIVE
    return CONSISTENT if abs(estimate - rate) <= rtol * rate + ci else INCONSISTENT


# --- Experiments.


def ldp_verify(
    cfg: ExperimentConfig,
    V: QuasipotentialMatrix = None,
    eq: EquilibriumSet = None,
    verbose: bool = False,
) -> LdpReport:
    """Compare the decay of mu^eps(B(u_j, rho1)) with the rate function at u_j.

    Parameters
    ----------
    cfg : ExperimentConfig
    V : QuasipotentialMatrix, optional
        Quasipotentials between the equilibria; computed if not given.
    eq : EquilibriumSet, optional
        Computed if not given.
    verbose : bool, optional (default: False)

    Returns
    -------
    LdpReport
        One row per (ball, eps); one summary record per ball with the fitted decay rate,
        its CI, the rate-function value, and the verdict.

    Notes
    -----
    Balls are placed at every equilibrium and at every probe point of the configuration.
    For a probe u the rate function needs V(u_i, u), obtained by the minimum action method.
    """
    eq = _equilibria(cfg, eq)
    model = cfg.model
    if V is None:
        if verbose:
            print_status(f"Computing quasipotentials between {len(eq)} equilibria.")
        V, _ = quasipotential_matrix(model, eq, cfg.action, verbose=verbose)
    if V.size != len(eq):
        raise ValueError(f"Matrix has size {V.size}; found {len(eq)} equilibria.")
    table = rate_function_table(V, stable=eq.stable_indices)

    centers, labels, rates = list(eq.states), list(eq.labels), list(table.values)
    for k, probe in enumerate(cfg.probes):
        to_probe = [quasipotential(u, probe, model, cfg.action).value for u in eq.states]
        centers.append(probe)
        labels.append(f"probe_{k}")
        rates.append(rate_function(V, to_probe).value)

    rho = cfg.neighborhoods.rho1
    events = [Ball(c, rho) for c in centers]
    estimates = _stationary_sweep(cfg, events, verbose)
    rows = _stationary_rows(estimates, labels, rates)

    summary = []
    for j, (label, rate) in enumerate(zip(labels, rates)):
        mu = [float(est.fractions[j]) for est in estimates]
        fit = slope_fit(cfg.eps_schedule, mu)
        verdict = slope_verdict(fit["estimate"], fit["ci"], rate)
        deviation = abs(fit["estimate"] - rate) / rate if rate > 0 and math.isfinite(rate) else math.nan
        summary.append(
            {
                "ball": j,
                "label": label,
                "rate": rate,
                "slope_estimate": fit["estimate"],
                "slope_ci": fit["ci"],
                "relative_deviation": deviation,
                "verdict": verdict,
            }
        )
        if verbose:
            print_status(f"Ball {j} ({label}): decay {fit['estimate']:.4g} vs rate {rate:.4g}: {verdict}.")
    meta = {"seed": cfg.seed, "alpha": cfg.model.alpha, "rho1": rho, "n_equilibria": len(eq)}
    return LdpReport("ldp_verify", STATIONARY_COLUMNS, rows, summary, meta)


def _trend_verdict(eps: Sequence[float], values: Sequence[float], level: float = 0.95) -> Tuple[str, float]:
    """Verdict on eps ln mu -> 0 from a one-sided Kendall test of |eps ln mu| against eps."""
    values = np.asarray(values, float)
    if np.any(~np.isfinite(values)):
        return INCONCLUSIVE, math.nan
    if np.all(values == 0):
        return CONSISTENT, 0.0
    if len(values) < 3:
        return INCONCLUSIVE, math.nan
    p = float(stats.kendalltau(eps, np.abs(values), alternative="greater").pvalue)
    if p <= 1 - level:
        return CONSISTENT, p
    p_up = float(stats.kendalltau(eps, np.abs(values), alternative="less").pvalue)
    return (INCONSISTENT if p_up <= 1 - level else INCONCLUSIVE), p


def stochastic_stability_check(
    cfg: ExperimentConfig,
    eta: float = None,
    balls: Sequence[Ball] = None,
    eq: EquilibriumSet = None,
    verbose: bool = False,
) -> LdpReport:
    """Trend of eps ln mu^eps(E_eta) over the eps schedule, E_eta the eta-neighborhood of
    the equilibria.

    Parameters
    ----------
    cfg : ExperimentConfig
    eta : float, optional
        Default ``cfg.stability_eta``.
    balls : Sequence[Ball], optional
        Additional events, checked the same way (e.g. a ball away from the equilibria, for
        which the trend must fail).
    eq : EquilibriumSet, optional

    Returns
    -------
    LdpReport
        Verdict 'consistent' per event iff eps ln mu tends to 0 (one-sided Kendall test at
        95%).
    """
    eq = _equilibria(cfg, eq)
    eta = cfg.stability_eta if eta is None else eta
    events = [BallUnion(tuple(Ball(s, eta) for s in eq.states))] + list(balls or [])
    labels = [f"equilibria_{eta:g}"] + [f"ball_{k}" for k in range(len(events) - 1)]
    estimates = _stationary_sweep(cfg, events, verbose)

    columns = ("event", "label", "eps", "mu", "ci_low", "ci_high", "eps_log_mu")
    rows, summary = [], []
    for j, label in enumerate(labels):
        values = []
        for est in estimates:
            mu = float(est.fractions[j])
            value = est.eps * math.log(mu) if mu > 0 else -math.inf
            values.append(value)
            rows.append(
                {
                    "event": j,
                    "label": label,
                    "eps": est.eps,
                    "mu": mu,
                    "ci_low": float(est.ci_low[j]),
                    "ci_high": float(est.ci_high[j]),
                    "eps_log_mu": value,
                }
            )
        verdict, p = _trend_verdict(cfg.eps_schedule, values)
        summary.append({"event": j, "label": label, "p_value": p, "verdict": verdict})
    meta = {"eta": eta, "seed": cfg.seed, "alpha": cfg.model.alpha}
    return LdpReport("stochastic_stability", columns, rows, summary, meta)


def transition_vs_vtilde(
    cfg: ExperimentConfig,
    pairs: Iterable[Tuple[int, int]],
    V_tilde: QuasipotentialMatrix = None,
    eq: EquilibriumSet = None,
    verbose: bool = False,
) -> LdpReport:
    """Compare -eps ln P~(i -> j) of the boundary chain with V~(u_i, u_j).

    Parameters
    ----------
    cfg : ExperimentConfig
    pairs : Iterable[Tuple[int, int]]
        Distinct indices into the neighborhood points (the equilibria, then the extra point
        if configured).
    V_tilde : QuasipotentialMatrix, optional
        Constrained quasipotentials between the neighborhood points; computed with paths
        avoiding the rho1-balls of the other points if not given.
    eq : EquilibriumSet, optional

    Returns
    -------
    LdpReport
        One row per (pair, eps). The verdict per pair uses the smallest eps with a hit:
        consistent when the CI of -eps ln P~ meets [0.7 V~, 1.3 V~]; inconclusive when no eps
        has a hit.
    """
    eq = _equilibria(cfg, eq)
    model, radii = cfg.model, cfg.neighborhoods
    ns = radii.system([s.padded(model.n_modes) for s in eq.states]).validate(model)
    pairs = [(int(i), int(j)) for i, j in pairs]
    for i, j in pairs:
        if i == j or not (0 <= i < ns.n_points and 0 <= j < ns.n_points):
            raise ValueError(f"Pairs need distinct indices in 0..{ns.n_points - 1}; got ({i}, {j}).")
    if V_tilde is None:
        V_tilde, _ = quasipotential_matrix(
            model, eq, cfg.action, avoiding=True, rho_avoid=radii.rho1, extra=radii.extra, verbose=verbose
        )
    if V_tilde.size != ns.n_points:
        raise ValueError(f"Matrix has size {V_tilde.size}; expected {ns.n_points}.")

    columns = (
        "i", "j", "eps", "hits", "n_finished", "p_hat", "ci_low", "ci_high",
        "neg_eps_log", "neg_eps_log_low", "neg_eps_log_high", "vtilde", "beta", "bound_only",
    )
    rows, summary = [], []
    s = cfg.sampling
    for i, j in pairs:
        vt = V_tilde[i, j]
        estimates = estimate_transition(
            model, ns, cfg.eps_schedule, i, j, s.n_transition_samples, cfg.seed,
            dt=s.dt, max_time=s.max_time, verbose=verbose,
        )
        for est in estimates:
            beta = (
                max(abs(est.neg_eps_log_low - vt), abs(est.neg_eps_log_high - vt))
                if math.isfinite(vt)
                else math.inf
            )
            record = est.to_dict()
            record.update({"vtilde": vt, "beta": beta})
            rows.append(record)
        hit = [e for e in estimates if not e.bound_only]
        if not hit:
            verdict, beta = (CONSISTENT if math.isinf(vt) else INCONCLUSIVE), math.nan
        elif math.isinf(vt):
            verdict, beta = INCONSISTENT, math.inf
        else:
            last = hit[-1]
            lo, hi = (1 - RELATIVE_TOLERANCE) * vt, (1 + RELATIVE_TOLERANCE) * vt
            verdict = CONSISTENT if last.neg_eps_log_low <= hi and last.neg_eps_log_high >= lo else INCONSISTENT
            beta = max(abs(last.neg_eps_log_low - vt), abs(last.neg_eps_log_high - vt))
        summary.append(
            {
                "i": i,
                "j": j,
                "vtilde": vt,
                "eps": hit[-1].eps if hit else math.nan,
                "neg_eps_log": hit[-1].neg_eps_log if hit else math.nan,
                "beta": beta,
                "verdict": verdict,
            }
        )
    return LdpReport("transition_vs_vtilde", columns, rows, summary, {"seed": cfg.seed, "alpha": cfg.model.alpha})


def attractor_bound_check(
    cfg: ExperimentConfig,
    balls: Sequence[Ball],
    eq: EquilibriumSet = None,
    connections: Iterable[Any] = (),
    verbose: bool = False,
) -> LdpReport:
    """Upper bound limsup eps ln mu^eps(F) <= -inf_F V_A for closed balls F away from the
    equilibria.

    The infimum over F is approximated by the quasipotential from the attractor to the
    center of F, with the target radius fixed at the ball radius. The verdict uses the
    smallest eps: 'violated' when the upper CI end of -eps ln mu lies below the bound by
    more than the relative tolerance.
    """
    eq = _equilibria(cfg, eq)
    model = cfg.model
    balls = [b if isinstance(b, Ball) else Ball(**b) for b in balls]
    for k, ball in enumerate(balls):
        if ball.complement:
            raise ValueError("Attractor bounds need closed balls, not complements.")
        if any(model.distance(ball.center.padded(model.n_modes), s) <= ball.radius for s in eq.states):
            raise ValueError(f"Ball {k} contains an equilibrium.")
    connections = list(connections)
    bounds = []
    for ball in balls:
        opts = replace(cfg.action, eta_schedule=(ball.radius,))
        bounds.append(quasipotential_from_attractor(ball.center, eq, model, opts, connections))

    estimates = _stationary_sweep(cfg, balls, verbose)
    labels = [f"ball_{k}" for k in range(len(balls))]
    rows = _stationary_rows(estimates, labels, bounds)
    summary = []
    for j, bound in enumerate(bounds):
        last = estimates[-1]
        high = _neg_eps_log(last.eps, float(last.ci_low[j]))
        if bound == 0 or high >= (1 - RELATIVE_TOLERANCE) * bound:
            verdict = CONSISTENT
        else:
            verdict = "violated"
        summary.append({"ball": j, "bound": bound, "neg_eps_log_high": high, "verdict": verdict})
    return LdpReport("attractor_bound", STATIONARY_COLUMNS, rows, summary, {"seed": cfg.seed, "alpha": cfg.model.alpha})


def tightness_check(
    cfg: ExperimentConfig, radii: Sequence[float] = None, verbose: bool = False
) -> LdpReport:
    """Exponential-tightness proxy: mu^eps of the complement of B(0, R), which must not
    increase in R nor as eps decreases (within the CIs)."""
    radii = sorted(cfg.tightness_radii if radii is None else radii)
    origin = State.zeros(cfg.model.n_modes)
    events = [Ball(origin, R, complement=True) for R in radii]
    estimates = _stationary_sweep(cfg, events, verbose)

    columns = ("radius", "eps", "mu", "ci_low", "ci_high")
    rows = [
        {
            "radius": R,
            "eps": est.eps,
            "mu": float(est.fractions[k]),
            "ci_low": float(est.ci_low[k]),
            "ci_high": float(est.ci_high[k]),
        }
        for k, R in enumerate(radii)
        for est in estimates
    ]
    summary = []
    for k, R in enumerate(radii):
        ok = all(
            estimates[e + 1].fractions[k] <= estimates[e].ci_high[k]
            for e in range(len(estimates) - 1)
        )
        if k + 1 < len(radii):
            ok &= all(est.fractions[k + 1] <= est.fractions[k] for est in estimates)
        summary.append({"radius": R, "verdict": CONSISTENT if ok else INCONSISTENT})
    return LdpReport("tightness", columns, rows, summary, {"seed": cfg.seed, "alpha": cfg.model.alpha})
