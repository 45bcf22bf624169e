"""Chain graphs over the equilibria, the minima W_l(u_i) and the rate function.

Indices are 0-based: equilibrium i is row/column i of the quasipotential matrix.
"""

from __future__ import annotations

import itertools
import json
import math
import pathlib
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .common import BudgetError

Arrow = Tuple[int, int]
Chain = Tuple[Arrow, ...]

MAX_CHAIN_SIZE = 9
MAX_TREE_SIZE = 7


@dataclass(frozen=True)
class QuasipotentialMatrix:
    """Pairwise quasipotentials V[i][j] = V(u_i, u_j), +inf allowed.

    Parameters
    ----------
    values : array-like
        Square matrix; diagonal must be 0 and entries nonnegative.
    provenance : Sequence[Sequence[str]], optional
        Where each entry comes from (optimizer run, fixture, ...).
    """

    values: np.ndarray
    provenance: Tuple[Tuple[str, ...], ...] = None

    def __post_init__(self):
        values = np.array(self.values, float, ndmin=2)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"Quasipotential matrix must be square; got shape {values.shape}.")
        if np.any(np.isnan(values)) or np.any(values < 0):
            raise ValueError("Quasipotential entries must be nonnegative (or +inf).")
        if np.any(np.diag(values) != 0):
            raise ValueError("Quasipotential matrix must have a zero diagonal.")
        values.setflags(write=False)
        provenance = self.provenance
        if provenance is None:
            provenance = [["fixture"] * len(values) for _ in range(len(values))]
        provenance = tuple(tuple(str(p) for p in row) for row in provenance)
        if len(provenance) != len(values) or any(len(row) != len(values) for row in provenance):
            raise ValueError("Provenance must have the same shape as the values.")
        object.__setattr__(self, "values", values)  # because frozen
        object.__setattr__(self, "provenance", provenance)

    @property
    def size(self) -> int:
        return len(self.values)

    def __getitem__(self, ij: Tuple[int, int]) -> float:
        return float(self.values[ij])

    def permuted(self, order: Sequence[int]) -> QuasipotentialMatrix:
        """Relabel: new index k is old index order[k]."""
        order = list(order)
        return QuasipotentialMatrix(
            self.values[np.ix_(order, order)],
            [[self.provenance[i][j] for j in order] for i in order],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "values": [[v if math.isfinite(v) else "inf" for v in row] for row in self.values.tolist()],
            "provenance": [list(row) for row in self.provenance],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> QuasipotentialMatrix:
        values = [[float(v) for v in row] for row in data["values"]]
        return cls(values, data.get("provenance"))

    @classmethod
    def from_file(cls, filepath: Union[str, pathlib.Path]) -> QuasipotentialMatrix:
        """Load matrix from json file."""
        with open(filepath) as f:
            return cls.from_dict(json.load(f))

    def to_file(self, filepath: Union[str, pathlib.Path]) -> None:
        with open(filepath, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def _check_size(ell: int, i: int, limit: int) -> None:
    if not 1 <= ell <= limit:
        raise BudgetError(f"Number of equilibria must be in 1..{limit}; got {ell}.")
    if not 0 <= i < ell:
        raise ValueError(f"Index must be in 0..{ell - 1}; got {i}.")


def enumerate_chains(ell: int, i: int) -> List[Chain]:
    """All chains m_1 -> m_2 -> ... -> m_l through every index, ending at ``i``.

    Parameters
    ----------
    ell : int
        Number of equilibria, 1..9.
    i : int
        End point, 0..ell-1.

    Returns
    -------
    List[Chain]
        (ell - 1)! chains in lexicographic order of (m_1, ..., m_(l-1)); each chain is a
        tuple of arrows (m, n). For ell = 1 the single chain has no arrows.
    """
    _check_size(ell, i, MAX_CHAIN_SIZE)
    others = [m for m in range(ell) if m != i]
    chains = []
    for perm in itertools.permutations(others):
        sequence = perm + (i,)
        chains.append(tuple(zip(sequence, sequence[1:])))
    return chains


def _arrow_sum(chain: Iterable[Arrow], values: np.ndarray) -> float:
    total = 0.0
    for m, n in chain:
        total += values[m, n]  # inf saturates
    return total


def _in_trees(ell: int, i: int) -> Iterable[Chain]:
    """All graphs with one arrow out of every m != i and no cycles (in-trees to i)."""
    others = [m for m in range(ell) if m != i]
    for heads in itertools.product(*[[n for n in range(ell) if n != m] for m in others]):
        succ = dict(zip(others, heads))
        acyclic = True
        for m in others:
            seen, node = set(), m
            while node != i:
                if node in seen:
                    acyclic = False
                    break
                seen.add(node)
                node = succ[node]
            if not acyclic:
                break
        if acyclic:
            yield tuple(sorted(succ.items()))


@dataclass(frozen=True)
class WResult:
    """Minimum of the arrow sums over the graphs ending at ``i``.

    all_infinite : every graph has an infinite arrow sum.
    n_ties : number of graphs attaining the minimum; the lexicographically first is kept.
    """

    i: int
    value: float
    chain: Chain
    all_infinite: bool
    n_ties: int
    mode: str = "chain"


def W(ell: int, i: int, V: QuasipotentialMatrix, mode: str = "chain") -> WResult:
    """W_l(u_i): minimum over the chain graphs ending at ``i`` of the summed V.

    Parameters
    ----------
    ell : int
    i : int
    V : QuasipotentialMatrix
        Of size ``ell``.
    mode : {'chain' (default), 'in_tree'}
        'in_tree' minimizes over in-trees to ``i`` instead, for comparison (ell <= 7).

    Returns
    -------
    WResult
    """
    if V.size != ell:
        raise ValueError(f"Matrix has size {V.size}; expected {ell}.")
    if mode == "chain":
        graphs = enumerate_chains(ell, i)
    elif mode == "in_tree":
        _check_size(ell, i, MAX_TREE_SIZE)
        graphs = sorted(_in_trees(ell, i))
    else:
        raise ValueError(f"'mode' must be one of 'chain', 'in_tree'; got '{mode}'.")
    best, best_graph, ties = math.inf, graphs[0], 0
    for graph in graphs:
        total = _arrow_sum(graph, V.values)
        if total < best:
            best, best_graph, ties = total, graph, 1
        elif total == best:
            ties += 1
    return WResult(i, best, best_graph, math.isinf(best), ties, mode)


@dataclass(frozen=True)
class RateFunctionValue:
    """Rate function at a point, over all equilibria and over the stable ones only.

    single_equilibrium : l = 1; the value is V(u_1, u) and equals the quasipotential from
    the (singleton) attractor.
    """

    value: float
    value_stable: Optional[float]
    W: Tuple[float, ...]
    argmin: int
    argmin_stable: Optional[int]
    single_equilibrium: bool


def _rate(W_values: np.ndarray, v_to_target: np.ndarray, indices: List[int]) -> Tuple[float, int]:
    totals = W_values[indices] + v_to_target[indices]
    k = int(np.argmin(totals))
    w_min = float(np.min(W_values[indices]))
    if math.isinf(w_min):
        return math.inf, indices[k]
    return float(totals[k] - w_min), indices[k]


def rate_function(
    V: QuasipotentialMatrix,
    v_to_target: Iterable[float],
    stable: Iterable[int] = None,
) -> RateFunctionValue:
    """Rate function min_i [W(u_i) + V(u_i, u)] - min_i W(u_i) at a point u.

    Parameters
    ----------
    V : QuasipotentialMatrix
        Quasipotentials between the l equilibria.
    v_to_target : Iterable[float]
        V(u_i, u) for every equilibrium i.
    stable : Iterable[int], optional
        Indices of the stable equilibria; if given, the variant restricted to them is also
        evaluated.

    Returns
    -------
    RateFunctionValue
    """
    ell = V.size
    v_to_target = np.asarray(list(v_to_target), float)
    if len(v_to_target) != ell:
        raise ValueError(f"Need {ell} values V(u_i, u); got {len(v_to_target)}.")
    W_values = np.array([W(ell, i, V).value for i in range(ell)])
    value, argmin = _rate(W_values, v_to_target, list(range(ell)))
    value_stable = argmin_stable = None
    if stable is not None:
        stable = sorted(stable)
        if stable:
            value_stable, argmin_stable = _rate(W_values, v_to_target, stable)
    return RateFunctionValue(
        value, value_stable, tuple(W_values.tolist()), argmin, argmin_stable, ell == 1
    )


@dataclass(frozen=True)
class RateFunctionTable:
    """Rate function at every equilibrium, with W and the minimizing chain per index."""

    values: np.ndarray
    values_stable: Optional[np.ndarray]
    W: np.ndarray
    chains: Tuple[Chain, ...] = field(repr=False)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                "equilibrium": np.arange(len(self.values)),
                "W": self.W,
                "rate": self.values,
                "chain": [" ".join(f"{m}->{n}" for m, n in c) for c in self.chains],
            }
        )
        if self.values_stable is not None:
            df.insert(3, "rate_stable", self.values_stable)
        return df

    def to_dict(self) -> Dict[str, Any]:
        def clean(x):
            return None if x is None else [v if math.isfinite(v) else "inf" for v in x.tolist()]

        return {
            "rate": clean(self.values),
            "rate_stable": clean(self.values_stable),
            "W": clean(self.W),
            "chains": [[list(a) for a in c] for c in self.chains],
        }


def rate_function_table(V: QuasipotentialMatrix, stable: Iterable[int] = None) -> RateFunctionTable:
    """Rate function evaluated at each equilibrium u_k (column k of V)."""
    ell = V.size
    results = [W(ell, i, V) for i in range(ell)]  # once; shared by every column
    W_values = np.array([r.value for r in results])
    stable = None if stable is None else sorted(stable)
    values, values_stable = [], []
    for k in range(ell):
        values.append(_rate(W_values, V.values[:, k], list(range(ell)))[0])
        values_stable.append(_rate(W_values, V.values[:, k], stable)[0] if stable else np.nan)
    return RateFunctionTable(
        np.array(values),
        None if stable is None else np.array(values_stable),
        W_values,
        tuple(r.chain for r in results),
    )
