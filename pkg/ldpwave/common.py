import datetime as dt

import numpy as np
from tqdm import tqdm


def print_status(msg: str):
    """Print current timestamp and status message ``msg`` to terminal."""
    tqdm.write(f"{dt.datetime.now().isoformat()} {msg}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator for ``seed``, optionally on a sub-``stream``.

    Identical (seed, stream) give bitwise identical draws on every platform; distinct
    streams are statistically independent.
    """
    if seed is None:
        raise ValueError("A seed must be given; runs are always reproducible.")
    sequence = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(sequence))


def progress(iterable, verbose: bool, **kwargs):
    """Wrap ``iterable`` in a progress bar if ``verbose``."""
    return tqdm(iterable, **kwargs) if verbose else iterable


class InvalidStateError(ValueError):
    """State with wrong shape or non-finite entries."""


class DivergenceError(RuntimeError):
    """Flow left the configured ceiling in the phase-space norm."""


class UnsupportedNonlinearityError(NotImplementedError):
    """Nonlinearity is not a polynomial."""


class BudgetError(ValueError):
    """Requested computation exceeds a combinatorial or step budget."""


class QuadratureRangeError(OverflowError):
    """Quadrature overflowed on an extreme state."""
