import pathlib
import shutil
from typing import Optional, Tuple, Union

from .harness import ExperimentConfig

EXAMPLES = ("doublewell", "linear", "singlewell")


def _checked_filepath(
    which: str, filepath: Union[str, pathlib.Path] = None
) -> Tuple[pathlib.Path, Optional[pathlib.Path]]:
    """Packaged experiment file for ``which`` and, if given, the checked destination."""
    if which not in EXAMPLES:
        raise ValueError(f"Example must be one of {', '.join(EXAMPLES)}; got '{which}'.")
    source = pathlib.Path(__file__).parent / f"example_experiment_{which}.yaml"
    if filepath is None:
        return source, None
    filepath = pathlib.Path(filepath)
    if filepath.is_dir():
        raise ValueError(f"Must specify path to a file; {filepath} is a directory.")
    if filepath.exists():
        raise ValueError(f"File {filepath} already exists; delete first.")
    return source, filepath


def example_experiment(which: str = "doublewell") -> ExperimentConfig:
    """Example instance of ExperimentConfig class.

    Parameters
    ----------
    which : {'doublewell' (default), 'linear', 'singlewell'}
        Which example to load.

    Returns
    -------
    ExperimentConfig
    """
    source, _ = _checked_filepath(which)
    return ExperimentConfig.from_file(source)


def example_experiment_to_file(
    filepath: Union[str, pathlib.Path], which: str = "doublewell"
) -> None:
    """Save an example experiment file, to adapt and load with ``ExperimentConfig.from_file``."""
    shutil.copy(*_checked_filepath(which, filepath))
