import gc
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import psutil

from stdfbias.errors import DataError, UsageError

# tuning defaults
A_DEFAULT = 0.4
R_DEFAULT = 0.4
GRID_DEFAULT = 30
K_MARGIN_DEFAULT = 200
K_RHO_FRACTION = 0.99
RHO_FLOOR_DEFAULT = -10.0
RHO_FALLBACK = -1.0
RHO_CEILING = -0.25
DEGENERATE_TOL = 1e-12

FLOAT_FORMAT = '%.15g'


def stream_seed(base_seed: int, replicate: int) -> int:
    """Seed of replicate ``replicate``, mixed from ``base_seed`` by numpy's SeedSequence."""
    state = np.random.SeedSequence([base_seed, replicate]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def half_point(d: int) -> np.ndarray:
    return np.full(d, 0.5)


def parse_floats(text: str) -> np.ndarray:
    """Parses a comma separated list of reals, e.g. ``0.5,0.5``."""
    try:
        return np.array([float(token) for token in text.split(',')])
    except ValueError as error:
        raise UsageError(f"Expected comma separated numbers, got '{text}'") from error


def parse_ints(text: str) -> Sequence[int]:
    try:
        return [int(token) for token in text.split(',') if token.strip()]
    except ValueError as error:
        raise UsageError(f"Expected comma separated integers, got '{text}'") from error


def write_csv(frame: pd.DataFrame, path, header: bool = True) -> None:
    """Writes ``frame`` with 15 significant digits and ``\\n`` line endings."""
    try:
        frame.to_csv(path, index=False, header=header, float_format=FLOAT_FORMAT,
                     lineterminator='\n')
    except OSError as error:
        raise DataError(f'Cannot write {Path(path)}: {error}') from error


def format_float(value: float) -> str:
    return FLOAT_FORMAT % value


def auto_garbage_collect(pct=80.0):
    """
    auto_garbage_collect - Call the garbage collection if memory used is greater than pct of
                           total available memory. Replicate batches allocate many short lived
                           arrays, Ray workers in particular are slow to give them back.

        pct - Default value of 80%.  Amount of memory in use that triggers the garbage collection call.
    """
    if psutil.virtual_memory().percent >= pct:
        gc.collect()

    return
