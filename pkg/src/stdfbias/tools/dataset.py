from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import rankdata

from stdfbias.errors import DataError
from stdfbias.model.sampler import Sample
from stdfbias.tools.utils import write_csv


@dataclass(frozen=True)
class RankMatrix:
    """Column-wise ranks of a sample, 1 for the smallest value in its column.

    Ties are broken by ascending row index, so each column is a permutation of 1..n.
    """
    ranks: np.ndarray

    def __post_init__(self):
        ranks = np.asarray(self.ranks)

        if ranks.ndim != 2 or ranks.shape[0] < 1 or ranks.shape[1] < 1:
            raise DataError(f'Ranks form a nonempty 2-d array, got shape {ranks.shape}')

        expected = np.arange(1, ranks.shape[0] + 1)

        if not np.all(np.sort(ranks, axis=0) == expected[:, None]):
            raise DataError('Every column of a rank matrix must be a permutation of 1..n')

        ranks = ranks.astype(np.int64)
        ranks.setflags(write=False)
        object.__setattr__(self, 'ranks', ranks)

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    @property
    def d(self) -> int:
        return self.ranks.shape[1]

    def __str__(self) -> str:
        return f'RankMatrix(n={self.n}, d={self.d})'


def ranks(sample: Union[Sample, np.ndarray]) -> RankMatrix:
    """Column-wise ranks of ``sample``; invariant under increasing transformations of a column."""
    values = sample.values if isinstance(sample, Sample) else np.asarray(sample, dtype=float)

    if values.ndim != 2 or values.shape[0] < 1:
        raise DataError(f'Cannot rank an array of shape {values.shape}')

    bad = np.argwhere(~np.isfinite(values))

    if len(bad):
        row, col = bad[0]
        raise DataError(f'Non-finite value at row {row + 1}, column {col + 1}')

    # 'ordinal' breaks ties in order of appearance
    return RankMatrix(rankdata(values, method='ordinal', axis=0))


def _is_number(cell) -> bool:
    try:
        float(cell)
    except (TypeError, ValueError):
        return False

    return True


def load_dataset(path, d: Optional[int] = None) -> Sample:
    """Loads a numeric CSV file (comma separated, optional header) into a :class:`Sample`.

    The first line is a header iff one of its cells is not a number.

    :param path: Path to the CSV file.
    :param d: Expected number of columns, any ``d >= 2`` when omitted.
    :raises DataError: Missing file, wrong column count or a bad cell (line and column
        are 1-based and refer to the file).
    """
    path = Path(path)

    try:
        frame = pd.read_csv(path, header=None, dtype=str, na_filter=False,
                            keep_default_na=False, skip_blank_lines=False)
    except FileNotFoundError as error:
        raise DataError(f'No such dataset: {path}') from error
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as error:
        raise DataError(f'Cannot parse {path}: {error}') from error

    frame = frame.apply(lambda column: column.str.strip())
    first_line = 1

    if not all(_is_number(cell) for cell in frame.iloc[0]):
        logger.debug('Skipping header of {path}: {header}', path=path,
                     header=','.join(map(str, frame.iloc[0])))
        frame = frame.iloc[1:]
        first_line = 2

    if frame.empty:
        raise DataError(f'{path} holds no observations')
    if frame.shape[1] < 2:
        raise DataError(f'{path} has {frame.shape[1]} column, at least 2 are needed')
    if d is not None and frame.shape[1] != d:
        raise DataError(f'{path} has {frame.shape[1]} columns, expected {d}')

    values = frame.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad = np.argwhere(~np.isfinite(values))

    if len(bad):
        row, col = bad[0]
        raise DataError(f'{path}: invalid value {frame.iat[row, col]!r} at line '
                        f'{row + first_line}, column {col + 1}')

    logger.info('Loaded {n} observations of dimension {d} from {path}', n=values.shape[0],
                d=values.shape[1], path=path)

    return Sample(values=values, source=str(path))


def write_sample_csv(sample: Sample, path) -> None:
    """Writes ``sample`` under a header ``x1,...,xd``."""
    columns = [f'x{j + 1}' for j in range(sample.d)]
    write_csv(pd.DataFrame(sample.values, columns=columns), path)
