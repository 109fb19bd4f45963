"""Seeded sampling from the reference models.

The generator is numpy's PCG64 (``numpy.random.default_rng``), seeded by an
unsigned 64-bit integer. A given (model, n, seed) always yields the same draws.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from stdfbias.errors import DataError, DomainError
from stdfbias.model.models import TailModel


@dataclass(frozen=True, eq=False)
class Sample:
    """An n x d matrix of observations with its provenance."""
    values: np.ndarray
    seed: Optional[int] = None
    source: str = ''

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)

        if values.ndim != 2 or values.shape[0] < 1:
            raise DataError(f'A sample is a nonempty 2-d array, got shape {values.shape}')
        if values.shape[1] < 2:
            raise DataError(f'A sample needs d >= 2 columns, got {values.shape[1]}')

        bad = np.argwhere(~np.isfinite(values))

        if len(bad):
            row, col = bad[0]
            raise DataError(f'Non-finite value at row {row + 1}, column {col + 1}')

        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented

        return self.seed == other.seed and np.array_equal(self.values, other.values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.n

    def __str__(self) -> str:
        return f'Sample(n={self.n}, d={self.d}, seed={self.seed}, source={self.source!r})'


def sample(model: TailModel, n: int, seed: int) -> Sample:
    """Draws ``n`` i.i.d. observations from ``model``.

    :param model: A reference tail model.
    :param n: Sample size, ``n >= 1``.
    :param seed: Unsigned integer seed for the PCG64 generator.
    :return: The draws, tagged with ``seed`` and the model's repr.
    """
    if n < 1:
        raise DomainError(f'Sample size must be positive, got {n}')
    if seed < 0:
        raise DomainError(f'Seeds are unsigned, got {seed}')

    rng = np.random.default_rng(seed)
    values = model.draw(rng, n)

    logger.debug('Sampled {n} draws from {model} (seed {seed})', n=n, model=model, seed=seed)

    return Sample(values=values, seed=seed, source=repr(model))
