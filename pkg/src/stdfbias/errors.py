"""Exceptions raised by stdfbias.

Every error derives from :class:`StdfError`, so callers (the CLI in particular)
can map whole families of failures onto exit codes.
"""


class StdfError(Exception):
    """Base class of all stdfbias errors."""


class ModelParameterError(StdfError, ValueError):
    """A reference model was built with parameters outside their range."""


class UnsupportedOperationError(StdfError, NotImplementedError):
    """The analytic quantity has no closed form for this model."""


class DomainError(StdfError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(StdfError, ValueError):
    """A dataset could not be read or holds invalid values."""


class DegenerateError(StdfError, ArithmeticError):
    """A ratio of bias estimates has a vanishing denominator."""


class AggregationError(DegenerateError):
    """Every per-k value was excluded before aggregation."""


class FitError(StdfError):
    """A generalized Pareto fit could not be computed."""


class UsageError(StdfError):
    """The command line was malformed."""
