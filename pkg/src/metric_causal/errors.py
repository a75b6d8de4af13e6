"""Exception hierarchy shared by all modules."""


class MetricCausalError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(MetricCausalError, ValueError):
    """Input violates a documented invariant (off-manifold point, bad weights, ...)."""


class DomainError(MetricCausalError, ValueError):
    """Objects living on different manifolds were combined."""


class CutLocusError(MetricCausalError, ValueError):
    """The inverse exponential map is undefined (antipodal or cut-locus input)."""


class EstimationError(MetricCausalError):
    """An estimator cannot be formed from the data."""


class EmptyCellError(EstimationError):
    """A stratum has no treated or no control units.

    Attributes
    ----------
    stratum : int
        Label of the offending stratum.
    group : str
        ``"treated"`` or ``"control"``.
    """

    def __init__(self, stratum, group):
        self.stratum = stratum
        self.group = group
        super().__init__(f"stratum {stratum} has no {group} units")


class MatchingError(MetricCausalError):
    """Matching could not form any treated/control set."""


class SeparationError(MetricCausalError):
    """Logistic regression data are perfectly separated."""

    def __init__(self, direction):
        self.direction = direction
        super().__init__(
            "perfect separation in propensity model along direction "
            + ", ".join(f"{c:.4g}" for c in direction)
        )


class IngestionError(MetricCausalError, ValueError):
    """Input files are malformed or inconsistent."""
