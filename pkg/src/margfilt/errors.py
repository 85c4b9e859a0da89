"""Exception hierarchy shared across the library."""


class FilterError(Exception):
    """Base class for all numerical and model-consistency failures."""


class SingularSplit(FilterError):
    """Stacked [active; inactive] row matrix is not (well-conditioned) invertible."""


class RankDeficientActive(FilterError):
    """Active rows do not have full row rank, no complement can be built."""


class DegenerateActiveCov(FilterError):
    """Projected covariance is singular beyond the one-shot jitter repair."""


class NonInvertibleNoiseJacobian(FilterError):
    """Output-noise Jacobian is singular at an evaluated point."""


class BadPartition(FilterError):
    """Nonlinear/linear row partition has an overlap or a gap."""


class DimensionTooLarge(FilterError):
    """Tensor quadrature grid would exceed the configured node budget."""


class ZeroTotalWeight(FilterError):
    """Weighted sample set has (numerically) zero total weight."""


class ZeroBandwidth(FilterError):
    """Kernel bandwidth matrix is unusable (supplied matrix not positive definite)."""


class RuleUnsupportedForNoise(FilterError):
    """Deterministic quadrature requested for a non-Gaussian noise density."""


class SingularNodeCov(FilterError):
    """Per-node predicted covariance of the nonlinear block is singular."""


class SingularInnovationCov(FilterError):
    """Innovation / predicted-output covariance is singular."""


class DegenerateUpdate(FilterError):
    """Observation carries no overlap with the prior at the rule's resolution."""


class UnknownState(FilterError):
    """Binding references a state name absent from the system layout."""


class IncompatibleUnits(FilterError):
    """No conversion factor between the requested units."""


class ConfigError(Exception):
    """Scenario configuration is malformed (schema violation, unknown keys, ...)."""
