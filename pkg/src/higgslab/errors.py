"""Exception types shared across the lab."""


class HiggsLabError(Exception):
    """Base class for all lab errors."""


class ConfigError(HiggsLabError, ValueError):
    """Invalid grid, schema or run configuration."""


class ShapeError(HiggsLabError, ValueError):
    """Fields with incompatible grid, shape, twist or form type."""


class GaugeError(HiggsLabError, ValueError):
    """Gauge transformation singular at some site."""


class MetricError(HiggsLabError, ValueError):
    """Hermitian metric that is not positive definite."""


class DomainError(HiggsLabError, ValueError):
    """Operation requested outside its domain (wrong block, zero class, ...)."""


class UnsupportedError(HiggsLabError, NotImplementedError):
    """Configuration deliberately outside the lab's scope."""


class IntegratorDivergence(HiggsLabError, RuntimeError):
    """Energy kept increasing after the maximum number of step halvings."""


class AmbiguousLimit(HiggsLabError, RuntimeError):
    """Limit spectrum could not be rounded to integer degrees."""


class NotConvergedError(HiggsLabError, RuntimeError):
    """A pair expected to be a flow limit still has a large gradient."""


class NotSplitError(HiggsLabError, RuntimeError):
    """Limit moment map not block diagonal enough to read off subbundles."""


class InconclusiveResult(HiggsLabError, RuntimeError):
    """Test could not decide (e.g. no candidate subbundles supplied)."""


class NeedsDeeperSamples(HiggsLabError, RuntimeError):
    """Reverse samples do not reach close enough to the critical point."""
