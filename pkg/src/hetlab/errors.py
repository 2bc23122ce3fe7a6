"""Exception types shared across the package."""


class HetlabError(Exception):
    """Base class for domain failures (CLI exit code 1)."""


class ConfigError(HetlabError):
    """Malformed configuration file or value (CLI exit code 2)."""


class StableManifoldHit(HetlabError):
    """Point lies on (or below) the local stable manifold of a saddle."""


class OutOfSection(HetlabError):
    """Point left the bounded cross section."""


class DomainError(HetlabError):
    """Negative base for a fractional power where positivity was required."""


class SingularHit(HetlabError):
    """Orbit landed on the logarithmic singular set of the G return map."""


class DegenerateCritical(HetlabError):
    pass


class UnreliableEstimate(HetlabError):
    pass


class ContinuationBroken(HetlabError):
    pass


class NoIntersectionWithinCap(HetlabError):
    pass


class NoConnection(HetlabError):
    pass


class TruncationTooShort(HetlabError):
    pass


class PoorFit(HetlabError):
    pass


class NumericallyDegenerate(HetlabError):
    pass


class SplitAtManifold(HetlabError):
    """Segment crosses y=0; ``pieces`` holds the result for each one-signed piece."""

    def __init__(self, msg, pieces=()):
        super().__init__(msg)
        self.pieces = list(pieces)


class NoHomoclinicity(HetlabError):
    pass


class NotAGraph(HetlabError):
    pass
