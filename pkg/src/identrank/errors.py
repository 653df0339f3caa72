"""Exception types shared across the library.

The CLI maps these onto its exit-code contract: bad user input exits 2,
numerical failures exit 3.
"""


class IdentRankError(Exception):
    """Base class for all library errors."""


class InputError(IdentRankError):
    """Invalid user-supplied input: bad data, out-of-support values, malformed files."""


class DomainError(IdentRankError):
    """A differentiable primitive was evaluated outside its domain (log of a
    non-positive value, fractional power of a negative base, ...)."""


class SingularityError(IdentRankError):
    """A linear solve required full rank and the matrix was rank deficient."""

    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


class InternalConsistencyError(IdentRankError):
    """Two routes that must agree (closed form vs ODE, AD vs assembled formula)
    disagreed beyond tolerance."""


class FullRankModelError(InputError):
    """A ridge trace was requested at a point with no redundancy direction."""
