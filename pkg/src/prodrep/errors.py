"""Exception types shared across the package."""


class ProdRepError(Exception):
    """Base class for all package-specific errors."""


class TableInvalid(ProdRepError):
    """A multiplication table is not a group table."""


class OrderCapExceeded(ProdRepError):
    """Requested group order exceeds the configured cap."""


class RepsUnavailable(ProdRepError):
    """No automatic irreducible representations for this group; supply a file."""


class ValidationFailed(ProdRepError):
    """A representation failed unitarity/homomorphism/irreducibility checks."""


class NTooSmall(ProdRepError):
    """Tuple length is below the size of a minimal generating set."""


class RejectionBudgetExceeded(ProdRepError):
    """Stationary rejection sampler exhausted its draw budget."""


class LengthMismatch(ProdRepError):
    """Configurations have different lengths or groups."""


class EmptyRow(ProdRepError):
    """A reference configuration has an empty value class, so row proportions are undefined."""


class RowSumMismatch(ProdRepError):
    """Pair-count matrices do not share row sums."""


class StateBudgetExceeded(ProdRepError):
    """Lumped state space would exceed the configured budget."""


class StartNotInChain(ProdRepError):
    """Requested start state is not in the enumerated state space."""


class SpaceTooLarge(ProdRepError):
    """Full configuration space is too large for brute-force iteration."""


class IntegralityViolated(ProdRepError):
    """Coupling parameter does not make the common-core cell size an integer."""


class OutsideMDelta(ProdRepError):
    """State pair is outside the dense-cell set required by the coupling analysis."""


class DZero(ProdRepError):
    """Coupled pair has already coalesced; case analysis undefined."""


class NoValidDelta(ProdRepError):
    """No admissible coupling parameter exists in the required interval for this n."""


class NoiseBoundViolated(ProdRepError):
    """A synthetic noise sample broke its declared bounds."""


class DominationViolated(ProdRepError):
    """Pathwise comparison inequality failed; indicates an implementation bug."""


class PreconditionViolated(ProdRepError):
    """Input state does not satisfy a documented precondition."""


class NotConverged(ProdRepError):
    """Iterative search did not certify its result."""
