"""Exception hierarchy shared across the package."""


class RelucisError(Exception):
    """Base class for all package-specific errors."""


class DegenerateDomainError(RelucisError):
    """A box domain has some lower bound >= the matching upper bound."""


class NonPositiveResolutionError(RelucisError):
    """Grid resolution must be strictly positive."""


class GridMismatchError(RelucisError):
    """Two box sets refer to different grids."""


class AlreadyBasisError(RelucisError):
    """A basis (unit) grid box cannot be partitioned further."""


class EmptySafeSetError(RelucisError):
    """Safe-set quantization produced no grid cells."""


class DimMismatchError(RelucisError):
    """Vector or matrix dimensions do not match the expected shape."""


class SchemaError(RelucisError):
    """A serialized document does not conform to its file schema."""


class UnknownVarError(RelucisError):
    """A constraint or objective references a variable id that does not exist."""


class InfiniteBoundError(RelucisError):
    """Continuous variables must carry finite bounds."""


class EmptyTargetError(RelucisError):
    """The target set of a returnability encoding is empty."""


class EmptyCisError(RelucisError):
    """The controller requires a non-empty control invariant set."""


class OutsideDomainError(RelucisError):
    """A state lies outside the declared state domain."""


class OutsideCisError(RelucisError):
    """A state lies outside the control invariant set."""
