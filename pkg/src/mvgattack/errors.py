"""Exception types shared across the package."""


class MVGAttackError(Exception):
    """Base class; the CLI maps these to machine-readable error JSON."""


class InvalidJointError(MVGAttackError, ValueError):
    pass


class SingularMatrixError(MVGAttackError, ValueError):
    pass


class DimensionError(MVGAttackError, ValueError):
    pass


class DegenerateNormalization(MVGAttackError, ValueError):
    """|phi*| too close to zero for the weight normalization to be meaningful."""


class SamplingError(MVGAttackError, RuntimeError):
    pass


class VertexLimitError(MVGAttackError, ValueError):
    pass


class CertificationError(MVGAttackError, RuntimeError):
    pass


class SchemaError(MVGAttackError, ValueError):
    pass


class DataError(MVGAttackError, ValueError):
    pass
