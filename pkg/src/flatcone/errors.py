"""Exception hierarchy shared by all modules.

Every error carries a stable ``code`` so the command-line tool can emit
machine-readable failures.
"""


class FlatConeError(Exception):
    code = "flatcone_error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class DefectOutOfRange(FlatConeError, ValueError):
    code = "defect_out_of_range"


class GaussBonnetViolation(FlatConeError, ValueError):
    code = "gauss_bonnet_violation"


class EmptyAlpha(FlatConeError, ValueError):
    code = "empty_alpha"


class PoleAtMultipleOf2Pi(FlatConeError, ValueError):
    code = "pole_at_multiple_of_2pi"


class BetaOutOfInterval(FlatConeError, ValueError):
    code = "beta_out_of_interval"


class DivergentMoment(FlatConeError, ValueError):
    code = "divergent_moment"


class NonMonotoneBranch(FlatConeError, ValueError):
    code = "non_monotone_branch"


class ZeroDerivativeInInterior(FlatConeError, ValueError):
    code = "zero_derivative_in_interior"


class NotNormalized(FlatConeError, ValueError):
    code = "not_normalized"


class InvalidMeasure(FlatConeError, ValueError):
    code = "invalid_measure"


class WrongArity(FlatConeError, ValueError):
    code = "wrong_arity"


class ArityLimitExceeded(FlatConeError, ValueError):
    code = "arity_limit_exceeded"


class MissingChild(FlatConeError, KeyError):
    code = "missing_child"


class QuadratureNotConverged(FlatConeError, RuntimeError):
    code = "quadrature_not_converged"


class SingularityUnresolved(FlatConeError, RuntimeError):
    code = "singularity_unresolved"


class NegativeDensity(FlatConeError, RuntimeError):
    code = "negative_density"


class BadDefectList(FlatConeError, ValueError):
    code = "bad_defect_list"


class DimensionMismatch(FlatConeError, ValueError):
    code = "dimension_mismatch"


class NonPositiveArea(FlatConeError, ValueError):
    code = "non_positive_area"


class NotConnected(FlatConeError, ValueError):
    code = "not_connected"


class MalformedSurface(FlatConeError, ValueError):
    code = "malformed_surface"


class UnfoldingDepthExceeded(FlatConeError, RuntimeError):
    code = "unfolding_depth_exceeded"


class DegenerateTriangle(FlatConeError, ValueError):
    code = "degenerate_triangle"


class ConfigError(FlatConeError, ValueError):
    code = "config_error"


class CalibrationError(FlatConeError, RuntimeError):
    code = "calibration_error"
