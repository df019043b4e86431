"""Exception hierarchy. Every error names the numerical stage that raised it."""


class STLabError(Exception):
    stage = "general"


class InvalidArgument(STLabError, ValueError):
    stage = "validation"


class DegenerateMetricError(STLabError):
    stage = "geometry"


class PoleProximityError(STLabError):
    stage = "geometry"


class QuadratureFailure(STLabError):
    stage = "quadrature"


class StiffnessError(STLabError):
    """Step size underflow in the ODE integrator."""

    stage = "ode"

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class FitDegenerateError(STLabError):
    stage = "fit"


class ClusterIntegrityError(STLabError):
    stage = "spectra"

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class DiscretizationError(STLabError):
    stage = "spectra"


class ClosureError(STLabError):
    stage = "geodesics"


class TailBoundError(STLabError):
    stage = "traces"

    def __init__(self, message, t_min=None):
        super().__init__(message)
        self.t_min = t_min


class KernelEvaluationError(STLabError):
    stage = "traces"


class AsymptoteMismatchWarning(UserWarning):
    pass


class ExtrapolationError(STLabError):
    """Fit residual of an extrapolation model above its threshold."""

    stage = "traces"
