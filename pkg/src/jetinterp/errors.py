"""Exception hierarchy shared by all modules."""


class JetInterpError(Exception):
    """Base class for all library errors."""


class DegenerateJet(JetInterpError):
    """Linear part of a jet is (numerically) singular."""


class AnchorMismatch(JetInterpError):
    """Base points or composition anchors do not agree."""


class NumericOverflow(JetInterpError):
    """A flow produced non-finite values."""


class InfeasibleDecomposition(JetInterpError):
    """No combination of complete fields over the direction set reproduces the target."""


class RankDeficient(JetInterpError):
    """Lifted fields fail to span the tangent space of the jet manifold."""


class NoConvergence(JetInterpError):
    """Local Newton solve did not reach tolerance."""


class PathStuck(JetInterpError):
    """Adaptive path refinement fell below the minimum step."""


class SampleFailed(JetInterpError):
    def __init__(self, samples, reasons=None):
        self.samples = list(samples)
        self.reasons = dict(reasons or {})
        super().__init__(f"realization failed at samples {self.samples}")


class UnderdeterminedFit(JetInterpError):
    """Too few samples for the requested polynomial degree."""


class PreconditionViolated(JetInterpError):
    def __init__(self, message, gap=None, offending=None):
        self.gap = gap
        self.offending = offending
        super().__init__(message)


class BudgetViolated(JetInterpError):
    def __init__(self, stage, condition, measured=None, budget=None):
        self.stage = stage
        self.condition = condition
        self.measured = measured
        self.budget = budget
        super().__init__(
            f"stage {stage}: condition ({condition}) violated, measured {measured!r} vs budget {budget!r}"
        )


class NotSL(JetInterpError):
    """Matrix determinant is not 1."""


class DomainVanishing(JetInterpError):
    """Function has a zero (or pole) inside the parameter domain."""


class SchemaError(JetInterpError):
    def __init__(self, message, location=""):
        self.location = location
        self.message = message
        super().__init__(f"{location}: {message}" if location else message)
