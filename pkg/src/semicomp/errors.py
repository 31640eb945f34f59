"""Exception and warning types shared across the package."""


class SemicompError(Exception):
    """Base class for all package-specific errors."""


class MalformedRow(SemicompError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class InvariantViolation(SemicompError):
    def __init__(self, record_id: str, reason: str):
        self.record_id = record_id
        self.reason = reason
        super().__init__(f"record {record_id!r}: {reason}")


class EmptyArm(SemicompError):
    def __init__(self, arm: int, detail: str = ""):
        self.arm = arm
        msg = f"arm {arm} has no usable records"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateWeights(SemicompError):
    """No death event carries kernel weight at the requested time."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(
            f"no death within kernel support of t={t}; widen the bandwidth or trim the grid"
        )


class DegenerateEta(SemicompError):
    """A conditional component was requested but its conditioning event is empty."""


class EmptyCell(SemicompError):
    def __init__(self, arm: int, z: str):
        self.arm = arm
        self.z = z
        super().__init__(f"no usable records in cell (arm={arm}, z={z!r})")


class NotConverged(SemicompError):
    def __init__(self, iterations: int, last_change: float):
        self.iterations = iterations
        self.last_change = last_change
        super().__init__(
            f"EM did not converge in {iterations} iterations (last |delta loglik|={last_change:.3e})"
        )


class DegenerateTransition(SemicompError):
    def __init__(self, transition: str, detail: str = "no events"):
        self.transition = transition
        super().__init__(f"transition {transition}: {detail}")


class NonFiniteLikelihood(SemicompError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"non-finite likelihood contribution for record {record_id!r}")


class InvalidSpec(SemicompError):
    """Infeasible frailty/scenario specification."""


class VanishingStratum(SemicompError):
    def __init__(self, stratum: str, weight_sum: float):
        self.stratum = stratum
        self.weight_sum = weight_sum
        super().__init__(
            f"stratum {stratum!r} is numerically empty under the fitted model "
            f"(weight sum {weight_sum:.3e})"
        )


class TooManyFailures(SemicompError):
    def __init__(self, failed: int, total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed}/{total} bootstrap replicates failed (>10% allowed)")


class BeyondSupport(SemicompError):
    """A time point lies beyond the identified (estimable) range."""


class ResimLimitExceeded(SemicompError):
    def __init__(self, subject: int, limit: int):
        self.subject = subject
        self.limit = limit
        super().__init__(
            f"order-preservation re-simulation for subject {subject} exceeded {limit} attempts"
        )


class BeyondSupportWarning(UserWarning):
    """Evaluation required constant extrapolation beyond the last knot."""
