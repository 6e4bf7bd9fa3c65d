"""Exception hierarchy shared across the package."""


class SSPError(Exception):
    """Base class for all errors raised by ssprollout."""


class InvalidModelError(SSPError, ValueError):
    """A model violates its structural or semantic invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"invalid model: {lines}{more}")


class NoProperPolicyError(SSPError):
    """Some state cannot reach the terminal state under any action sequence."""

    def __init__(self, states):
        self.states = list(states)
        super().__init__(f"terminal state unreachable from states {self.states[:10]}")


class NotConvergedError(SSPError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"value iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class ImproperPolicyError(SSPError):
    """The closed loop does not reach the terminal state almost surely."""

    def __init__(self, start, report=None):
        self.start = start
        self.report = report
        super().__init__(f"policy is improper from state {start}")


class ImproperRolloutError(ImproperPolicyError):
    pass


class ImproperCEError(ImproperPolicyError):
    pass


class SingularSystemError(SSPError):
    pass


class DriftViolatedError(SSPError):
    """The Lyapunov drift inequality fails at ``state`` (and ``action`` if uniform)."""

    def __init__(self, state, action=None, lhs=float("nan"), rhs=float("nan")):
        self.state = state
        self.action = action
        self.lhs = lhs
        self.rhs = rhs
        where = f"state {state}" if action is None else f"state {state}, action {action}"
        super().__init__(f"drift violated at {where}: E[L(next)]={lhs!r} > L(x)-c={rhs!r}")


class FactorTooLargeError(SSPError):
    """2(eps + delta) >= 1, so the multiplicative hitting-time certificate is void."""

    def __init__(self, factor, report=None):
        self.factor = factor
        self.report = report
        super().__init__(f"2(eps+delta) = {factor!r} >= 1; multiplicative bound inapplicable")
