"""
Influence Abstraction Toolkit - Engine Errors
One exception hierarchy for every engine module
"""

from typing import List, Optional, Sequence


class InfluenceAbstractionError(Exception):
    """Base class for all engine errors"""


class ModelValidationError(InfluenceAbstractionError, ValueError):
    """A model failed structural validation"""

    def __init__(self, violations: Sequence[str]):
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations) or "invalid model")


class ModelFormatError(InfluenceAbstractionError, ValueError):
    """A model document could not be read"""


class InfluenceOnObservationOrReward(InfluenceAbstractionError):
    """An unmodeled factor or foreign action parents the agent's observation or reward"""

    def __init__(self, agent: int, offenders: Sequence[str]):
        self.agent = agent
        self.offenders = list(offenders)
        super().__init__(
            f"agent {agent}: observation/reward depends on {', '.join(self.offenders)}; "
            "apply proxy_rewrite first (--proxy on the command line)"
        )


class UnreachableHistory(InfluenceAbstractionError, KeyError):
    """An action-observation history has no defined entry or zero probability"""

    def __init__(self, history, detail: str = ""):
        self.history = tuple(history) if history is not None else None
        message = f"unreachable history {self.history}"
        if detail:
            message += f": {detail}"
        super().__init__(message)

    def __str__(self):
        return self.args[0]


class CapExceeded(InfluenceAbstractionError):
    """A configured resource cap would be exceeded"""

    def __init__(self, kind: str, estimate: int, cap: int):
        self.kind = kind
        self.estimate = estimate
        self.cap = cap
        super().__init__(f"{kind} cap exceeded: estimated {estimate} > cap {cap}")


class ZeroEvidence(InfluenceAbstractionError):
    """Conditioning event has probability zero"""


class ZeroProbObservation(InfluenceAbstractionError):
    """Belief update requested for an observation with zero predictive probability"""


class DSetNotSeparating(InfluenceAbstractionError):
    """The supplied d-set does not render the influence sources conditionally independent"""

    def __init__(self, stage: int, max_violation: float, detail: Optional[str] = None):
        self.stage = stage
        self.max_violation = max_violation
        message = f"d-set is not separating at stage {stage} (max violation {max_violation:.3e})"
        if detail:
            message += f": {detail}"
        super().__init__(message)
