from dataclasses import dataclass, replace

from src.controller.clock import BudgetClock
from src.core.errors import ArgumentError


@dataclass(frozen=True)
class EpochCostEstimator:
    """EWMA of observed round durations"""

    history: tuple[float, ...] = ()
    ewma: float = 0.0
    ewma_decay: float = 0.3
    safety_factor: float = 1.2

    def __post_init__(self):
        if not 0.0 < self.ewma_decay <= 1.0:
            raise ArgumentError(f"ewma_decay must lie in (0, 1], got {self.ewma_decay}")
        if self.safety_factor < 1.0:
            raise ArgumentError(f"safety_factor must be >= 1, got {self.safety_factor}")
        if self.ewma < 0:
            raise ArgumentError(f"ewma must be >= 0, got {self.ewma}")

    @property
    def observations(self) -> int:
        return len(self.history)

    @property
    def predicted_cost(self) -> float:
        return self.safety_factor * self.ewma


def estimate_round_cost(est: EpochCostEstimator, new_duration: float) -> EpochCostEstimator:
    if new_duration < 0:
        raise ArgumentError(f"Round duration must be >= 0, got {new_duration}")
    if not est.history:
        ewma = float(new_duration)
    else:
        ewma = est.ewma_decay * new_duration + (1.0 - est.ewma_decay) * est.ewma
    return replace(est, history=est.history + (float(new_duration),), ewma=ewma)


def should_continue(clock: BudgetClock, est: EpochCostEstimator, reserve: float) -> bool:
    """Another round fits iff remaining > safety * ewma + reserve; always true before the first observation"""
    if not est.history:
        return True
    return clock.remaining() > est.predicted_cost + reserve
