"""Common result record returned by every independence test."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class TestResult:
    """Outcome of a single independence test.

    p_value is None for threshold-based procedures that do not produce a
    single p-value (MultiFIT). When a p-value is present, reject must equal
    p_value <= level.
    """

    method: str
    statistic: float
    p_value: float | None
    reject: bool
    level: float
    n_used: int
    runtime_ms: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if self.runtime_ms < 0:
            raise ValueError("runtime_ms must be non-negative")
        if self.p_value is not None:
            if not 0.0 < self.p_value <= 1.0:
                raise ValueError(f"p_value out of (0, 1]: {self.p_value}")
            if self.reject != (self.p_value <= self.level):
                raise ValueError("reject must equal (p_value <= level)")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "level": self.level,
            "n_used": self.n_used,
            "runtime_ms": self.runtime_ms,
            "details": self.details,
        }
