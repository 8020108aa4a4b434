"""Uniform pass/fail report record shared by all numerical checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckReport:
    """Outcome of one inequality or identity check.

    ``passed`` is three-valued: True, False, or None for inconclusive runs
    (Monte Carlo noise too large relative to the margin being tested).
    """

    name: str
    statistic: float
    bound: float
    passed: bool | None
    n_samples: int
    std_error: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.statistic = float(self.statistic)
        self.bound = float(self.bound)
        self.std_error = float(self.std_error)
        self.n_samples = int(self.n_samples)
        if self.passed is not None:
            self.passed = bool(self.passed)

    @property
    def verdict(self) -> str:
        if self.passed is None:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": float(self.statistic),
            "bound": float(self.bound),
            "pass": self.passed,
            "n_samples": int(self.n_samples),
            "std_error": float(self.std_error),
            "details": self.details,
        }
