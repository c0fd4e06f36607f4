"""Structured results for every check, search and algorithm run."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CheckResult:
    """Outcome of one named check over a set of sampled points."""

    name: str
    passed: bool
    max_residual: float = 0.0
    worst_point: dict[str, float] | None = None
    samples_used: int = 0
    notes: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    def note(self, text: str):
        self.notes.append(text)


@dataclass
class DiagnosticsReport:
    """A bundle of check results plus anything discovered along the way
    (constraint loci, fiber families, iteration traces)."""

    title: str
    checks: list[CheckResult] = field(default_factory=list)
    discovered_constraints: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_residual(self) -> float:
        return max((c.max_residual for c in self.checks), default=0.0)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def note(self, text: str):
        self.notes.append(text)
