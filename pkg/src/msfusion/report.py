"""Run reports: named check results plus timings, serialized as JSON.

Reports are deterministic for a fixed command, seed, and build; wall-clock
timings are the only nondeterministic field and can be redacted for
byte-identical comparisons.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

SCHEMA_VERSION = 1


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "error": None if self.error is None else float(self.error),
            "tolerance": None if self.tolerance is None else float(self.tolerance),
            "detail": self.detail,
        }


@dataclass
class RunReport:
    command: str
    seed: int
    config_digest: str
    checks: List[CheckResult] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.checks]
        if len(names) != len(set(names)):
            raise ValueError("every executed check must appear exactly once")

    def add(self, result: CheckResult) -> None:
        if any(c.name == result.name for c in self.checks):
            raise ValueError(f"duplicate check name {result.name!r}")
        self.checks.append(result)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self, redact_timings: bool = False) -> str:
        doc = {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "status": "pass" if self.passed else "fail",
            "checks": [c.to_json_dict() for c in self.checks],
            "timings": {"redacted": True} if redact_timings else {k: float(v) for k, v in self.timings.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
