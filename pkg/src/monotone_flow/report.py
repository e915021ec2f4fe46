"""Structured check reports with deterministic JSON encoding."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


def jsonable(obj: Any) -> Any:
    """Convert numpy containers and non-finite floats into plain JSON values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``;
    floats are rounded through ``repr`` so output is byte-stable.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class Report:
    """Verdict of one check.

    ``worst_margin`` is signed so that positive values are violations; a
    ``FAIL`` always carries a ``witness``.
    """

    check: str
    verdict: str
    worst_margin: float
    witness: Any = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == FAIL and self.witness is None:
            raise ValueError("a failing report must carry a witness")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_json(self) -> dict:
        return jsonable({
            "check": self.check,
            "verdict": self.verdict,
            "worst_margin": self.worst_margin,
            "witness": self.witness,
            "details": self.details,
        })


def verdict_from(ok: bool) -> str:
    return PASS if ok else FAIL


def combine(check: str, reports: list[Report], details: dict | None = None) -> Report:
    """Merge sub-reports: FAIL dominates INCONCLUSIVE dominates PASS."""
    verdicts = [r.verdict for r in reports]
    if FAIL in verdicts:
        verdict = FAIL
    elif INCONCLUSIVE in verdicts:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS
    worst = max((r.worst_margin for r in reports), default=-math.inf)
    witness = next((r.witness for r in reports if r.verdict == FAIL), None)
    body = {"parts": [r.to_json() for r in reports]}
    if details:
        body.update(details)
    return Report(check, verdict, worst, witness, body)
