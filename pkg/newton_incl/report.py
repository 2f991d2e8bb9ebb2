from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

SCHEMA_VERSION = 1


class RunReport(BaseModel):
    """Machine-readable result of one CLI command."""

    schema_version: Literal[1] = SCHEMA_VERSION
    command: Literal["solve", "certify", "verify", "catalog"]
    problem: Optional[str] = None
    flags: Dict[str, Any] = Field(default_factory=dict)
    certificate: Optional[Dict[str, Any]] = None
    estimate: Optional[Dict[str, Any]] = None
    robustness: Optional[Dict[str, Any]] = None
    trace: Optional[Dict[str, Any]] = None
    verification: Optional[Dict[str, Any]] = None
    runs: Optional[List[Dict[str, Any]]] = None
    problems: Optional[List[Dict[str, Any]]] = None
    exit_code: int = 0
    timing: Optional[Dict[str, float]] = None

    def to_json(self, include_timing: bool = True) -> str:
        exclude = None if include_timing else {"timing"}
        doc = self.model_dump(mode="json", exclude=exclude, exclude_none=True)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(report: RunReport, path: str | Path) -> Path:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(report.to_json(), encoding="utf-8")
    return p
