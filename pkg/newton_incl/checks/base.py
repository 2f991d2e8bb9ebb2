from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

# absolute slack on every inequality
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    check: str
    k: int
    lhs: float
    rhs: float
    ok: bool
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "k": self.k,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "ok": self.ok,
            **({"details": self.details} if self.details else {}),
        }


@dataclass(frozen=True)
class BoundContext:
    """Newton iterates next to the scalar sequence t_k that should majorize them."""

    iterates: np.ndarray  # (K+1, n)
    step_norms: np.ndarray  # (K,)
    t: np.ndarray  # (K+1,), padded with t_star when the scalar sequence is shorter
    t_star: float
    Q: Optional[float] = None
    tol: float = BOUND_TOL

    @property
    def x_star_proxy(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def proxy_tol(self) -> float:
        last = float(self.step_norms[-1]) if len(self.step_norms) else 0.0
        return self.tol + 10.0 * last


class Check:
    name: str

    def run(self, ctx: BoundContext, **kwargs) -> List[CheckResult]:
        raise NotImplementedError


@dataclass(frozen=True)
class VerificationReport:
    results: List[CheckResult]
    note: str = ""

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def violations(self) -> List[CheckResult]:
        return [r for r in self.results if not r.ok]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "note": self.note,
            "checks": [r.to_dict() for r in self.results],
        }

    def to_frame(self) -> pd.DataFrame:
        cols = ["check", "k", "lhs", "rhs", "slack", "ok"]
        if not self.results:
            return pd.DataFrame(columns=cols)
        return pd.DataFrame([{c: r.to_dict()[c] for c in cols} for r in self.results])

    def summary(self) -> pd.DataFrame:
        """Pass/fail matrix: one row per check, counts of passing and failing k."""
        df = self.to_frame()
        if df.empty:
            return pd.DataFrame(columns=["check", "passed", "failed"])
        df["ok"] = df["ok"].astype(bool)
        out = df.groupby("check", sort=False)["ok"].agg(
            passed=lambda s: int(s.sum()), failed=lambda s: int((~s).sum())
        )
        return out.reset_index()
