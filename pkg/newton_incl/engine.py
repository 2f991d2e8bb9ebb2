from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
import pandas as pd

from .certify import Certificate, InequalityCheck, RobustnessBall, perturbed_first_step_check, robustness_ball
from .checks import VerificationReport
from .majorant import Majorant, majorant_sequence
from .problems import InclusionProblem
from .solver import SolveConfig, SolveTrace, newton_solve, verify_majorant_bounds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StartRun:
    index: int  # -1 for x_tilde, perturbation index otherwise
    x0: np.ndarray
    trace: SolveTrace
    report: VerificationReport
    first_step: Optional[InequalityCheck] = None

    @property
    def label(self) -> str:
        return "x_tilde" if self.index < 0 else f"x_hat[{self.index}]"

    @property
    def passed(self) -> bool:
        first_ok = self.first_step is None or self.first_step.ok
        return self.trace.converged and self.report.passed and first_ok

    def to_dict(self) -> dict:
        return {
            "start": self.label,
            "x0": [float(v) for v in self.x0],
            "passed": self.passed,
            "trace": self.trace.to_dict(),
            "verification": self.report.to_dict(),
            "first_step": self.first_step.to_dict() if self.first_step else None,
        }


@dataclass(frozen=True)
class VerificationRun:
    base: StartRun
    perturbed: List[StartRun]
    ball: Optional[RobustnessBall] = None

    @property
    def runs(self) -> List[StartRun]:
        return [self.base, *self.perturbed]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.runs)

    def matrix(self) -> pd.DataFrame:
        """Pass/fail matrix: one row per start, one column per check (failed count)."""
        rows = []
        for r in self.runs:
            row = {"start": r.label, "status": r.trace.status, "iterations": r.trace.iterations}
            for _, s in r.report.summary().iterrows():
                row[s["check"]] = "ok" if s["failed"] == 0 else f"FAIL x{s['failed']}"
            if r.first_step is not None:
                row["first_step"] = "ok" if r.first_step.ok else "FAIL"
            row["passed"] = r.passed
            rows.append(row)
        return pd.DataFrame(rows)


def perturbed_starts(problem: InclusionProblem, rho: float, count: int, seed: int) -> List[np.ndarray]:
    """count points drawn uniformly from the open ball B(x_tilde, rho)."""
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        u = rng.standard_normal(problem.n)
        u /= max(float(np.linalg.norm(u)), 1e-300)
        r = rho * rng.random() ** (1.0 / problem.n)
        out.append(problem.x_tilde + r * u)
    return out


def _run_start(
    problem: InclusionProblem,
    index: int,
    x0: np.ndarray,
    majorant: Majorant,
    Q: Optional[float],
    config: SolveConfig,
) -> StartRun:
    trace = newton_solve(problem, x0, config, majorant=majorant)
    report = verify_majorant_bounds(trace, majorant_sequence(majorant), Q)
    return StartRun(index, np.asarray(x0, dtype=float), trace, report)


def verify_certificate(
    problem: InclusionProblem,
    cert: Certificate,
    rho: Optional[float] = None,
    perturb: int = 0,
    seed: int = 0,
    config: SolveConfig = SolveConfig(),
    workers: int = 1,
) -> VerificationRun:
    """Solve from x_tilde against f, and from `perturb` starts in B(x_tilde, rho) against g."""
    config = replace(config, record_bounds=True)
    base = _run_start(problem, -1, problem.x_tilde, cert.majorant(), cert.Q, config)
    if not perturb:
        return VerificationRun(base, [])
    if rho is None:
        raise ValueError("Perturbed starts need rho")

    ball = robustness_ball(cert, rho)
    starts = perturbed_starts(problem, rho, perturb, seed)

    def one(item) -> StartRun:
        i, x_hat = item
        run = _run_start(problem, i, x_hat, ball.g, ball.Q_rho, config)
        first = perturbed_first_step_check(problem, x_hat, cert, rho)
        return replace(run, first_step=first)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, enumerate(starts)))
    else:
        runs = [one(item) for item in enumerate(starts)]
    failed = sum(not r.passed for r in runs)
    if failed:
        log.warning("%d of %d perturbed starts failed verification (rho=%g)", failed, len(runs), rho)
    return VerificationRun(base, runs, ball)
