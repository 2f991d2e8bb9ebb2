from __future__ import annotations

from typing import List

import numpy as np

from .base import BoundContext, Check, CheckResult

# scalar gaps below this make the ratio bound meaningless
MIN_T_GAP = 1e-15


class StepGapCheck(Check):
    """||x_{k+1} - x_k|| <= t_{k+1} - t_k."""

    name = "step_le_gap"

    def run(self, ctx: BoundContext, **kwargs) -> List[CheckResult]:
        out: List[CheckResult] = []
        for k, step in enumerate(ctx.step_norms):
            gap = float(ctx.t[k + 1] - ctx.t[k])
            out.append(CheckResult(self.name, k, float(step), gap, bool(step <= gap + ctx.tol)))
        return out


class StepRatioCheck(Check):
    """||x_{k+1} - x_k|| <= (t_{k+1} - t_k) / (t_k - t_{k-1})^2 * ||x_k - x_{k-1}||^2."""

    name = "step_ratio"

    def run(self, ctx: BoundContext, **kwargs) -> List[CheckResult]:
        out: List[CheckResult] = []
        for k in range(1, len(ctx.step_norms)):
            prev_gap = float(ctx.t[k] - ctx.t[k - 1])
            if prev_gap <= MIN_T_GAP:
                continue
            ratio = float(ctx.t[k + 1] - ctx.t[k]) / prev_gap**2
            lhs = float(ctx.step_norms[k])
            rhs = ratio * float(ctx.step_norms[k - 1]) ** 2
            out.append(CheckResult(self.name, k, lhs, rhs, bool(lhs <= rhs + ctx.tol), {"ratio": ratio}))
        return out


class QuadraticRateCheck(Check):
    """||x_{k+1} - x_k|| <= Q ||x_k - x_{k-1}||^2."""

    name = "quad_rate"

    def run(self, ctx: BoundContext, **kwargs) -> List[CheckResult]:
        if ctx.Q is None:
            return []
        out: List[CheckResult] = []
        for k in range(1, len(ctx.step_norms)):
            lhs = float(ctx.step_norms[k])
            rhs = ctx.Q * float(ctx.step_norms[k - 1]) ** 2
            out.append(CheckResult(self.name, k, lhs, rhs, bool(lhs <= rhs + ctx.tol)))
        return out


class LimitGapCheck(Check):
    """||x_* - x_k|| <= t_* - t_k, with the last iterate standing in for x_*."""

    name = "limit_gap"

    def run(self, ctx: BoundContext, **kwargs) -> List[CheckResult]:
        x_star = ctx.x_star_proxy
        tol = ctx.proxy_tol
        out: List[CheckResult] = []
        for k in range(len(ctx.iterates)):
            lhs = float(np.linalg.norm(x_star - ctx.iterates[k]))
            rhs = float(ctx.t_star - ctx.t[k])
            out.append(CheckResult(self.name, k, lhs, rhs, bool(lhs <= rhs + tol), {"tol": tol}))
        return out


class ContainmentCheck(Check):
    """Every iterate stays in the closed ball B[x_0, t_*]."""

    name = "containment"

    def run(self, ctx: BoundContext, **kwargs) -> List[CheckResult]:
        x0 = ctx.iterates[0]
        out: List[CheckResult] = []
        for k in range(len(ctx.iterates)):
            lhs = float(np.linalg.norm(ctx.iterates[k] - x0))
            out.append(CheckResult(self.name, k, lhs, ctx.t_star, bool(lhs <= ctx.t_star + ctx.tol)))
        return out


DEFAULT_CHECKS: List[Check] = [
    StepGapCheck(),
    StepRatioCheck(),
    QuadraticRateCheck(),
    LimitGapCheck(),
    ContainmentCheck(),
]
