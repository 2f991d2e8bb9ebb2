from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .checks import DEFAULT_CHECKS, BOUND_TOL, BoundContext, Check, VerificationReport
from .cone import distance_to_cone
from .majorant import (
    HypothesisError,
    Majorant,
    MajorantDomainError,
    MajorantTrace,
    majorant_sequence,
    quadratic_rate_constant,
    smallest_zero,
)
from .minstep import (
    FEAS_TOL,
    OPT_TOL,
    LinearInclusionSubproblem,
    NewtonStep,
    StepError,
    min_norm_step,
    sublinear_image_norm,
)
from .problems import InclusionProblem, eval_F, eval_jacobian

log = logging.getLogger(__name__)

CONVERGED_RESIDUAL = "converged_residual"
CONVERGED_STEP = "converged_step"
MAX_ITER = "max_iter"
STEP_FAILURE = "step_failure"

# consecutive growing steps outside B(x_tilde, R) before giving up
DIVERGENCE_WINDOW = 5


class TraceMismatchError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    max_iter: int = 50
    residual_tol: float = 1e-10
    step_tol: float = 1e-12
    record_bounds: bool = False
    feas_tol: float = FEAS_TOL
    opt_tol: float = OPT_TOL

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        for name in ("residual_tol", "step_tol", "feas_tol", "opt_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class SolveTrace:
    iterates: List[np.ndarray]
    step_norms: List[float]
    residuals: List[float]
    status: str
    bound_checks: Optional[List[dict]] = None
    steps: List[NewtonStep] = field(default_factory=list)
    message: str = ""

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.step_norms)

    @property
    def converged(self) -> bool:
        return self.status in (CONVERGED_RESIDUAL, CONVERGED_STEP)

    def to_dict(self) -> dict:
        out = {
            "iterates": [[float(v) for v in x] for x in self.iterates],
            "step_norms": [float(s) for s in self.step_norms],
            "residuals": [float(r) for r in self.residuals],
            "bound_checks": self.bound_checks,
            "status": self.status,
        }
        if self.message:
            out["message"] = self.message
        return out

    def to_frame(self) -> pd.DataFrame:
        """One row per iterate k: residual at x_k and the norm of the step leaving it."""
        steps = list(self.step_norms) + [np.nan] * (len(self.iterates) - len(self.step_norms))
        return pd.DataFrame({"k": range(len(self.iterates)), "step_norm": steps, "residual": self.residuals})


def padded_t(mtrace: MajorantTrace, length: int) -> np.ndarray:
    t = list(mtrace.t[:length])
    t += [mtrace.t_star] * (length - len(t))
    return np.asarray(t, dtype=float)


def _online_record(k: int, steps: Sequence[float], t: np.ndarray, Q: Optional[float]) -> dict:
    gap = float(t[k + 1] - t[k])
    rec = {"k": k, "t_gap": gap, "step_le_gap": bool(steps[k] <= gap + BOUND_TOL), "quad_ratio_ok": None}
    if k >= 1:
        prev = float(t[k] - t[k - 1])
        if prev > 1e-15:
            rec["quad_ratio_ok"] = bool(steps[k] <= gap / prev**2 * steps[k - 1] ** 2 + BOUND_TOL)
        if Q is not None:
            rec["rate_ok"] = bool(steps[k] <= Q * steps[k - 1] ** 2 + BOUND_TOL)
    return rec


def _majorant_reference(majorant: Majorant, k_max: int):
    mtrace = majorant_sequence(majorant, k_max=max(60, k_max))
    try:
        Q = quadratic_rate_constant(majorant)
    except HypothesisError:
        Q = None
    return mtrace, Q


def newton_solve(
    problem: InclusionProblem,
    x0,
    config: SolveConfig = SolveConfig(),
    majorant: Optional[Majorant] = None,
) -> SolveTrace:
    """x_{k+1} = x_k + argmin{ ||d|| : F(x_k) + F'(x_k) d in C }."""
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.shape[0] != problem.n:
        raise DomainError(f"x0 has {x.shape[0]} entries, problem has n = {problem.n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("x0 contains NaN or Inf")
    if not problem.in_ball(x):
        log.warning(
            "x0 is %.3e from x_tilde, outside the declared ball of radius %.3e",
            float(np.linalg.norm(x - problem.x_tilde)),
            problem.R,
        )

    reference = None
    if config.record_bounds and majorant is not None:
        reference = _majorant_reference(majorant, config.max_iter)
    elif config.record_bounds:
        log.info("record_bounds set without a majorant; no bound checks recorded")

    Fx = eval_F(problem, x)
    iterates = [x.copy()]
    residuals = [distance_to_cone(problem.cone, Fx)]
    step_norms: List[float] = []
    steps: List[NewtonStep] = []
    records: Optional[List[dict]] = [] if reference is not None else None
    status, message = MAX_ITER, ""
    growing = 0

    if residuals[0] <= config.residual_tol:
        status = CONVERGED_RESIDUAL
    else:
        for k in range(config.max_iter):
            sub = LinearInclusionSubproblem(eval_jacobian(problem, x), Fx, problem.cone)
            try:
                step = min_norm_step(sub, feas_tol=config.feas_tol, opt_tol=config.opt_tol)
            except StepError as e:
                status = STEP_FAILURE
                message = f"k={k}: {e}"
                log.warning("Newton step failed at iterate %d (x=%s): %s", k, x.tolist(), e)
                break

            x = x + step.d
            if not np.all(np.isfinite(x)):
                raise DomainError(f"Iterate {k + 1} is not finite")
            Fx = eval_F(problem, x)
            iterates.append(x.copy())
            steps.append(step)
            step_norms.append(step.norm_d)
            residuals.append(distance_to_cone(problem.cone, Fx))

            if records is not None:
                t = padded_t(reference[0], len(step_norms) + 1)
                records.append(_online_record(k, step_norms, t, reference[1]))

            if residuals[-1] <= config.residual_tol:
                status = CONVERGED_RESIDUAL
                break
            if step.norm_d <= config.step_tol:
                status = CONVERGED_STEP
                break

            if len(step_norms) >= 2 and step_norms[-1] > step_norms[-2] and not problem.in_ball(x):
                growing += 1
            else:
                growing = 0
            if growing >= DIVERGENCE_WINDOW:
                message = f"step norms grew {growing} times in a row outside B(x_tilde, R)"
                log.warning("Divergence guard: %s; stopping at k=%d", message, k + 1)
                break

    if status == MAX_ITER and not message:
        message = f"no convergence after {len(step_norms)} iterations"
    log.debug("newton_solve %s after %d steps, residual %.3e", status, len(step_norms), residuals[-1])
    return SolveTrace(
        iterates=iterates,
        step_norms=step_norms,
        residuals=residuals,
        status=status,
        bound_checks=records,
        steps=steps,
        message=message,
    )


def verify_majorant_bounds(
    trace: SolveTrace,
    majorant_trace: MajorantTrace,
    Q: Optional[float],
    checks: Optional[List[Check]] = None,
) -> VerificationReport:
    """Run every bound check of the majorant sequence against a finished solve."""
    if len(trace.iterates) != len(trace.step_norms) + 1 or len(trace.residuals) != len(trace.iterates):
        raise TraceMismatchError(
            f"Trace has {len(trace.iterates)} iterates, {len(trace.step_norms)} steps, "
            f"{len(trace.residuals)} residuals"
        )
    if not majorant_trace.t or majorant_trace.t[0] != 0.0:
        raise TraceMismatchError("Majorant trace must start at t_0 = 0")
    ctx = BoundContext(
        iterates=np.vstack(trace.iterates),
        step_norms=np.asarray(trace.step_norms, dtype=float),
        t=padded_t(majorant_trace, len(trace.iterates)),
        t_star=majorant_trace.t_star,
        Q=Q,
    )
    results = []
    for check in checks if checks is not None else DEFAULT_CHECKS:
        results.extend(check.run(ctx))
    note = "limit_gap uses the last iterate as x_*, tolerance inflated by 10x the final step norm"
    if not trace.converged:
        note += f"; solve ended with status {trace.status}"
    return VerificationReport(results=results, note=note)


def region_K_check(
    problem: InclusionProblem,
    x,
    t: float,
    spec: Majorant,
    feas_tol: float = FEAS_TOL,
    opt_tol: float = OPT_TOL,
) -> bool:
    """x in K(t): ||x - x_tilde|| <= t and ||T_x^{-1}(-F(x))|| <= -f(t)/f'(t)."""
    t_star = smallest_zero(spec)
    if not (0.0 <= t < t_star):
        raise MajorantDomainError(f"K(t) needs 0 <= t < t_* = {t_star}, got t={t}")
    pt = np.asarray(x, dtype=float).reshape(-1)
    if float(np.linalg.norm(pt - problem.x_tilde)) > t + BOUND_TOL:
        return False
    w = -eval_F(problem, pt)
    step = sublinear_image_norm(eval_jacobian(problem, pt), problem.cone, w, feas_tol, opt_tol)
    if not np.isfinite(step):
        log.info("region_K_check: linearized inclusion infeasible at x=%s", pt.tolist())
        return False
    return bool(step <= -spec.f(t) / spec.fprime(t) + BOUND_TOL)
