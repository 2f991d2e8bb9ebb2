"""Convergence certificates: exact first step b, majorant constants, robustness balls."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from .expr import PolyExpr
from .majorant import (
    SMALE_ALPHA_MAX,
    HypothesisError,
    Majorant,
    MajorantDomainError,
    PerturbedMajorant,
    QuadraticMajorant,
    SmaleMajorant,
    beta,
    perturbed_majorant,
    quadratic_rate_constant,
    smallest_zero,
)
from .minstep import (
    FEAS_TOL,
    OPT_TOL,
    LinearInclusionSubproblem,
    StepError,
    min_norm_step,
    sublinear_image_norm,
)
from .problems import InclusionProblem, directional_taylor, eval_F, eval_jacobian

log = logging.getLogger(__name__)

Family = Literal["quadratic", "smale"]
Provenance = Literal["exact", "user_supplied", "sampled_estimate"]

CHECK_TOL = 1e-9
OPERATOR_DIRECTIONS = 200


class RobinsonConditionError(RuntimeError):
    pass


class RobustnessError(ValueError):
    pass


class UnsupportedProblemError(ValueError):
    pass


class CertificateError(ValueError):
    pass


class Certificate(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Family
    params: Dict[str, float]
    provenance: Dict[str, Provenance]
    hypothesis_ok: bool
    strict_ok: bool
    # 2bL for the quadratic family, alpha = b gamma for Smale
    condition: float
    condition_bound: float
    t_star: Optional[float] = None
    t_bar: float
    beta: Optional[float] = None
    rho_max: Optional[float] = None
    Q: Optional[float] = None
    variant_rho_bound: Optional[float] = None

    @property
    def empirical(self) -> bool:
        return any(v == "sampled_estimate" for v in self.provenance.values())

    @property
    def label(self) -> str:
        return "empirical" if self.empirical else "certified"

    def majorant(self) -> Majorant:
        if self.family == "quadratic":
            return QuadraticMajorant(self.params["L"], self.params["b"])
        return SmaleMajorant(self.params["gamma"], self.params["b"])

    def to_dict(self) -> dict:
        return {**self.model_dump(mode="json"), "label": self.label}


def _assemble(
    spec: Majorant,
    family: Family,
    params: Dict[str, float],
    provenance: Dict[str, Provenance],
    condition: float,
    condition_bound: float,
    variant_rho_bound: Optional[float],
) -> Certificate:
    h = spec.h_conditions()
    common = dict(
        family=family,
        params=params,
        provenance=provenance,
        condition=condition,
        condition_bound=condition_bound,
        t_bar=spec.t_bar,
        variant_rho_bound=variant_rho_bound,
    )
    if not h.h3:
        return Certificate(hypothesis_ok=False, strict_ok=False, **common)
    t_star = smallest_zero(spec)
    if not h.h4:
        # boundary: double root at t_bar, nothing left for perturbations
        return Certificate(hypothesis_ok=True, strict_ok=False, t_star=t_star, beta=0.0, rho_max=0.0, **common)
    b_val = beta(spec)
    try:
        Q = quadratic_rate_constant(spec)
    except HypothesisError:
        Q = None
    return Certificate(
        hypothesis_ok=True,
        strict_ok=True,
        t_star=t_star,
        beta=b_val,
        rho_max=b_val / 2.0,
        Q=Q,
        **common,
    )


def kantorovich_certificate(
    L: float, b: float, provenance: Optional[Dict[str, Provenance]] = None
) -> Certificate:
    """Quadratic majorant f(t) = L t^2 / 2 - t + b, certified when 2bL <= 1."""
    if not (L > 0 and b > 0):
        raise CertificateError(f"Kantorovich certificate needs L > 0 and b > 0, got L={L}, b={b}")
    spec = QuadraticMajorant(float(L), float(b))
    return _assemble(
        spec,
        "quadratic",
        {"L": float(L), "b": float(b)},
        provenance or {"L": "user_supplied", "b": "user_supplied"},
        condition=2.0 * b * L,
        condition_bound=1.0,
        variant_rho_bound=(1.0 - 2.0 * L * b) / (4.0 * L),
    )


def smale_certificate(
    gamma: float, b: float, provenance: Optional[Dict[str, Provenance]] = None
) -> Certificate:
    """Smale majorant f(t) = t / (1 - gamma t) - 2t + b, certified when b gamma <= 3 - 2 sqrt(2)."""
    if not (gamma > 0 and b > 0):
        raise CertificateError(f"Smale certificate needs gamma > 0 and b > 0, got gamma={gamma}, b={b}")
    spec = SmaleMajorant(float(gamma), float(b))
    alpha = spec.alpha
    variant = (math.sqrt(2.0) * (3.0 - alpha) - 3.0) / (2.0 * gamma * math.sqrt(2.0))
    cert = _assemble(
        spec,
        "smale",
        {"gamma": float(gamma), "b": float(b)},
        provenance or {"gamma": "user_supplied", "b": "user_supplied"},
        condition=alpha,
        condition_bound=SMALE_ALPHA_MAX,
        variant_rho_bound=variant,
    )
    if cert.rho_max is not None and abs(variant - cert.rho_max) > 1e-12 * max(1.0, cert.rho_max):
        log.info("variant Smale robustness bound %.12g differs from beta/2 = %.12g", variant, cert.rho_max)
    return cert


# -- robustness ball ----------------------------------------------------------------------


@dataclass(frozen=True)
class RobustnessBall:
    rho: float
    g: PerturbedMajorant
    t_star_rho: float
    Q_rho: Optional[float]
    variant_t_star_rho: Optional[float] = None
    variant_Q_rho: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "g": self.g.to_dict(),
            "g0": self.g.f(0.0),
            "t_star_rho": self.t_star_rho,
            "Q_rho": self.Q_rho,
            "variant_t_star_rho": self.variant_t_star_rho,
            "variant_Q_rho": self.variant_Q_rho,
        }


def _variant_quadratic(L: float, b: float, rho: float):
    disc = 1.0 - 2.0 * L * (b - 2.0 * rho)
    if disc <= 0:
        return None, None
    return (1.0 - rho * L - math.sqrt(disc)) / L, L / (2.0 * math.sqrt(disc))


def _variant_smale(gamma: float, b: float, rho: float):
    alpha = b * gamma
    a = alpha + 1.0 - 2.0 * rho * gamma
    disc = a * a - 8.0 * alpha - 8.0 * rho * gamma * (1.0 - alpha)
    if disc < 0:
        return None, None
    t = (a - math.sqrt(disc)) / (4.0 * gamma)
    u = 1.0 - gamma * (t + rho)
    denom = u * (2.0 * u * u - 1.0)
    return t, (gamma / denom if denom > 0 else None)


def robustness_ball(cert: Certificate, rho: float) -> RobustnessBall:
    """Perturbed majorant g for restarts x^ with ||x^ - x~|| < rho."""
    if not cert.strict_ok or cert.rho_max is None:
        raise RobustnessError(f"Certificate for {cert.params} does not satisfy the strict hypothesis")
    if not (0.0 <= rho < cert.rho_max):
        raise RobustnessError(f"rho={rho!r} must satisfy 0 <= rho < rho_max = {cert.rho_max!r}")
    g = perturbed_majorant(cert.majorant(), rho)
    t_star_rho = smallest_zero(g)
    try:
        Q_rho = quadratic_rate_constant(g)
    except HypothesisError:
        Q_rho = None

    if cert.family == "quadratic":
        variant_t, variant_Q = _variant_quadratic(cert.params["L"], cert.params["b"], rho)
    else:
        variant_t, variant_Q = _variant_smale(cert.params["gamma"], cert.params["b"], rho)
    if variant_t is not None and abs(variant_t - t_star_rho) > 1e-10 * max(1.0, t_star_rho):
        log.info(
            "variant t_{*,rho} closed form %.12g disagrees with the zero of g %.12g (rho=%g)",
            variant_t,
            t_star_rho,
            rho,
        )
    return RobustnessBall(
        rho=float(rho),
        g=g,
        t_star_rho=t_star_rho,
        Q_rho=Q_rho,
        variant_t_star_rho=variant_t,
        variant_Q_rho=variant_Q,
    )


# -- exact first step ---------------------------------------------------------------------


def _first_step_norm(problem: InclusionProblem, x, feas_tol: float, opt_tol: float) -> float:
    sub = LinearInclusionSubproblem(eval_jacobian(problem, x), eval_F(problem, x), problem.cone)
    try:
        return min_norm_step(sub, feas_tol=feas_tol, opt_tol=opt_tol).norm_d
    except StepError as e:
        raise RobinsonConditionError(
            f"Linearized inclusion at x={np.asarray(x).tolist()} has no solution: {e}"
        ) from e


def compute_b(problem: InclusionProblem, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL) -> float:
    """||T_x~^{-1}(-F(x~))||, the norm of the least-norm first Newton step."""
    return _first_step_norm(problem, problem.x_tilde, feas_tol, opt_tol)


# -- sampled constants --------------------------------------------------------------------


@dataclass(frozen=True)
class SampledEstimate:
    """Max over seeded samples. A lower bound on the true constant."""

    name: str
    value: float
    n_samples: int
    seed: int
    details: Dict[str, float] = field(default_factory=dict)

    provenance: Provenance = "sampled_estimate"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "provenance": self.provenance,
            "label": "empirical",
            "details": dict(self.details),
        }


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(n)
        nv = float(np.linalg.norm(v))
        if nv > 1e-12:
            return v / nv


def _in_ball(rng: np.random.Generator, center: np.ndarray, radius: float) -> np.ndarray:
    n = center.shape[0]
    r = radius * rng.random() ** (1.0 / n)
    return center + r * _unit(rng, n)


def _sample_max(fn: Callable[[int], float], n_samples: int, workers: int) -> float:
    # each sample seeds its own generator, so the max does not depend on scheduling
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(fn, range(n_samples)))
    else:
        values = [fn(i) for i in range(n_samples)]
    return max(values, default=0.0)


def _image_norm(problem: InclusionProblem, J_base: np.ndarray, w: np.ndarray, where: str) -> float:
    val = sublinear_image_norm(J_base, problem.cone, w)
    if not math.isfinite(val):
        raise RobinsonConditionError(f"T^-1 is not defined on a sampled direction at {where}")
    return val


def estimate_L(problem: InclusionProblem, n_samples: int, seed: int, workers: int = 1) -> SampledEstimate:
    """max ||T_x~^{-1}[F'(y) - F'(x)] u|| / ||y - x|| over sampled x, y in B(x~, R) and unit u."""
    compute_b(problem)
    J_base = eval_jacobian(problem, problem.x_tilde)

    def one(i: int) -> float:
        rng = np.random.default_rng([seed, i])
        x = _in_ball(rng, problem.x_tilde, problem.R)
        y = _in_ball(rng, problem.x_tilde, problem.R)
        u = _unit(rng, problem.n)
        dist = float(np.linalg.norm(y - x))
        if dist <= 1e-12:
            return 0.0
        w = (eval_jacobian(problem, y) - eval_jacobian(problem, x)) @ u
        return _image_norm(problem, J_base, w, "x_tilde") / dist

    value = _sample_max(one, n_samples, workers)
    log.info("sampled L = %.12g from %d samples (seed %d); lower bound only", value, n_samples, seed)
    return SampledEstimate("L", value, n_samples, seed)


def estimate_gamma(
    problem: InclusionProblem, n_samples: int, seed: int, workers: int = 1
) -> SampledEstimate:
    """max_k max_v ||T_x~^{-1} F^(k)(x~)(v,...,v) / k!||^(1/(k-1)) over sampled unit v.

    Only diagonal arguments (v,...,v) are sampled, which can under-estimate the
    norm of the symmetric multilinear map.
    """
    if not all(isinstance(f, PolyExpr) for f in problem.F):
        raise UnsupportedProblemError("gamma can only be estimated for polynomial F")
    deg = problem.total_degree
    compute_b(problem)
    if deg < 2:
        return SampledEstimate("gamma", 0.0, n_samples, seed, {"degree": float(deg)})
    J_base = eval_jacobian(problem, problem.x_tilde)
    eye = np.eye(problem.n)
    fixed = [s * eye[j] for j in range(problem.n) for s in (1.0, -1.0)]

    def per_order(v: np.ndarray) -> np.ndarray:
        coeffs = directional_taylor(problem, problem.x_tilde, v, deg)
        return np.array([_image_norm(problem, J_base, coeffs[k], "x_tilde") for k in range(2, deg + 1)])

    def sample(i: int) -> np.ndarray:
        rng = np.random.default_rng([seed, i])
        v = _unit(rng, problem.n)
        return np.maximum(per_order(v), per_order(-v))

    rows = [per_order(v) for v in fixed]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows.extend(pool.map(sample, range(n_samples)))
    else:
        rows.extend(sample(i) for i in range(n_samples))
    best = np.max(np.vstack(rows), axis=0)
    per_k = {f"k{k}": float(best[k - 2] ** (1.0 / (k - 1))) for k in range(2, deg + 1)}
    value = max(per_k.values())
    log.info("sampled gamma = %.12g over orders 2..%d (seed %d)", value, deg, seed)
    return SampledEstimate("gamma", value, n_samples, seed, per_k)


# -- diagnostics --------------------------------------------------------------------------


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    ok: bool
    # "exact" when lhs is computed, "sampled" when lhs is a sampled lower bound
    evidence: str = "exact"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ok": self.ok,
            "evidence": self.evidence,
        }


def linearization_error_check(problem: InclusionProblem, x, y, spec: Majorant) -> InequalityCheck:
    """||T_x~^{-1}(-E(x, y))|| <= e(t, s) with t = ||x - x~||, s = t + ||y - x||."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    t = float(np.linalg.norm(x - problem.x_tilde))
    s = t + float(np.linalg.norm(y - x))
    if s >= problem.R or s >= spec.domain_end:
        raise MajorantDomainError(f"Pair not admissible: t + ||y - x|| = {s} must stay below R = {problem.R}")
    E = eval_F(problem, y) - eval_F(problem, x) - eval_jacobian(problem, x) @ (y - x)
    lhs = _image_norm(problem, eval_jacobian(problem, problem.x_tilde), -E, "x_tilde")
    rhs = spec.f(s) - spec.f(t) - spec.fprime(t) * (s - t)
    return InequalityCheck("linearization_error", lhs, rhs, bool(lhs <= rhs + CHECK_TOL))


def operator_bound_check(
    problem: InclusionProblem,
    x,
    spec: Majorant,
    t: Optional[float] = None,
    n_directions: int = OPERATOR_DIRECTIONS,
    seed: int = 0,
) -> InequalityCheck:
    """sup_u ||T_x^{-1} F'(x~) u|| <= -1 / f'(t), sup taken over sampled and coordinate directions."""
    x = np.asarray(x, dtype=float).reshape(-1)
    dist = float(np.linalg.norm(x - problem.x_tilde))
    t = dist if t is None else float(t)
    if t < dist - CHECK_TOL or not (0.0 <= t < spec.t_bar):
        raise MajorantDomainError(f"Need ||x - x_tilde|| <= t < t_bar = {spec.t_bar}, got t={t}")
    J_x = eval_jacobian(problem, x)
    J_base = eval_jacobian(problem, problem.x_tilde)
    rng = np.random.default_rng(seed)
    eye = np.eye(problem.n)
    dirs = [s * eye[j] for j in range(problem.n) for s in (1.0, -1.0)]
    dirs += [_unit(rng, problem.n) for _ in range(n_directions)]
    lhs = max(_image_norm(problem, J_x, J_base @ u, "x") for u in dirs)
    rhs = -1.0 / spec.fprime(t)
    return InequalityCheck("operator_bound", lhs, rhs, bool(lhs <= rhs + CHECK_TOL), evidence="sampled")


def residual_growth_check(problem: InclusionProblem, y, spec: Majorant) -> InequalityCheck:
    """||T_x~^{-1}(-F(y))|| <= f(||y - x~||) + 2 ||y - x~||."""
    y = np.asarray(y, dtype=float).reshape(-1)
    r = float(np.linalg.norm(y - problem.x_tilde))
    if r >= problem.R or r >= spec.domain_end:
        raise MajorantDomainError(f"||y - x_tilde|| = {r} must stay below R = {problem.R}")
    lhs = _image_norm(problem, eval_jacobian(problem, problem.x_tilde), -eval_F(problem, y), "x_tilde")
    rhs = spec.f(r) + 2.0 * r
    return InequalityCheck("residual_growth", lhs, rhs, bool(lhs <= rhs + CHECK_TOL))


def perturbed_first_step_check(
    problem: InclusionProblem, x_hat, cert: Certificate, rho: float
) -> InequalityCheck:
    """First step from x^ is bounded by g(0) when ||x^ - x~|| < rho."""
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    if float(np.linalg.norm(x_hat - problem.x_tilde)) >= rho:
        raise RobustnessError(f"x_hat must lie strictly within rho={rho} of x_tilde")
    ball = robustness_ball(cert, rho)
    lhs = _first_step_norm(problem, x_hat, FEAS_TOL, OPT_TOL)
    rhs = ball.g.f(0.0)
    return InequalityCheck("perturbed_first_step", lhs, rhs, bool(lhs <= rhs + CHECK_TOL))


# -- problem-level assembly ---------------------------------------------------------------


def certify_problem(
    problem: InclusionProblem,
    family: Family,
    constant: Optional[float],
    samples: int = 1000,
    seed: int = 0,
    workers: int = 1,
    constant_provenance: Provenance = "user_supplied",
) -> tuple[Certificate, Optional[SampledEstimate]]:
    """Certificate from the exact b and a supplied (constant) or sampled (None) L / gamma."""
    b = compute_b(problem)
    if b == 0.0:
        raise CertificateError("x_tilde already solves the inclusion (b = 0); nothing to certify")
    key = "L" if family == "quadratic" else "gamma"
    estimate = None
    if constant is None:
        estimate = (estimate_L if family == "quadratic" else estimate_gamma)(problem, samples, seed, workers)
        constant = estimate.value
        provenance: Dict[str, Provenance] = {key: "sampled_estimate", "b": "exact"}
    else:
        provenance = {key: constant_provenance, "b": "exact"}
    if constant <= 0.0:
        raise CertificateError(
            f"{key} = {constant!r}: F is affine on the ball, so the first step already solves the"
            " linearized inclusion exactly"
        )
    build = kantorovich_certificate if family == "quadratic" else smale_certificate
    return build(constant, b, provenance), estimate
