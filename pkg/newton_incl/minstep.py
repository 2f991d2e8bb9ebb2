from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.linalg import lstsq, null_space
from scipy.optimize import linprog, nnls

from .cone import ProductCone, distance_to_cone

log = logging.getLogger(__name__)

FEAS_TOL = 1e-10
OPT_TOL = 1e-10
# rows of G Z below this norm (relative to the row of G) no longer depend on the free variables
FIXED_ROW_TOL = 1e-12
# NNLS denominator 1 / (1 + ||z||^2) on unit rows; below this the inequalities are treated as empty
LDP_DENOM_TOL = 1e-12
# ||Gh^T y|| allowed for an accepted Farkas certificate on unit rows
FARKAS_TOL = 1e-8


class InvalidSubproblemError(ValueError):
    pass


class StepError(RuntimeError):
    pass


class InfeasibleSubproblemError(StepError):
    """No d satisfies F + J d in C.

    kind "equality": certificate y has J_q^T y = 0 and y . F_q != 0.
    kind "inequality": certificate y >= 0 (one entry per "<= 0" row) has
    Z^T G^T y = 0 and (G d0 - h) . y > 0, Z spanning the null space of the
    equality rows and d0 any solution of them. kind "numerical" carries no certificate.
    """

    def __init__(self, message: str, certificate: np.ndarray, kind: str):
        super().__init__(message)
        self.certificate = np.asarray(certificate, dtype=float)
        self.kind = kind


class IterationLimitError(StepError):
    pass


class StepOptimalityError(StepError):
    pass


@dataclass(frozen=True)
class LinearInclusionSubproblem:
    """Find the least-norm d with Fval + J d in cone."""

    J: np.ndarray
    Fval: np.ndarray
    cone: ProductCone

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        F = np.asarray(self.Fval, dtype=float).reshape(-1)
        if J.shape[0] != self.cone.m or F.shape[0] != self.cone.m:
            raise InvalidSubproblemError(
                f"J is {J.shape[0]}x{J.shape[1]}, Fval has {F.shape[0]} entries, cone has m={self.cone.m}"
            )
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(F))):
            raise InvalidSubproblemError("Subproblem data contains NaN or Inf")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "Fval", F)

    @property
    def n(self) -> int:
        return self.J.shape[1]

    @property
    def m(self) -> int:
        return self.cone.m

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.Fval))) if self.m else 1.0)

    def split(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """G d <= h (first p rows), A d = c (last q rows)."""
        p = self.cone.p
        return self.J[:p], -self.Fval[:p], self.J[p:], -self.Fval[p:]


@dataclass(frozen=True)
class NewtonStep:
    d: np.ndarray
    norm_d: float
    active_set: Tuple[int, ...]
    multipliers: np.ndarray
    feasibility_residual: float
    kkt_residual: float = 0.0
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "d": self.d.tolist(),
            "norm_d": self.norm_d,
            "active_set": list(self.active_set),
            "multipliers": self.multipliers.tolist(),
            "feasibility_residual": self.feasibility_residual,
            "kkt_residual": self.kkt_residual,
        }


def _particular_solution(A: np.ndarray, c: np.ndarray, n: int, tol: float):
    if A.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    d0 = lstsq(A, c, lapack_driver="gelsd")[0]
    eq_res = A @ d0 - c
    if np.linalg.norm(eq_res) > tol:
        # eq_res is orthogonal to range(A): A^T y = 0 while y . c != 0
        raise InfeasibleSubproblemError(
            f"Equality rows are inconsistent (residual {np.linalg.norm(eq_res):.3e})",
            certificate=eq_res,
            kind="equality",
        )
    return d0, null_space(A)


def _ldp_kkt_ok(Gh: np.ndarray, hh: np.ndarray, z: np.ndarray, lam: np.ndarray, tol: float) -> bool:
    """z = Gh^T lam is assumed; checks primal and dual feasibility and complementarity."""
    s = Gh @ z - hh
    comp = tol * max(1.0, float(np.max(lam, initial=0.0)))
    return bool(np.all(s >= -tol) and np.all(lam >= 0.0) and np.all(lam * np.abs(s) <= comp))


def _feasible_point(Gh: np.ndarray, hh: np.ndarray) -> np.ndarray:
    res = linprog(np.zeros(Gh.shape[1]), A_ub=-Gh, b_ub=-hh, bounds=(None, None), method="highs")
    if res.status == 2:
        raise InfeasibleSubproblemError(
            "Inequality rows admit no solution (no certificate recovered)",
            certificate=np.zeros(0),
            kind="numerical",
        )
    if not res.success:
        raise IterationLimitError(f"Feasibility LP failed: {res.message}")
    return np.asarray(res.x, dtype=float)


def _active_set_ldp(Gh: np.ndarray, hh: np.ndarray, z: np.ndarray, tol: float, maxiter: int):
    """Primal active-set method for min ||z|| s.t. Gh z >= hh from a feasible z."""
    m = Gh.shape[0]
    work: List[int] = []
    for _ in range(maxiter):
        if work:
            N = null_space(Gh[work])
            step = -N @ (N.T @ z)
        else:
            step = -z
        if np.linalg.norm(step) <= tol * max(1.0, float(np.linalg.norm(z))):
            lam_w = lstsq(Gh[work].T, z)[0] if work else np.zeros(0)
            if not work or lam_w.min() >= -tol:
                lam = np.zeros(m)
                lam[work] = np.maximum(lam_w, 0.0)
                return Gh.T @ lam, lam
            work.pop(int(np.argmin(lam_w)))
            continue

        Gs = Gh @ step
        alpha, block = 1.0, None
        for i in range(m):
            if i in work or Gs[i] >= -1e-14 * np.linalg.norm(Gh[i]) * np.linalg.norm(step):
                continue
            a = max(0.0, float((hh[i] - Gh[i] @ z) / Gs[i]))
            if a < alpha:
                alpha, block = a, i
        z = z + alpha * step
        if block is not None:
            work.append(block)
    raise IterationLimitError(f"Active-set refinement hit the iteration cap {maxiter}")


def _least_distance(Gh: np.ndarray, hh: np.ndarray, maxiter: int, tol: float):
    """min ||z|| s.t. Gh z >= hh via NNLS on [Gh^T; hh^T] u ~ e_{k+1}, KKT-checked."""
    m, k = Gh.shape
    if np.all(hh <= 0.0):
        return np.zeros(k), np.zeros(m)
    # unit rows and hh / s_h scale the solution by 1 / s_h
    row = np.linalg.norm(Gh, axis=1)
    s_h = float(np.max(np.abs(hh)))
    Gn = Gh / row[:, None]
    hn = hh / row / s_h
    tol_n = tol / (s_h * max(1.0, float(row.max())))

    E = np.vstack([Gn.T, hn[None, :]])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    try:
        u, _ = nnls(E, rhs, maxiter=maxiter)
    except RuntimeError as e:
        raise IterationLimitError(f"Least-distance solve hit the iteration cap {maxiter}: {e}") from e
    r = E @ u - rhs
    denom = -r[-1]

    if denom <= LDP_DENOM_TOL and u.sum() > 0.0:
        y = u / u.sum()
        if np.linalg.norm(Gn.T @ y) <= FARKAS_TOL and hn @ y > 0.0:
            cert = y / row
            raise InfeasibleSubproblemError(
                "Inequality rows admit no solution (Robinson's condition fails numerically)",
                certificate=cert / cert.sum(),
                kind="inequality",
            )
        log.debug("near-zero NNLS denominator without a valid certificate; treating as feasible")

    if denom > 0.0:
        lam_n = u / denom
        z_n = Gn.T @ lam_n
    else:
        lam_n, z_n = np.zeros(m), np.full(k, np.nan)
    if not _ldp_kkt_ok(Gn, hn, z_n, lam_n, tol_n):
        log.debug("NNLS least-distance point fails the KKT check; refining by active set")
        start = z_n if np.all(np.isfinite(z_n)) and np.all(Gn @ z_n - hn >= -tol_n) else _feasible_point(Gn, hn)
        z_n, lam_n = _active_set_ldp(Gn, hn, start, tol_n, maxiter)
        if not _ldp_kkt_ok(Gn, hn, z_n, lam_n, tol_n):
            raise StepOptimalityError("Least-distance refinement did not reach a KKT point")
    return s_h * z_n, s_h * lam_n / row


def min_norm_step(
    sub: LinearInclusionSubproblem, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL
) -> NewtonStep:
    """argmin{ ||d|| : Fval + J d in C } for C = R^p_- x {0}^q."""
    G, h, A, c = sub.split()
    n, p = sub.n, sub.cone.p
    scale = sub.scale
    tol = feas_tol * scale
    maxiter = 50 * (n + sub.m)

    d0, Z = _particular_solution(A, c, n, tol)
    mu = np.zeros(p)
    d = d0

    if p:
        Gh = -(G @ Z)
        hh = -(h - G @ d0)
        row_norm = np.maximum(np.linalg.norm(G, axis=1), 1.0)
        fixed = np.linalg.norm(Gh, axis=1) <= FIXED_ROW_TOL * row_norm
        bad = np.flatnonzero(fixed & (hh > tol))
        if bad.size:
            cert = np.zeros(p)
            cert[bad[0]] = 1.0
            raise InfeasibleSubproblemError(
                f"Inequality row {int(bad[0])} cannot be met on the equality manifold",
                certificate=cert,
                kind="inequality",
            )
        free = np.flatnonzero(~fixed)
        if free.size and Z.shape[1]:
            try:
                z, lam = _least_distance(Gh[free], hh[free], maxiter, tol)
            except InfeasibleSubproblemError as e:
                if e.kind != "inequality":
                    raise
                cert = np.zeros(p)
                cert[free] = e.certificate
                raise InfeasibleSubproblemError(str(e), certificate=cert, kind="inequality") from None
            mu[free] = lam
            d = d0 + Z @ z

    slack = G @ d - h if p else np.zeros(0)
    feas = distance_to_cone(sub.cone, sub.Fval + sub.J @ d)
    if feas > tol:
        raise InfeasibleSubproblemError(
            f"Step leaves residual {feas:.3e} > {tol:.3e}", certificate=np.zeros(0), kind="numerical"
        )

    rest = -d - G.T @ mu
    nu = lstsq(A.T, rest)[0] if A.shape[0] else np.zeros(0)
    kkt = float(np.linalg.norm(d + G.T @ mu + A.T @ nu)) if sub.m else float(np.linalg.norm(d))
    kkt_scale = max(1.0, float(np.linalg.norm(d)), float(np.linalg.norm(G.T @ mu)) if p else 0.0)
    if kkt > opt_tol * kkt_scale:
        raise StepOptimalityError(f"KKT stationarity residual {kkt:.3e} above opt_tol {opt_tol:.1e}")

    active = tuple(int(i) for i in range(p) if mu[i] > 0.0 or abs(slack[i]) <= tol)
    return NewtonStep(
        d=d,
        norm_d=float(np.linalg.norm(d)),
        active_set=active,
        multipliers=np.concatenate([mu, nu]),
        feasibility_residual=feas,
        kkt_residual=kkt,
    )


def sublinear_image_norm(
    J_base: np.ndarray,
    cone: ProductCone,
    w: np.ndarray,
    feas_tol: float = FEAS_TOL,
    opt_tol: float = OPT_TOL,
) -> float:
    """||T^{-1} w|| = min{ ||d|| : J_base d - w in C }, +inf when the set is empty."""
    w = np.asarray(w, dtype=float).reshape(-1)
    sub = LinearInclusionSubproblem(J_base, -w, cone)
    if not np.any(w):
        return 0.0
    try:
        return min_norm_step(sub, feas_tol=feas_tol, opt_tol=opt_tol).norm_d
    except InfeasibleSubproblemError:
        return float("inf")
