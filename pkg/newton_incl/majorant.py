from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import bisect, minimize_scalar

log = logging.getLogger(__name__)

SMALE_ALPHA_MAX = 3.0 - 2.0 * math.sqrt(2.0)
# Closed forms and oracles must agree to this (relative) before a zero is returned.
ZERO_AGREEMENT_TOL = 1e-10
# |f(t_bar)| below this is treated as a double root.
DOUBLE_ROOT_TOL = 1e-13
H_GRID_POINTS = 1000


class MajorantError(ValueError):
    pass


class MajorantDomainError(MajorantError):
    pass


class NoZeroError(MajorantError):
    pass


class HypothesisError(MajorantError):
    pass


@dataclass(frozen=True)
class HConditions:
    h1: bool
    h2: bool
    h3: bool
    h4: bool
    empirical: bool = False

    @property
    def all(self) -> bool:
        return self.h1 and self.h2 and self.h3 and self.h4

    def to_dict(self) -> dict:
        return {"h1": self.h1, "h2": self.h2, "h3": self.h3, "h4": self.h4, "empirical": self.empirical}


class Majorant:
    """Scalar majorant f on [0, domain_end) with f(0) = b, f'(0) = -1."""

    family: str
    b: float

    def f(self, t: float) -> float:
        raise NotImplementedError

    def fprime(self, t: float) -> float:
        raise NotImplementedError

    def fsecond(self, t: float) -> float:
        raise NotImplementedError

    @property
    def domain_end(self) -> float:
        return math.inf

    @property
    def t_bar(self) -> float:
        """sup{t in [0, R): f'(t) < 0}."""
        raise NotImplementedError

    def h_conditions(self) -> HConditions:
        raise NotImplementedError

    def closed_form_zero(self) -> Optional[float]:
        return None

    def closed_form_beta(self) -> Optional[float]:
        return None

    def closed_form_rate(self) -> Optional[float]:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticMajorant(Majorant):
    """f(t) = L t^2 / 2 - t + b on [0, +inf)."""

    L: float
    b: float
    family = "quadratic"

    def __post_init__(self):
        if not (self.L > 0 and self.b > 0):
            raise MajorantError(f"Quadratic majorant needs L > 0 and b > 0, got L={self.L}, b={self.b}")

    @property
    def disc(self) -> float:
        return 1.0 - 2.0 * self.b * self.L

    def f(self, t: float) -> float:
        return self.L * t * t / 2.0 - t + self.b

    def fprime(self, t: float) -> float:
        return self.L * t - 1.0

    def fsecond(self, t: float) -> float:
        return self.L

    @property
    def t_bar(self) -> float:
        return 1.0 / self.L

    def h_conditions(self) -> HConditions:
        return HConditions(h1=True, h2=True, h3=self.disc >= 0.0, h4=self.disc > 0.0)

    def closed_form_zero(self) -> Optional[float]:
        if self.disc < 0:
            return None
        # same value as (1 - sqrt(1 - 2bL)) / L without the cancellation for small L
        return 2.0 * self.b / (1.0 + math.sqrt(self.disc))

    def closed_form_beta(self) -> Optional[float]:
        return self.disc / (2.0 * self.L)

    def closed_form_rate(self) -> Optional[float]:
        if self.disc <= 0:
            return None
        return self.L / (2.0 * math.sqrt(self.disc))

    def shifted(self, delta: float) -> "QuadraticMajorant":
        """Same family with f(0) raised by delta."""
        return QuadraticMajorant(self.L, self.b + delta)

    def to_dict(self) -> dict:
        return {"family": self.family, "L": self.L, "b": self.b}


@dataclass(frozen=True)
class SmaleMajorant(Majorant):
    """f(t) = t / (1 - gamma t) - 2t + b on [0, 1/gamma)."""

    gamma: float
    b: float
    family = "smale"

    def __post_init__(self):
        if not (self.gamma > 0 and self.b > 0):
            raise MajorantError(
                f"Smale majorant needs gamma > 0 and b > 0, got gamma={self.gamma}, b={self.b}"
            )

    @property
    def alpha(self) -> float:
        return self.b * self.gamma

    @property
    def domain_end(self) -> float:
        return 1.0 / self.gamma

    def f(self, t: float) -> float:
        return t / (1.0 - self.gamma * t) - 2.0 * t + self.b

    def fprime(self, t: float) -> float:
        return 1.0 / (1.0 - self.gamma * t) ** 2 - 2.0

    def fsecond(self, t: float) -> float:
        return 2.0 * self.gamma / (1.0 - self.gamma * t) ** 3

    @property
    def t_bar(self) -> float:
        return (1.0 - 1.0 / math.sqrt(2.0)) / self.gamma

    def h_conditions(self) -> HConditions:
        return HConditions(h1=True, h2=True, h3=self.alpha <= SMALE_ALPHA_MAX, h4=self.alpha < SMALE_ALPHA_MAX)

    def closed_form_zero(self) -> Optional[float]:
        a = self.alpha
        disc = (a + 1.0) ** 2 - 8.0 * a
        if a > SMALE_ALPHA_MAX:
            return None
        disc = max(disc, 0.0)
        # rationalized (a + 1 - sqrt(disc)) / (4 gamma)
        return 2.0 * self.b / (a + 1.0 + math.sqrt(disc))

    def closed_form_beta(self) -> Optional[float]:
        return (SMALE_ALPHA_MAX - self.alpha) / self.gamma

    def closed_form_rate(self) -> Optional[float]:
        t_star = self.closed_form_zero()
        if t_star is None:
            return None
        u = 1.0 - self.gamma * t_star
        denom = u * (2.0 * u * u - 1.0)
        if denom <= 0:
            return None
        return self.gamma / denom

    def shifted(self, delta: float) -> "SmaleMajorant":
        return SmaleMajorant(self.gamma, self.b + delta)

    def to_dict(self) -> dict:
        return {"family": self.family, "gamma": self.gamma, "b": self.b}


@dataclass(frozen=True)
class PerturbedMajorant(Majorant):
    """g(t) = -[f(t + rho) + 2 rho] / f'(rho) on [0, R - rho)."""

    base: Majorant
    rho: float
    family = "perturbed"

    def _scale(self) -> float:
        return -1.0 / self.base.fprime(self.rho)

    @property
    def b(self) -> float:
        return self.f(0.0)

    def f(self, t: float) -> float:
        return self._scale() * (self.base.f(t + self.rho) + 2.0 * self.rho)

    def fprime(self, t: float) -> float:
        return self._scale() * self.base.fprime(t + self.rho)

    def fsecond(self, t: float) -> float:
        return self._scale() * self.base.fsecond(t + self.rho)

    @property
    def domain_end(self) -> float:
        return self.base.domain_end - self.rho

    @property
    def t_bar(self) -> float:
        return self.base.t_bar - self.rho

    def h_conditions(self) -> HConditions:
        base_h = self.base.h_conditions()
        g0 = self.f(0.0)
        h1 = g0 > 0 and abs(self.fprime(0.0) + 1.0) <= 1e-12
        # min g < 0  <=>  f(t_bar) + 2 rho < 0  <=>  2 rho < beta(f)
        f_min = self.base.f(self.base.t_bar) if math.isfinite(self.base.t_bar) else -math.inf
        return HConditions(
            h1=bool(h1),
            h2=base_h.h2,
            h3=bool(base_h.h4 and f_min + 2.0 * self.rho <= 0.0),
            h4=bool(base_h.h4 and f_min + 2.0 * self.rho < 0.0),
            empirical=base_h.empirical,
        )

    def closed_form_zero(self) -> Optional[float]:
        shifted = getattr(self.base, "shifted", None)
        if shifted is None:
            return None
        u = shifted(2.0 * self.rho).closed_form_zero()
        return None if u is None else u - self.rho

    def closed_form_rate(self) -> Optional[float]:
        shifted = getattr(self.base, "shifted", None)
        if shifted is None:
            return None
        return shifted(2.0 * self.rho).closed_form_rate()

    def to_dict(self) -> dict:
        return {"family": self.family, "rho": self.rho, "base": self.base.to_dict()}


@dataclass(frozen=True)
class CallableMajorant(Majorant):
    """User supplied f, f', f''. h-conditions are checked on a grid and reported as empirical."""

    f_fn: Callable[[float], float]
    fprime_fn: Callable[[float], float]
    fsecond_fn: Callable[[float], float]
    end: float = math.inf
    horizon: Optional[float] = None
    family = "callable"

    @property
    def b(self) -> float:
        return self.f(0.0)

    def f(self, t: float) -> float:
        return float(self.f_fn(t))

    def fprime(self, t: float) -> float:
        return float(self.fprime_fn(t))

    def fsecond(self, t: float) -> float:
        return float(self.fsecond_fn(t))

    @property
    def domain_end(self) -> float:
        return self.end

    def grid(self) -> np.ndarray:
        top = self.end if math.isfinite(self.end) else self.horizon
        if top is None or not math.isfinite(top):
            raise MajorantError("Callable majorant on an unbounded domain needs a finite horizon")
        # stay strictly inside [0, R)
        return np.linspace(0.0, top, H_GRID_POINTS, endpoint=not math.isfinite(self.end))

    @property
    def t_bar(self) -> float:
        ts = self.grid()
        fp = np.array([self.fprime(t) for t in ts])
        idx = np.flatnonzero(fp >= 0.0)
        if idx.size == 0:
            return self.end
        if idx[0] == 0:
            return 0.0
        return float(bisect(self.fprime, ts[idx[0] - 1], ts[idx[0]], xtol=1e-15, maxiter=500))

    def h_conditions(self) -> HConditions:
        ts = self.grid()
        fv = np.array([self.f(t) for t in ts])
        fp = np.array([self.fprime(t) for t in ts])
        h1 = fv[0] > 0 and abs(fp[0] + 1.0) <= 1e-9
        h2 = bool(np.all(np.diff(fp) > 0) and np.all(np.diff(fp, 2) >= -1e-12))
        return HConditions(
            h1=bool(h1), h2=h2, h3=bool(np.any(fv <= 0)), h4=bool(np.any(fv < 0)), empirical=True
        )

    def to_dict(self) -> dict:
        return {"family": self.family, "domain_end": self.end}


@dataclass(frozen=True)
class MajorantTrace:
    t: Tuple[float, ...]
    t_star: float
    t_bar: float
    beta: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "t": list(self.t),
            "t_star": self.t_star,
            "t_bar": self.t_bar,
            "beta": self.beta,
            "converged": self.converged,
        }


def majorant_from_dict(doc: dict) -> Majorant:
    family = str(doc.get("family", "")).lower()
    if family == "quadratic":
        return QuadraticMajorant(float(doc["L"]), float(doc["b"]))
    if family == "smale":
        return SmaleMajorant(float(doc["gamma"]), float(doc["b"]))
    if family == "perturbed":
        return PerturbedMajorant(majorant_from_dict(doc["base"]), float(doc["rho"]))
    raise MajorantError(f"Unknown majorant family {family!r}. Use 'quadratic' or 'smale'")


def _check_domain(spec: Majorant, t: float) -> None:
    if not (0.0 <= t < spec.domain_end):
        raise MajorantDomainError(f"t={t} outside [0, {spec.domain_end}) for {spec.family} majorant")


def eval_f(spec: Majorant, t: float) -> float:
    _check_domain(spec, t)
    return spec.f(t)


def eval_fprime(spec: Majorant, t: float) -> float:
    _check_domain(spec, t)
    return spec.fprime(t)


def eval_fprime_left_derivative_at(spec: Majorant, t: float) -> float:
    # the families here have differentiable f', so D^- f' = f''
    _check_domain(spec, t)
    return spec.fsecond(t)


def check_h_conditions(spec: Majorant) -> HConditions:
    return spec.h_conditions()


def _bisection_zero(spec: Majorant) -> Tuple[float, bool]:
    """Smallest zero by bisection on [0, t_bar]; flag tells whether it is a double root."""
    hi = spec.t_bar
    if not math.isfinite(hi) or hi >= spec.domain_end:
        ts = spec.grid() if isinstance(spec, CallableMajorant) else None
        if ts is None:
            raise NoZeroError(f"No bracket for the zero of the {spec.family} majorant")
        vals = np.array([spec.f(t) for t in ts])
        idx = np.flatnonzero(vals <= 0)
        if idx.size == 0:
            raise NoZeroError(f"{spec.family} majorant has no zero on its grid")
        hi = float(ts[idx[0]])
    f_hi = spec.f(hi)
    scale = max(1.0, abs(spec.b))
    if abs(f_hi) <= DOUBLE_ROOT_TOL * scale:
        return hi, True
    if f_hi > 0:
        raise NoZeroError(f"{spec.family} majorant stays positive: min f = {f_hi:.6g}")
    root = bisect(spec.f, 0.0, hi, xtol=1e-15, maxiter=500)
    return float(root), False


def _root_resolution(spec: Majorant, t: float) -> float:
    """Width around t on which |f| cannot be told apart from rounding noise."""
    noise = 64.0 * np.finfo(float).eps * max(1.0, abs(spec.b), abs(t))
    slope = abs(spec.fprime(t))
    curv = max(abs(spec.fsecond(t)), np.finfo(float).tiny)
    # positive root of curv/2 d^2 + slope d = noise
    return 2.0 * noise / (math.sqrt(slope * slope + 2.0 * curv * noise) + slope)


def smallest_zero(spec: Majorant) -> float:
    h = spec.h_conditions()
    if not h.h3:
        raise NoZeroError(f"Hypothesis h3 fails for {spec.to_dict()}: f has no zero")
    oracle, double = _bisection_zero(spec)
    closed = spec.closed_form_zero()
    if closed is None:
        return oracle
    tol = (1e-6 if double else ZERO_AGREEMENT_TOL) * max(1.0, abs(closed))
    tol = max(tol, 4.0 * _root_resolution(spec, closed))
    if abs(closed - oracle) > tol:
        raise MajorantError(
            f"Closed-form zero {closed!r} disagrees with bisection {oracle!r} for {spec.to_dict()}"
        )
    return closed


def newton_iterate_scalar(spec: Majorant, t: float, t_star: Optional[float] = None) -> float:
    """n_f(t) = t - f(t) / f'(t) on [0, t_star)."""
    if t_star is None:
        t_star = smallest_zero(spec)
    if not (0.0 <= t < t_star):
        raise MajorantDomainError(f"n_f is defined on [0, {t_star}); got t={t}")
    fp = spec.fprime(t)
    if fp >= 0:
        raise MajorantDomainError(f"f'({t}) = {fp} >= 0")
    return t - spec.f(t) / fp


def beta(spec: Majorant) -> float:
    """sup{-f(t) : t in [0, R)}, attained at t_bar."""
    h = spec.h_conditions()
    if not h.h4:
        raise HypothesisError(f"Hypothesis h4 fails for {spec.to_dict()}: f is never negative")
    tb = spec.t_bar
    value = -spec.f(tb) if tb < spec.domain_end else None

    upper = 2.0 * tb if math.isfinite(tb) else spec.domain_end
    if math.isfinite(spec.domain_end):
        upper = min(upper, spec.domain_end * (1.0 - 1e-12))
    res = minimize_scalar(spec.f, bounds=(0.0, upper), method="bounded", options={"xatol": 1e-12})
    oracle = -float(res.fun)
    if value is None:
        value = oracle
    if abs(value - oracle) > 1e-9 * max(1.0, abs(value)):
        raise MajorantError(f"beta {value!r} disagrees with scalar maximization {oracle!r}")
    closed = spec.closed_form_beta()
    if closed is not None and abs(closed - value) > 1e-12 * max(1.0, abs(value)):
        log.warning("beta closed form %.17g differs from -f(t_bar) %.17g", closed, value)
    return value


def perturbed_majorant(spec: Majorant, rho: float) -> PerturbedMajorant:
    if rho < 0:
        raise MajorantError(f"rho must be nonnegative, got {rho}")
    bound = beta(spec) / 2.0
    if rho >= bound:
        raise MajorantError(f"rho={rho} must be < beta/2 = {bound}")
    return PerturbedMajorant(spec, float(rho))


def quadratic_rate_constant(spec: Majorant) -> float:
    """D^- f'(t_*) / (-2 f'(t_*))."""
    t_star = smallest_zero(spec)
    fp = spec.fprime(t_star)
    if fp >= -1e-15:
        raise HypothesisError(f"f'(t_*) = {fp} is not negative; only linear convergence is certified")
    generic = spec.fsecond(t_star) / (-2.0 * fp)
    closed = spec.closed_form_rate()
    if closed is None:
        return generic
    if abs(closed - generic) > 1e-9 * max(1.0, abs(generic)):
        log.warning("rate constant closed form %.17g vs generic %.17g", closed, generic)
    return closed


def majorant_sequence(spec: Majorant, k_max: int = 60, stop_tol: float = 1e-14) -> MajorantTrace:
    """t_0 = 0, t_{k+1} = n_f(t_k) until t_star - t_k < stop_tol or k = k_max."""
    t_star = smallest_zero(spec)
    ts = [0.0]
    converged = False
    for _ in range(k_max):
        if t_star - ts[-1] < stop_tol:
            converged = True
            break
        nxt = newton_iterate_scalar(spec, ts[-1], t_star=t_star)
        if nxt >= t_star or nxt <= ts[-1]:
            # floating-point saturation at the limit
            converged = True
            break
        ts.append(nxt)
    else:
        converged = t_star - ts[-1] < stop_tol

    try:
        b = beta(spec)
    except HypothesisError:
        b = 0.0
    return MajorantTrace(t=tuple(ts), t_star=t_star, t_bar=spec.t_bar, beta=b, converged=converged)
