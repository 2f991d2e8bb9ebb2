from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cone import ProductCone
from .expr import (
    MAX_DEPTH,
    Const,
    ExprFormatError,
    Mul,
    PolyExpr,
    degree,
    depth,
    differentiate,
    evaluate,
    from_json,
    max_var_index,
    to_json,
)


class ProblemFormatError(ValueError):
    pass


class ConeDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")
    p: int = Field(ge=0)
    q: int = Field(ge=0)


class ExpectedDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")
    L: Optional[float] = None
    gamma: Optional[float] = None
    b: Optional[float] = None
    solution: Optional[List[float]] = None


class ProblemDocument(BaseModel):
    """Problem JSON schema."""

    model_config = ConfigDict(extra="forbid")
    name: Optional[str] = None
    n: int = Field(ge=1)
    cone: ConeDoc
    F: List[Any]
    x_tilde: List[float]
    R: float = Field(gt=0)
    expected: Optional[ExpectedDoc] = None

    @field_validator("F")
    @classmethod
    def _parse_exprs(cls, v):
        out = []
        for i, e in enumerate(v):
            try:
                expr = from_json(e, path=f"F[{i}]")
            except ExprFormatError as err:
                raise ValueError(str(err)) from err
            if depth(expr) > MAX_DEPTH:
                raise ValueError(f"F[{i}]: expression deeper than {MAX_DEPTH}")
            out.append(expr)
        return out

    @model_validator(mode="after")
    def _dimensions(self):
        m = self.cone.p + self.cone.q
        if m < 1:
            raise ValueError("cone: p + q must be at least 1")
        if len(self.F) != m:
            raise ValueError(f"F: has {len(self.F)} components but cone.p + cone.q = {m}")
        if len(self.x_tilde) != self.n:
            raise ValueError(f"x_tilde: has {len(self.x_tilde)} entries but n = {self.n}")
        for i, e in enumerate(self.F):
            if max_var_index(e) >= self.n:
                raise ValueError(f"F[{i}]: uses variable {max_var_index(e)} but n = {self.n}")
        return self


@dataclass(frozen=True)
class InclusionProblem:
    """F(x) in C on the ball B(x_tilde, R)."""

    n: int
    cone: ProductCone
    F: Tuple[PolyExpr, ...]
    x_tilde: np.ndarray
    R: float
    name: Optional[str] = None
    expected: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "F", tuple(self.F))
        object.__setattr__(self, "x_tilde", np.asarray(self.x_tilde, dtype=float).reshape(-1))
        if len(self.F) != self.cone.m:
            raise ProblemFormatError(f"F has {len(self.F)} components, cone needs {self.cone.m}")
        if self.x_tilde.shape[0] != self.n:
            raise ProblemFormatError(f"x_tilde has {self.x_tilde.shape[0]} entries, n = {self.n}")
        if not self.R > 0:
            raise ProblemFormatError(f"R must be positive, got {self.R}")

    @property
    def m(self) -> int:
        return self.cone.m

    @cached_property
    def jacobian_exprs(self) -> Tuple[Tuple[PolyExpr, ...], ...]:
        return tuple(tuple(differentiate(f, j) for j in range(self.n)) for f in self.F)

    @cached_property
    def total_degree(self) -> int:
        return max(degree(f) for f in self.F)

    def in_ball(self, x, slack: float = 0.0) -> bool:
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.x_tilde)) <= self.R + slack


def _point(problem: InclusionProblem, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != problem.n:
        raise ValueError(f"Point has {arr.shape[0]} entries, problem has n = {problem.n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Point contains NaN or Inf")
    return arr


def eval_F(problem: InclusionProblem, x) -> np.ndarray:
    pt = _point(problem, x)
    return np.array([float(evaluate(f, pt)) for f in problem.F])


def eval_jacobian(problem: InclusionProblem, x) -> np.ndarray:
    pt = _point(problem, x)
    return np.array([[float(evaluate(e, pt)) for e in row] for row in problem.jacobian_exprs])


def directional_taylor(problem: InclusionProblem, x, v, order: int) -> List[np.ndarray]:
    """Coefficients c_0..c_order of tau -> F(x + tau v); c_k = F^(k)(x)(v,...,v) / k!."""
    pt = _point(problem, x)
    dv = np.asarray(v, dtype=float).reshape(-1)
    if dv.shape[0] != problem.n:
        raise ValueError(f"Direction has {dv.shape[0]} entries, problem has n = {problem.n}")
    line = [Polynomial([pt[i], dv[i]]) for i in range(problem.n)]
    coeffs = np.zeros((order + 1, problem.m))
    for row, f in enumerate(problem.F):
        val = evaluate(f, line)
        c = val.coef if isinstance(val, Polynomial) else np.array([float(val)])
        top = min(order + 1, c.shape[0])
        coeffs[:top, row] = c[:top]
    return [coeffs[k] for k in range(order + 1)]


def scale_problem(problem: InclusionProblem, weights) -> InclusionProblem:
    """Left-multiply F by a positive diagonal; the product cone is unchanged."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != problem.m or np.any(w <= 0):
        raise ValueError("Scaling needs one positive weight per component of F")
    scaled = tuple(Mul(Const(float(wi)), f) for wi, f in zip(w, problem.F))
    return InclusionProblem(
        n=problem.n,
        cone=problem.cone,
        F=scaled,
        x_tilde=problem.x_tilde.copy(),
        R=problem.R,
        name=f"{problem.name or 'problem'}*scaled",
        expected={},
    )


def problem_from_dict(doc: dict) -> InclusionProblem:
    try:
        parsed = ProblemDocument.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "$"
        raise ProblemFormatError(f"{loc}: {first['msg']}") from e
    expected = parsed.expected.model_dump(exclude_none=True) if parsed.expected else {}
    return InclusionProblem(
        n=parsed.n,
        cone=ProductCone(parsed.cone.p, parsed.cone.q),
        F=tuple(parsed.F),
        x_tilde=np.array(parsed.x_tilde, dtype=float),
        R=float(parsed.R),
        name=parsed.name,
        expected=expected,
    )


def problem_to_dict(problem: InclusionProblem) -> dict:
    doc: Dict[str, Any] = {}
    if problem.name is not None:
        doc["name"] = problem.name
    doc.update(
        {
            "n": problem.n,
            "cone": problem.cone.to_dict(),
            "F": [to_json(f) for f in problem.F],
            "x_tilde": [float(v) for v in problem.x_tilde],
            "R": float(problem.R),
        }
    )
    if problem.expected:
        doc["expected"] = dict(problem.expected)
    return doc


def load_problem(text: str) -> InclusionProblem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFormatError(f"Invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ProblemFormatError("$: problem document must be a JSON object")
    return problem_from_dict(doc)


_FLOAT_TAG = "__float17__:"
_FLOAT_RE = re.compile(r'"' + _FLOAT_TAG + r'([^"]+)"')


def _float17(value: float) -> str:
    text = f"{value:.17g}"
    return text if any(ch in text for ch in ".en") else text + ".0"


def _tag_floats(obj):
    if isinstance(obj, float):
        return _FLOAT_TAG + _float17(obj)
    if isinstance(obj, dict):
        return {k: _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    return obj


def save_problem(problem: InclusionProblem) -> str:
    """Problem document as JSON; floats carry 17 significant digits."""
    text = json.dumps(_tag_floats(problem_to_dict(problem)), indent=2, sort_keys=False)
    return _FLOAT_RE.sub(r"\1", text) + "\n"
