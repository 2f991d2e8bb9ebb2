from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConeDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ProductCone:
    """C = R^p_- x {0}^q. Rows 0..p-1 are "<= 0", rows p..m-1 are "= 0"."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0 or self.p + self.q < 1:
            raise ValueError(f"Invalid cone p={self.p}, q={self.q}: need p, q >= 0 and p + q >= 1")

    @property
    def m(self) -> int:
        return self.p + self.q

    @property
    def is_degenerate(self) -> bool:
        return self.p == 0

    def _check(self, v) -> np.ndarray:
        arr = np.asarray(v, dtype=float).reshape(-1)
        if arr.shape[0] != self.m:
            raise ConeDimensionError(f"Vector of length {arr.shape[0]} does not match cone dimension {self.m}")
        return arr

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q}


def contains(cone: ProductCone, v, tol: float = 0.0) -> bool:
    arr = cone._check(v)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    ineq, eq = arr[: cone.p], arr[cone.p :]
    return bool(np.all(ineq <= tol) and np.all(np.abs(eq) <= tol))


def residual(cone: ProductCone, v) -> np.ndarray:
    """v - Proj_C(v)."""
    arr = cone._check(v)
    out = arr.copy()
    out[: cone.p] = np.maximum(arr[: cone.p], 0.0)
    return out


def distance_to_cone(cone: ProductCone, v) -> float:
    return float(np.linalg.norm(residual(cone, v)))
