"""Cone types and Euclidean projections.

Supports the zero cone, the nonnegative orthant, and the second-order
cone (element layout (t, u) with t the first coordinate).  The latter
two are self-dual; the dual of the zero cone is the free cone, which
matters when projecting dual variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConeError(ValueError):
    pass


@dataclass(frozen=True)
class ZeroCone:
    dim: int


@dataclass(frozen=True)
class NonNegCone:
    dim: int


@dataclass(frozen=True)
class SecondOrderCone:
    dim: int


Cone = ZeroCone | NonNegCone | SecondOrderCone


def _check(cone: Cone, v: np.ndarray) -> np.ndarray:
    if cone.dim < 1:
        raise ConeError(f"cone dimension must be >= 1, got {cone.dim}")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cone.dim,):
        raise ConeError(f"vector of shape {v.shape} for cone of dim {cone.dim}")
    return v


@dataclass(frozen=True)
class ConeProduct:
    """Ordered product of cone factors."""

    factors: tuple[Cone, ...]

    def __init__(self, factors) -> None:
        object.__setattr__(self, "factors", tuple(factors))
        for f in self.factors:
            if f.dim < 1:
                raise ConeError(f"cone dimension must be >= 1, got {f.dim}")

    @property
    def total_dim(self) -> int:
        return sum(f.dim for f in self.factors)


def project(cone: Cone, v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the cone."""
    v = _check(cone, v)
    if isinstance(cone, ZeroCone):
        return np.zeros(cone.dim)
    if isinstance(cone, NonNegCone):
        return np.maximum(v, 0.0)
    if isinstance(cone, SecondOrderCone):
        t, u = v[0], v[1:]
        nu = np.linalg.norm(u)
        if nu <= t:
            return v.copy()
        if nu <= -t:
            return np.zeros(cone.dim)
        coef = 0.5 * (t + nu)
        out = np.empty(cone.dim)
        out[0] = coef
        out[1:] = coef * (u / nu)
        return out
    raise ConeError(f"unknown cone type {type(cone).__name__}")


def project_dual(cone: Cone, v: np.ndarray) -> np.ndarray:
    """Projection onto the dual cone (free for the zero cone, else self-dual)."""
    if isinstance(cone, ZeroCone):
        return _check(cone, v).copy()
    return project(cone, v)


def project_product(K: ConeProduct, v: np.ndarray) -> np.ndarray:
    """Blockwise projection in factor order."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (K.total_dim,):
        raise ConeError(f"vector of shape {v.shape} for product of dim {K.total_dim}")
    out = np.empty_like(v)
    offset = 0
    for f in K.factors:
        out[offset:offset + f.dim] = project(f, v[offset:offset + f.dim])
        offset += f.dim
    return out


def project_product_dual(K: ConeProduct, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (K.total_dim,):
        raise ConeError(f"vector of shape {v.shape} for product of dim {K.total_dim}")
    out = np.empty_like(v)
    offset = 0
    for f in K.factors:
        out[offset:offset + f.dim] = project_dual(f, v[offset:offset + f.dim])
        offset += f.dim
    return out


def contains(cone: Cone, v: np.ndarray, tol: float = 0.0) -> bool:
    """Cone membership up to an additive tolerance."""
    v = _check(cone, v)
    if isinstance(cone, ZeroCone):
        return bool(np.max(np.abs(v), initial=0.0) <= tol)
    if isinstance(cone, NonNegCone):
        return bool(np.min(v, initial=0.0) >= -tol)
    if isinstance(cone, SecondOrderCone):
        return bool(np.linalg.norm(v[1:]) <= v[0] + tol)
    raise ConeError(f"unknown cone type {type(cone).__name__}")


def contains_product(K: ConeProduct, v: np.ndarray, tol: float = 0.0) -> bool:
    v = np.asarray(v, dtype=np.float64)
    offset = 0
    for f in K.factors:
        if not contains(f, v[offset:offset + f.dim], tol):
            return False
        offset += f.dim
    return True
