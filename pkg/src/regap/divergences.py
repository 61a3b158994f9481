"""Bregman divergences, forward maps, and divergence-ball feasibility sets.

A feasibility constraint ``g(x) = b`` is relaxed to the sublevel set
``{x : d(g(x), b) <= eps}`` of a Bregman divergence ``d``.  The module ships
the Euclidean and Kullback-Leibler kernels and the forward maps needed by the
experiments (identity, linear, componentwise squared modulus, and DFT
intensity), plus the 1-d boundary solve along a segment that powers the
approximate projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .core import COMPLEX, MEMBERSHIP_TOL, REAL, DimensionMismatchError, Point, first_crossing, lerp

CLIP_FLOOR = 1e-300

EUCLIDEAN = "euclidean"
KULLBACK_LEIBLER = "kullback_leibler"


class KernelDomainError(ValueError):
    """Argument outside the kernel's domain."""


def _as_array(v) -> np.ndarray:
    if isinstance(v, Point):
        return v.data
    return np.asarray(v, dtype=np.float64)


class EuclideanKernel:
    """Half squared Euclidean distance, the Bregman distance of 0.5*||.||^2."""

    name = EUCLIDEAN

    def evaluate(self, z, y) -> float:
        d = _as_array(z) - _as_array(y)
        return 0.5 * float(d @ d)

    def gradient_in_first_arg(self, z, y) -> np.ndarray:
        return _as_array(z) - _as_array(y)

    def hessian_in_first_arg(self, z, y) -> np.ndarray:
        return np.eye(_as_array(z).size)


class KullbackLeiblerKernel:
    """Kullback-Leibler divergence, the Bregman distance of t*log(t) - t.

    ``evaluate`` accepts nonnegative data in both slots: the ``0*log(0) = 0``
    convention is applied to the first argument, and zeros in either argument
    are clipped at ``CLIP_FLOOR`` before any logarithm.  Each clipped entry
    increments ``clip_count``; stored data is never modified.  Negative
    entries are a hard domain error.
    """

    name = KULLBACK_LEIBLER

    def __init__(self):
        self.clip_count = 0

    def _clip(self, v: np.ndarray) -> np.ndarray:
        small = v < CLIP_FLOOR
        if np.any(small):
            self.clip_count += int(np.count_nonzero(small))
            v = np.where(small, CLIP_FLOOR, v)
        return v

    def _check_nonneg(self, v: np.ndarray, slot: str) -> None:
        if np.any(v < 0):
            raise KernelDomainError(f"negative component in the {slot} argument")

    def evaluate(self, z, y) -> float:
        z = _as_array(z)
        y = _as_array(y)
        self._check_nonneg(z, "first")
        self._check_nonneg(y, "second")
        yc = self._clip(y)
        # z*log(z/y) computed as xlogy(z, z) - z*log(yc): xlogy handles z = 0.
        val = xlogy(z, z) - z * np.log(yc) + y - z
        return float(np.sum(val))

    def gradient_in_first_arg(self, z, y) -> np.ndarray:
        z = _as_array(z)
        y = _as_array(y)
        self._check_nonneg(z, "first")
        self._check_nonneg(y, "second")
        return np.log(self._clip(z)) - np.log(self._clip(y))

    def hessian_in_first_arg(self, z, y) -> np.ndarray:
        z = self._clip(_as_array(z))
        return np.diag(1.0 / z)


def make_kernel(name: str):
    if name == EUCLIDEAN:
        return EuclideanKernel()
    if name == KULLBACK_LEIBLER:
        return KullbackLeiblerKernel()
    raise ValueError(f"unknown kernel {name!r}")


def kl_divergence(z, y) -> float:
    """Strict Kullback-Leibler divergence sum(z*log(z/y) + y - z).

    Requires ``z >= 0`` and ``y > 0`` componentwise; ``0*log(0) = 0``.
    """
    z = _as_array(z)
    y = _as_array(y)
    if np.any(z < 0):
        raise KernelDomainError("negative component in z")
    if np.any(y <= 0):
        raise KernelDomainError("nonpositive component in y")
    return float(np.sum(xlogy(z, z / y) + y - z))


# ---------------------------------------------------------------------------
# Forward maps


class ForwardMap:
    """Differentiable map g from the ambient space into the data space.

    ``value`` evaluates g, ``pullback`` applies the Jacobian adjoint
    Dg(x)^T w in real-storage coordinates.  ``is_affine`` enables the
    closed-form boundary solve for Euclidean kernels.
    """

    in_dim: int
    out_dim: int
    in_kind: str = REAL
    is_affine = False

    def value(self, x: Point) -> np.ndarray:
        raise NotImplementedError

    def pullback(self, x: Point, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def second_order_correction(self, x: Point, w: np.ndarray) -> np.ndarray:
        """Matrix sum_k w_k * Hess(g_k)(x); zero for affine maps."""
        return np.zeros((self.in_dim, self.in_dim))

    def jacobian(self, x: Point) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no dense Jacobian")

    def _check(self, x: Point) -> None:
        if x.dim != self.in_dim or x.kind != self.in_kind:
            raise DimensionMismatchError(
                f"point ({x.kind}/{x.dim}) does not match the map domain "
                f"({self.in_kind}/{self.in_dim})"
            )


class IdentityMap(ForwardMap):
    is_affine = True

    def __init__(self, n: int):
        self.in_dim = self.out_dim = int(n)

    def value(self, x: Point) -> np.ndarray:
        self._check(x)
        return x.data.copy()

    def pullback(self, x: Point, w: np.ndarray) -> np.ndarray:
        return np.asarray(w, dtype=np.float64).copy()

    def jacobian(self, x: Point) -> np.ndarray:
        return np.eye(self.in_dim)


class LinearMap(ForwardMap):
    is_affine = True

    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        self.out_dim, self.in_dim = self.matrix.shape

    def value(self, x: Point) -> np.ndarray:
        self._check(x)
        return self.matrix @ x.data

    def pullback(self, x: Point, w: np.ndarray) -> np.ndarray:
        return self.matrix.T @ np.asarray(w, dtype=np.float64)

    def jacobian(self, x: Point) -> np.ndarray:
        return self.matrix.copy()


class SquareMap(ForwardMap):
    """Componentwise squared modulus: |x_j|^2 per logical component."""

    def __init__(self, n: int, kind: str = REAL):
        self.in_kind = kind
        self.out_dim = int(n)
        self.in_dim = 2 * int(n) if kind == COMPLEX else int(n)

    def value(self, x: Point) -> np.ndarray:
        self._check(x)
        if self.in_kind == COMPLEX:
            c = x.as_complex()
            return (c.real ** 2 + c.imag ** 2)
        return x.data ** 2

    def pullback(self, x: Point, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if self.in_kind == COMPLEX:
            return 2.0 * x.data * np.repeat(w, 2)
        return 2.0 * x.data * w

    def second_order_correction(self, x: Point, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        diag = 2.0 * (np.repeat(w, 2) if self.in_kind == COMPLEX else w)
        return np.diag(diag)

    def jacobian(self, x: Point) -> np.ndarray:
        if self.in_kind == COMPLEX:
            jac = np.zeros((self.out_dim, self.in_dim))
            jac[np.arange(self.out_dim), 2 * np.arange(self.out_dim)] = 2.0 * x.data[0::2]
            jac[np.arange(self.out_dim), 2 * np.arange(self.out_dim) + 1] = 2.0 * x.data[1::2]
            return jac
        return np.diag(2.0 * x.data)


class FourierIntensityMap(ForwardMap):
    """Squared modulus of the unitary DFT of a complex grid."""

    in_kind = COMPLEX

    def __init__(self, shape: Sequence[int]):
        self.shape = tuple(int(s) for s in shape)
        n = int(np.prod(self.shape))
        self.out_dim = n
        self.in_dim = 2 * n

    def _transform(self, x: Point) -> np.ndarray:
        self._check(x)
        grid = x.as_complex().reshape(self.shape)
        return np.fft.fftn(grid, norm="ortho")

    def value(self, x: Point) -> np.ndarray:
        X = self._transform(x)
        return np.abs(X).ravel() ** 2

    def pullback(self, x: Point, w: np.ndarray) -> np.ndarray:
        X = self._transform(x)
        w = np.asarray(w, dtype=np.float64).reshape(self.shape)
        grad = np.fft.ifftn(2.0 * w * X, norm="ortho")
        return np.ascontiguousarray(grad.ravel()).view(np.float64).copy()


# ---------------------------------------------------------------------------
# Regularized sets


@dataclass
class RegularizedSet:
    """Divergence ball {x : d(g(x), b) <= epsilon} around the data b.

    The unregularized set (epsilon = 0) is {x : g(x) = b}.  Whether the
    divergence grows fast enough at infinity for projections to exist is a
    property of (g, d, b) that the caller must ensure; it is not checked.
    """

    forward: ForwardMap
    data: np.ndarray
    kernel: object
    epsilon: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 1 or self.data.size != self.forward.out_dim:
            raise DimensionMismatchError(
                f"data length {self.data.size} does not match the map range "
                f"{self.forward.out_dim}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("data entries must be finite")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def dim(self) -> int:
        return self.forward.in_dim

    @property
    def kind(self) -> str:
        return self.forward.in_kind

    def residual(self, x: Point) -> float:
        return self.kernel.evaluate(self.forward.value(x), self.data)

    def residual_gradient(self, x: Point) -> Point:
        w = self.kernel.gradient_in_first_arg(self.forward.value(x), self.data)
        return Point(self.forward.pullback(x, w), self.kind)

    def residual_hessian(self, x: Point) -> np.ndarray:
        z = self.forward.value(x)
        jac = self.forward.jacobian(x)
        w = self.kernel.gradient_in_first_arg(z, self.data)
        hess = jac.T @ self.kernel.hessian_in_first_arg(z, self.data) @ jac
        return hess + self.forward.second_order_correction(x, w)

    def contains(self, x: Point, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.residual(x) <= self.epsilon + tol


def residual(m: RegularizedSet, x: Point) -> float:
    """Divergence d(g(x), b) of the point's image from the data."""
    return m.residual(x)


def bregman_line_boundary(m: RegularizedSet, x: Point, x0: Point,
                          tol: float = 1e-12, max_iter: int = 200,
                          scan: int = 64) -> tuple[float, Point]:
    """First entry of the segment from ``x`` toward ``x0`` into the set.

    Returns ``(tau, point)`` with ``tau`` the smallest relaxation in (0, 1]
    such that ``(1 - tau) x + tau x0`` is a member, located by a forward scan
    plus bisection (closed-form quadratic for Euclidean kernels with affine
    maps).  Requires ``x`` outside the set and ``x0`` a member (for instance
    a projection onto the unregularized set).  For non-monotone residuals
    along the segment the first crossing found by the scan is returned, so
    the result is always a member within the membership tolerance, matching
    the slack granted to the anchor itself.
    """
    rx = m.residual(x)
    if rx <= m.epsilon:
        raise ValueError("x is already a member; no boundary crossing to find")
    r0 = m.residual(x0)
    if r0 > m.epsilon + MEMBERSHIP_TOL:
        raise ValueError("anchor x0 is not a member of the set")

    if isinstance(m.kernel, EuclideanKernel) and m.forward.is_affine:
        u = m.forward.value(x) - m.data
        v = m.forward.value(x0) - m.data
        d = v - u
        a = 0.5 * float(d @ d)
        b = float(u @ d)
        c = 0.5 * float(u @ u) - m.epsilon
        if a > 0:
            disc = b * b - 4.0 * a * c
            if disc >= 0:
                sqrt_disc = np.sqrt(disc)
                tau = (-b - sqrt_disc) / (2.0 * a)
                if not 0.0 < tau <= 1.0:
                    tau = (-b + sqrt_disc) / (2.0 * a)
                if 0.0 < tau <= 1.0:
                    return float(tau), lerp(x, x0, float(tau))
        # fall through to bisection on degenerate geometry

    def member(t: float) -> bool:
        return m.residual(lerp(x, x0, t)) <= m.epsilon + MEMBERSHIP_TOL

    tau = first_crossing(member, 0.0, 1.0, scan=scan, tol=tol, max_iter=max_iter)
    return float(tau), lerp(x, x0, float(tau))
