"""Projection oracles for the sets used throughout the solver.

Exact projectors exist for affine subspaces, halfspaces, componentwise
magnitude ("box corner") sets, Fourier-magnitude sets, and the nonnegative
support cone.  Projections onto a divergence ball are available exactly via a
small-scale KKT Newton solve, or approximately by walking the segment toward
an unregularized projection until the ball boundary is hit.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import (
    COMPLEX,
    MEMBERSHIP_TOL,
    REAL,
    DimensionMismatchError,
    NormalConeUnavailableError,
    Point,
    RayCone,
    SetOracle,
    SignedProductCone,
    SubspaceCone,
    ZeroCone,
    canonical_point,
)
from .divergences import RegularizedSet, bregman_line_boundary

NEWTON_MAX_DIM = 50


class NewtonConvergenceError(RuntimeError):
    """The KKT Newton solve did not converge within the iteration cap."""


class AffineSet(SetOracle):
    """Affine subspace {x : A x = b} with full row rank A.

    The Gram factorization of A A^T is computed once and reused by every
    projection.
    """

    prox_regular = True

    def __init__(self, matrix, rhs):
        a = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        b = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
        if a.shape[0] != b.size:
            raise DimensionMismatchError("rhs length does not match the row count")
        super().__init__(a.shape[1])
        self.matrix = a
        self.rhs = b
        try:
            self._gram = cho_factor(a @ a.T)
        except np.linalg.LinAlgError as exc:
            raise ValueError("matrix must have full row rank") from exc
        q, _ = np.linalg.qr(a.T)
        self._normal_basis = q

    def project(self, x: Point) -> list[Point]:
        self._check_point(x)
        r = self.matrix @ x.data - self.rhs
        y = x.data - self.matrix.T @ cho_solve(self._gram, r)
        return [Point(y)]

    def membership_residual(self, x: Point) -> float:
        self._check_point(x)
        return float(np.linalg.norm(self.matrix @ x.data - self.rhs))

    def normal_cone_at(self, x: Point) -> SubspaceCone:
        if not self.contains(x):
            raise ValueError("base point is not a member of the set")
        return SubspaceCone(self._normal_basis)


class HalfspaceSet(SetOracle):
    """Halfspace {x : <a, x> <= beta}."""

    prox_regular = True

    def __init__(self, normal, offset: float):
        a = np.atleast_1d(np.asarray(normal, dtype=np.float64))
        if np.linalg.norm(a) == 0:
            raise ValueError("normal must be nonzero")
        super().__init__(a.size)
        self.normal = a
        self.offset = float(offset)
        self._sq = float(a @ a)

    def _violation(self, x: Point) -> float:
        return float(self.normal @ x.data - self.offset)

    def project(self, x: Point) -> list[Point]:
        self._check_point(x)
        v = self._violation(x)
        if v <= 0:
            return [x]
        return [Point(x.data - (v / self._sq) * self.normal)]

    def membership_residual(self, x: Point) -> float:
        self._check_point(x)
        return max(self._violation(x), 0.0) / np.sqrt(self._sq)

    def normal_cone_at(self, x: Point):
        v = self._violation(x)
        if v > MEMBERSHIP_TOL * np.sqrt(self._sq):
            raise ValueError("base point is not a member of the set")
        if abs(v) <= MEMBERSHIP_TOL * np.sqrt(self._sq):
            return RayCone(self.normal)
        return ZeroCone(self.dim)


class SupportNonnegSet(SetOracle):
    """Real nonnegative vectors vanishing on a forced-zero index set.

    For complex storage the projection takes the real part first; imaginary
    parts are normal to the set, so they map to zero.
    """

    prox_regular = True

    def __init__(self, forced_zero, n: int, kind: str = REAL):
        self.kind = kind
        self.n_logical = int(n)
        super().__init__(2 * self.n_logical if kind == COMPLEX else self.n_logical)
        mask = np.zeros(self.n_logical, dtype=bool)
        idx = np.asarray(sorted({int(i) for i in forced_zero}), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_logical):
            raise ValueError("forced-zero index out of range")
        if idx.size:
            mask[idx] = True
        self.forced_zero = mask

    def _parts(self, x: Point) -> tuple[np.ndarray, np.ndarray | None]:
        if self.kind == COMPLEX:
            c = x.as_complex()
            return c.real.copy(), c.imag.copy()
        return x.data.copy(), None

    def project(self, x: Point) -> list[Point]:
        self._check_point(x)
        re, _ = self._parts(x)
        re = np.maximum(re, 0.0)
        re[self.forced_zero] = 0.0
        if self.kind == COMPLEX:
            return [Point.from_complex(re.astype(np.complex128))]
        return [Point(re)]

    def membership_residual(self, x: Point) -> float:
        self._check_point(x)
        re, im = self._parts(x)
        worst = max(float(np.max(-re, initial=0.0)),
                    float(np.max(np.abs(re[self.forced_zero]), initial=0.0)))
        if im is not None:
            worst = max(worst, float(np.max(np.abs(im), initial=0.0)))
        return worst

    def normal_cone_at(self, x: Point) -> SignedProductCone:
        if not self.contains(x):
            raise ValueError("base point is not a member of the set")
        re, _ = self._parts(x)
        stride = 2 if self.kind == COMPLEX else 1
        free, nonpos = [], []
        for j in range(self.n_logical):
            coord = stride * j
            if self.forced_zero[j]:
                free.append(coord)
            elif re[j] <= MEMBERSHIP_TOL:
                nonpos.append(coord)
            if self.kind == COMPLEX:
                free.append(coord + 1)
        return SignedProductCone(self.dim, free=free, nonpos=nonpos)


class BoxMagnitudeSet(SetOracle):
    """Vectors with prescribed componentwise magnitudes |x_j| = r_j.

    In the real case this is the (finite) corner set of the box with half
    lengths r.  Components of x at zero make the projection multivalued; to
    keep the candidate set finite only the two candidates obtained by fixing
    the positive branch everywhere and additionally flipping the first
    ambiguous component are enumerated.
    """

    prox_regular = False

    def __init__(self, magnitudes, kind: str = REAL):
        r = np.atleast_1d(np.asarray(magnitudes, dtype=np.float64))
        if np.any(r < 0):
            raise ValueError("magnitudes must be nonnegative")
        self.kind = kind
        self.magnitudes = r
        self.n_logical = r.size
        super().__init__(2 * r.size if kind == COMPLEX else r.size)

    @classmethod
    def from_intensity(cls, intensity, kind: str = REAL) -> "BoxMagnitudeSet":
        b = np.atleast_1d(np.asarray(intensity, dtype=np.float64))
        if np.any(b < 0):
            raise ValueError("intensities must be nonnegative")
        return cls(np.sqrt(b), kind)

    def _components(self, x: Point) -> np.ndarray:
        return x.as_complex() if self.kind == COMPLEX else x.data

    def _wrap(self, comps: np.ndarray) -> Point:
        if self.kind == COMPLEX:
            return Point.from_complex(comps)
        return Point(comps.real if np.iscomplexobj(comps) else comps)

    def project(self, x: Point) -> list[Point]:
        self._check_point(x)
        c = self._components(x)
        mag = np.abs(c)
        phase = np.divide(c, mag, out=np.ones_like(c), where=mag > 0)
        base = self.magnitudes * phase
        candidates = [self._wrap(base)]
        ambiguous = np.flatnonzero((mag == 0) & (self.magnitudes > 0))
        if ambiguous.size:
            flipped = base.copy()
            flipped[ambiguous[0]] = -self.magnitudes[ambiguous[0]]
            candidates.append(self._wrap(flipped))
        return candidates

    def membership_residual(self, x: Point) -> float:
        self._check_point(x)
        return float(np.max(np.abs(np.abs(self._components(x)) - self.magnitudes)))

    def normal_cone_at(self, x: Point):
        if not self.contains(x):
            raise ValueError("base point is not a member of the set")
        if self.kind == REAL:
            # members are isolated, so every direction is a proximal normal
            return SubspaceCone(np.eye(self.dim))
        c = self._components(x)
        cols = []
        for j in range(self.n_logical):
            if self.magnitudes[j] > 0:
                col = np.zeros(self.dim)
                col[2 * j] = c[j].real / self.magnitudes[j]
                col[2 * j + 1] = c[j].imag / self.magnitudes[j]
                cols.append(col)
            else:
                for off in (0, 1):
                    col = np.zeros(self.dim)
                    col[2 * j + off] = 1.0
                    cols.append(col)
        return SubspaceCone(np.column_stack(cols))


def project_affine(s: AffineSet, x: Point) -> Point:
    """Projection onto an affine subspace."""
    return s.project(x)[0]


def project_magnitude(s: BoxMagnitudeSet, x: Point) -> list[Point]:
    """Candidate projections onto a componentwise magnitude set."""
    return s.project(x)


def project_fourier_magnitude(intensity, x: Point, shape=None) -> Point:
    """Projection onto {x : |F x|^2 = b} for the unitary DFT F.

    Replaces each DFT coefficient's modulus by sqrt(b_k) while keeping its
    phase; coefficients at exactly zero get phase 1.  Because F is unitary
    this is an exact Euclidean projection.
    """
    b = np.atleast_1d(np.asarray(intensity, dtype=np.float64))
    if np.any(b < 0):
        raise ValueError("intensities must be nonnegative")
    if shape is None:
        shape = (b.size,)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != b.size or x.kind != COMPLEX or x.n != b.size:
        raise DimensionMismatchError("intensity, shape, and point sizes disagree")
    grid = x.as_complex().reshape(shape)
    X = np.fft.fftn(grid, norm="ortho")
    mag = np.abs(X)
    phase = np.divide(X, mag, out=np.ones_like(X), where=mag > 0)
    Y = np.sqrt(b).reshape(shape) * phase
    y = np.fft.ifftn(Y, norm="ortho")
    return Point.from_complex(y.ravel())


class FourierMagnitudeSet(SetOracle):
    """Set {x : |F x|^2 = b} of complex grids with prescribed DFT intensities."""

    kind = COMPLEX
    prox_regular = False

    def __init__(self, intensity, shape=None):
        b = np.atleast_1d(np.asarray(intensity, dtype=np.float64))
        if np.any(b < 0):
            raise ValueError("intensities must be nonnegative")
        self.intensity = b
        self.shape = tuple(int(s) for s in shape) if shape is not None else (b.size,)
        if int(np.prod(self.shape)) != b.size:
            raise DimensionMismatchError("shape does not match the intensity length")
        super().__init__(2 * b.size)

    def project(self, x: Point) -> list[Point]:
        self._check_point(x)
        return [project_fourier_magnitude(self.intensity, x, self.shape)]

    def membership_residual(self, x: Point) -> float:
        self._check_point(x)
        X = np.fft.fftn(x.as_complex().reshape(self.shape), norm="ortho")
        return float(np.max(np.abs(np.abs(X).ravel() ** 2 - self.intensity)))


class RegularizedSetOracle(SetOracle):
    """Set-oracle facade over a divergence ball.

    ``projection`` selects how ``project`` answers: "exact" uses the KKT
    Newton solve (small instances, smooth maps), "approx" walks the segment
    toward a projection onto the unregularized set, which then must be
    supplied as ``unregularized``.  The normal cone at a boundary point is
    the ray spanned by the residual gradient; interior points report the
    zero cone.
    """

    def __init__(self, m: RegularizedSet, unregularized: SetOracle | None = None,
                 projection: str = "exact", prox_regular: bool = True):
        super().__init__(m.dim)
        if projection not in ("exact", "approx"):
            raise ValueError("projection must be 'exact' or 'approx'")
        if projection == "approx" and unregularized is None:
            raise ValueError("approximate projection needs the unregularized oracle")
        self.m = m
        self.kind = m.kind
        self.unregularized = unregularized
        self.projection = projection
        self.prox_regular = prox_regular

    def project(self, x: Point) -> list[Point]:
        self._check_point(x)
        if self.m.contains(x):
            return [x]
        if self.projection == "exact":
            return [project_regularized_exact(self.m, x)]
        point, _ = project_regularized_approx(self.m, self.unregularized, x)
        return [point]

    def membership_residual(self, x: Point) -> float:
        self._check_point(x)
        return max(self.m.residual(x) - self.m.epsilon, 0.0)

    def normal_cone_at(self, x: Point):
        r = self.m.residual(x)
        band = max(MEMBERSHIP_TOL, 1e-6 * self.m.epsilon)
        if r > self.m.epsilon + band:
            raise ValueError("base point is not a member of the set")
        if r < self.m.epsilon - band:
            return ZeroCone(self.dim)
        grad = self.m.residual_gradient(x)
        if grad.norm() <= 1e-14:
            raise NormalConeUnavailableError("zero residual gradient at the boundary")
        return RayCone(grad.data)


def project_regularized_exact(m: RegularizedSet, x: Point,
                              max_iter: int = 100, tol: float = 1e-11) -> Point:
    """Euclidean projection onto a divergence ball via its KKT system.

    Solves ``(y - x) + eta * grad_r(y) = 0`` and ``r(y) = epsilon`` for the
    boundary residual ``r`` with a damped Newton method (initial multiplier
    1, step halving).  Intended as a small-scale reference oracle: ambient
    dimension is capped at ``NEWTON_MAX_DIM`` and the forward map must supply
    a dense Jacobian.  Refuses ``epsilon = 0``, where the multiplier blows up
    because the constraint gradient vanishes on the unregularized set.
    """
    if m.epsilon <= 0:
        raise ValueError("exact projection requires epsilon > 0")
    if m.dim > NEWTON_MAX_DIM:
        raise ValueError(f"ambient dimension {m.dim} exceeds {NEWTON_MAX_DIM}")
    if m.residual(x) <= m.epsilon:
        raise ValueError("x is already a member; the projection is x itself")

    dim = m.dim
    target = x.data

    def kkt(z: np.ndarray, eta: float) -> tuple[np.ndarray, Point]:
        p = Point(z, m.kind)
        grad = m.residual_gradient(p).data
        top = z - target + eta * grad
        bottom = m.residual(p) - m.epsilon
        return np.concatenate([top, [bottom]]), p

    z = target.copy()
    eta = 1.0
    f, p = kkt(z, eta)
    fnorm = np.linalg.norm(f)
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol and eta >= -1e-10:
            return Point(z, m.kind)
        grad = m.residual_gradient(p).data
        hess = m.residual_hessian(p)
        jac = np.zeros((dim + 1, dim + 1))
        jac[:dim, :dim] = np.eye(dim) + eta * hess
        jac[:dim, dim] = grad
        jac[dim, :dim] = grad
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        t = 1.0
        while t >= 2.0 ** -30:
            z_new = z + t * step[:dim]
            eta_new = eta + t * step[dim]
            f_new, p_new = kkt(z_new, eta_new)
            fnorm_new = np.linalg.norm(f_new)
            if fnorm_new <= (1.0 - 1e-4 * t) * fnorm:
                break
            t *= 0.5
        else:
            raise NewtonConvergenceError("line search failed to reduce the KKT residual")
        z, eta, f, p, fnorm = z_new, eta_new, f_new, p_new, fnorm_new
    if np.max(np.abs(f)) <= tol and eta >= -1e-10:
        return Point(z, m.kind)
    raise NewtonConvergenceError(
        f"KKT residual {np.max(np.abs(f)):.3e} after {max_iter} iterations"
    )


def project_regularized_approx(m: RegularizedSet, unregularized: SetOracle,
                               x: Point) -> tuple[Point, float]:
    """Segment-based approximate projection onto a divergence ball.

    Projects ``x`` onto the unregularized set, then returns the first point
    of the connecting segment that enters the ball, together with the
    relaxation ``tau`` used.  Exact for Euclidean balls around affine sets.
    """
    if m.residual(x) <= m.epsilon:
        raise ValueError("x is already a member; the projection is x itself")
    anchor = canonical_point(unregularized.project(x))
    tau, point = bregman_line_boundary(m, x, anchor)
    return point, tau
