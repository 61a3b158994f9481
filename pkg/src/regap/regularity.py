"""Regularity constants of set intersections.

The constant ``c_bar`` is the largest inner product between unit normals of
the first set and negated unit normals of the second at a common point;
``c_bar < 1`` certifies that the intersection survives small perturbations
and feeds the linear rate predictions as the cosine of the angle between the
sets.  Two estimators are provided: a spectral one for subspaces and a
seeded Monte Carlo lower bound for any pair of sets with analytic cones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space, orth

from .core import Point, SetOracle

SUBSPACE_PRINCIPAL_ANGLE = "subspace_principal_angle"
SAMPLED_CONE = "sampled_cone"
USER_SUPPLIED = "user_supplied"


@dataclass
class RegularityEstimate:
    """Estimated regularity constant with its provenance.

    ``theta_bar = arccos(c_bar)`` is the corresponding angle.  ``n_samples``
    is set by the Monte Carlo estimator only.
    """

    c_bar: float
    theta_bar: float
    method: str
    n_samples: int | None = None

    @property
    def strongly_regular(self) -> bool:
        return self.c_bar < 1.0

    @classmethod
    def from_c_bar(cls, c_bar: float, method: str = USER_SUPPLIED,
                   n_samples: int | None = None) -> "RegularityEstimate":
        c = float(min(max(c_bar, 0.0), 1.0))
        return cls(c_bar=c, theta_bar=math.acos(c), method=method, n_samples=n_samples)


def cbar_subspaces(basis_u, basis_v, common_tol: float = 1e-8) -> RegularityEstimate:
    """Angle constant for two linear subspaces given by spanning columns.

    Computes the singular values of the cross-Gram matrix of orthonormal
    bases of the two normal spaces (orthogonal complements) and reports the
    largest one after discarding directions normal to both subspaces
    (singular values within ``common_tol`` of 1).  Discarding shared normals
    yields the quantity that governs the convergence rate of alternating
    projections between the subspaces: identical subspaces or a subspace
    contained in the other come out as 0, consistent with the one-step
    convergence of the iteration in those cases.  Use :func:`cbar_sampled`
    for the raw definition, which reports 1 whenever opposing normals exist.
    """
    u = np.atleast_2d(np.asarray(basis_u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(basis_v, dtype=np.float64))
    if u.shape[0] != v.shape[0]:
        raise ValueError("bases must live in the same ambient space")
    for name, mat in (("first", u), ("second", v)):
        if np.linalg.matrix_rank(mat) < mat.shape[1]:
            raise ValueError(f"{name} basis is degenerate (dependent or zero columns)")
    nu = null_space(orth(u).T)
    nv = null_space(orth(v).T)
    if nu.shape[1] == 0 or nv.shape[1] == 0:
        return RegularityEstimate.from_c_bar(0.0, SUBSPACE_PRINCIPAL_ANGLE)
    sigma = np.linalg.svd(nu.T @ nv, compute_uv=False)
    sigma = sigma[sigma < 1.0 - common_tol]
    c_bar = float(sigma[0]) if sigma.size else 0.0
    return RegularityEstimate.from_c_bar(c_bar, SUBSPACE_PRINCIPAL_ANGLE)


def cbar_sampled(setC: SetOracle, setM: SetOracle, xbar: Point,
                 n_samples: int = 10_000, seed: int = 0) -> RegularityEstimate:
    """Monte Carlo lower bound on the regularity constant at ``xbar``.

    Draws unit directions from the normal cone of each set at ``xbar``
    (uniformly on the unit sphere of each cone's span, restricted to the
    cone) and reports the largest inner product between a first-set normal
    and a negated second-set normal.  Interior points have normal cone {0}
    and give exactly 0.  The estimate never exceeds the true constant, and
    it reaches 1 whenever opposing normals exist, flagging intersections
    that can vanish under perturbation.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    cone_c = setC.normal_cone_at(xbar)
    cone_m = setM.normal_cone_at(xbar)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    probe_c = cone_c.sample_unit(rng)
    probe_m = cone_m.sample_unit(rng)
    if probe_c is None or probe_m is None:
        return RegularityEstimate.from_c_bar(0.0, SAMPLED_CONE, n_samples=n_samples)
    best = 0.0
    batch = 4096
    drawn = 0
    while drawn < n_samples:
        take = min(batch, n_samples - drawn)
        us = np.stack([cone_c.sample_unit(rng) for _ in range(take)])
        vs = np.stack([-cone_m.sample_unit(rng) for _ in range(take)])
        best = max(best, float(np.max(np.einsum("ij,ij->i", us, vs))))
        drawn += take
    return RegularityEstimate.from_c_bar(best, SAMPLED_CONE, n_samples=n_samples)
