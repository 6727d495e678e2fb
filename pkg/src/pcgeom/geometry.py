"""Geodesic distances and curvature."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .carre_du_champ import GammaTensors
from .operators import calculus

FEASIBILITY_TOL = 1e-4


@dataclass
class GeodesicResult:
    """Distance from one source.

    Attributes:
        distance: ambient distance plus the clamped correction U f.
        f: correction coefficients.
        max_constraint: largest Gamma_j(d, d) at the solution.
        converged: False when the solver did not report an optimal solution.
    """

    distance: np.ndarray
    f: np.ndarray
    max_constraint: float
    converged: bool
    status: str


def _constraint_blocks(gt: GammaTensors, r: np.ndarray):
    """Per-point factors with Gamma_j(r + U f) = ||A_j f + a_j||^2.

    Each row j of the transition matrix contributes one row of A_j per
    neighbour k, scaled by sqrt(s_j P_jk); rows are zero-padded to equal length.
    """
    model, U = gt.model, gt.basis.U
    P = model.P.tocsr()
    s = 2.0 / model.rho ** 2
    PU = P @ U
    Pr = P @ r
    n, n0 = U.shape
    width = int(np.diff(P.indptr).max())
    A = np.zeros((n, width, n0))
    a = np.zeros((n, width))
    for j in range(n):
        lo, hi = P.indptr[j], P.indptr[j + 1]
        cols = P.indices[lo:hi]
        w = np.sqrt(s[j] * P.data[lo:hi])
        A[j, : hi - lo] = w[:, None] * (U[cols] - PU[j])
        a[j, : hi - lo] = w * (r[cols] - Pr[j])
    return A, a


def gamma_quadratic(gt: GammaTensors, g: np.ndarray) -> np.ndarray:
    """Pointwise Gamma(g, g) for a sampled function g."""
    model = gt.model
    Pg = model.P @ g
    return 2.0 / model.rho ** 2 * (model.P @ (g * g) - Pg * Pg)


def geodesic_solve(p: int, basis, gt: GammaTensors, solver: str | None = None) -> GeodesicResult:
    """Distance function from point ``p`` by conic optimisation.

    Maximises the mean coefficient f_0 of the correction subject to
    f(p) = 0 and Gamma_j(d, d) <= 1 at every point, where
    d = ||x - x_p|| + U f. The constraints are second-order cones, solved
    with cvxpy (Clarabel by default).
    """
    import cvxpy as cp

    cloud = gt.coords if gt.points is None else gt.points
    U = basis.U
    n, n0 = U.shape
    if not 0 <= p < n:
        raise IndexError(f"source {p} outside [0, {n})")
    r = np.linalg.norm(cloud - cloud[p], axis=1)
    A, a = _constraint_blocks(gt, r)
    width = A.shape[1]
    f = cp.Variable(n0)
    resid = cp.reshape(A.reshape(n * width, n0) @ f + a.ravel(), (n, width), order="C")
    cons = [cp.SOC(np.ones(n), resid, axis=1), U[p] @ f == 0]
    prob = cp.Problem(cp.Maximize(f[0]), cons)
    try:
        prob.solve(solver=solver or cp.CLARABEL)
    except cp.SolverError:
        prob.solve(solver=cp.SCS)
    status = str(prob.status)
    if f.value is None:
        warnings.warn(f"geodesic solver failed ({status}); returning ambient distance", RuntimeWarning)
        coef = np.zeros(n0)
    else:
        coef = np.asarray(f.value)
    d = r + np.maximum(U @ coef, 0.0)
    d[p] = 0.0
    worst = float(gamma_quadratic(gt, r + U @ coef).max())
    converged = status == "optimal" and worst <= 1 + FEASIBILITY_TOL
    if not converged:
        warnings.warn(f"geodesic solve status {status}, max constraint {worst:.6f}", RuntimeWarning)
    return GeodesicResult(d, coef, worst, converged, status)


def geodesic_distance(p: int, basis, gt: GammaTensors) -> np.ndarray:
    return geodesic_solve(p, basis, gt).distance


# --------------------------------------------------------------- curvature
def riemann(X, Y, Z, W, basis, gt: GammaTensors) -> np.ndarray:
    """Pointwise nabla(nabla_Y Z)(X, W) - nabla(nabla_X Z)(Y, W) - nabla(Z)([X, Y], W).

    This is g(R(X, Y) Z, W) with R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y].
    """
    c = calculus(gt)
    t1 = c.tensor02_action(c.nabla(c.covariant(Y, Z)), X, W)
    t2 = c.tensor02_action(c.nabla(c.covariant(X, Z)), Y, W)
    t3 = c.tensor02_action(c.nabla(Z), c.lie_bracket(X, Y), W)
    return t1 - t2 - t3


@dataclass
class Curvature:
    """Sectional curvature with its defining parts.

    ``K`` is NaN where the denominator is below the floor.
    """

    K: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    defined: np.ndarray


def _quotient(num, den, floor_rel=1e-6) -> Curvature:
    floor = floor_rel * np.median(np.abs(den))
    ok = den > floor
    K = np.full(num.shape, np.nan)
    K[ok] = num[ok] / den[ok]
    return Curvature(K, num, den, ok)


def _area2(c, X, Y):
    """Pointwise |X|^2 |Y|^2 - g(X, Y)^2 with g = coefficient functions against Gamma."""
    G = c.gt.gamma_cc
    fx, fy = c.functions(X, 1), c.functions(Y, 1)
    gxx = np.einsum("pa,pab,pb->p", fx, G, fx)
    gyy = np.einsum("pa,pab,pb->p", fy, G, fy)
    gxy = np.einsum("pa,pab,pb->p", fx, G, fy)
    return gxx * gyy - gxy ** 2


def sectional_curvature(X, Y, basis, gt: GammaTensors, floor_rel: float = 1e-6) -> Curvature:
    """K(X, Y) = g(R(X, Y) Y, X) / (|X|^2 |Y|^2 - g(X, Y)^2).

    The numerator uses the index order (X, Y, Y, X), which is positive on the
    round sphere, averaged with its pair swap (Y, X, X, Y) so that K is
    symmetric in X and Y exactly.
    """
    c = calculus(gt)
    return _quotient(_pair_numerator(X, Y, basis, gt), _area2(c, X, Y), floor_rel)


def _pair_numerator(X, Y, basis, gt):
    return 0.5 * (riemann(X, Y, Y, X, basis, gt) + riemann(Y, X, X, Y, basis, gt))


def coordinate_curvature(basis, gt: GammaTensors, floor_rel: float = 1e-6) -> Curvature:
    """Curvature from every pair of coordinate gradients (grad x_a, grad x_b).

    Numerators and denominators are summed over pairs before dividing, so a
    pair that is nearly degenerate at a point contributes little there. On a
    surface every independent pair spans the tangent plane and the result is
    the Gaussian curvature.
    """
    c = calculus(gt)
    num = np.zeros(gt.n)
    den = np.zeros(gt.n)
    for a, b in combinations(range(gt.d), 2):
        Xa, Xb = c.coordinate_field(a), c.coordinate_field(b)
        num += _pair_numerator(Xa, Xb, basis, gt)
        den += _area2(c, Xa, Xb)
    return _quotient(num, den, floor_rel)
