"""Linear evolution equations in the compressed function space.

All states are coefficient vectors against the eigenbasis, so the L2(mu)
inner product is the Euclidean one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .carre_du_champ import GammaTensors
from .operators import calculus

EIG_CONDITION_LIMIT = 1e8


@dataclass
class EvolutionProblem:
    """u' = T u (order 1) or u'' = T u + S u' (order 2).

    Attributes:
        order: 1 or 2.
        T: n0 x n0 generator.
        f0: initial state.
        times: ascending output instants (the clock starts at 0).
        S: damping matrix, order 2 only.
        h0: initial velocity, order 2 only.
    """

    order: int
    T: np.ndarray
    f0: np.ndarray
    times: np.ndarray
    S: np.ndarray | None = None
    h0: np.ndarray | None = None

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.f0 = np.asarray(self.f0, dtype=float)
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        n = self.T.shape[0]
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.T.shape != (n, n) or self.f0.shape[0] != n:
            raise ValueError("generator and initial state shapes disagree")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be ascending")
        if self.order == 2:
            self.S = np.zeros((n, n)) if self.S is None else np.asarray(self.S, dtype=float)
            self.h0 = np.zeros_like(self.f0) if self.h0 is None else np.asarray(self.h0, dtype=float)
            if self.S.shape != (n, n) or self.h0.shape != self.f0.shape:
                raise ValueError("damping or initial velocity shape disagrees")


@dataclass
class Trajectory:
    """States at each requested time; ``states[t]`` has the shape of f0."""

    times: np.ndarray
    states: np.ndarray
    method: str
    velocities: np.ndarray | None = None
    error_estimate: float = 0.0
    info: dict = field(default_factory=dict)


def _eig_path(T, f0, times):
    """exp(tT) f0 by diagonalisation, or None when ill conditioned."""
    if np.allclose(T, T.T, rtol=0, atol=1e-12 * max(np.abs(T).max(), 1.0)):
        w, V = np.linalg.eigh(0.5 * (T + T.T))
        c = V.T @ f0
        E = np.exp(np.multiply.outer(times, w))
        return np.einsum("ij,tj...->ti...", V, E.reshape(E.shape + (1,) * (c.ndim - 1)) * c), 1.0
    w, V = np.linalg.eig(T)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond >= EIG_CONDITION_LIMIT:
        return None, cond
    c = np.linalg.solve(V, f0.astype(complex))
    E = np.exp(np.multiply.outer(times, w))
    out = np.einsum("ij,tj...->ti...", V, E.reshape(E.shape + (1,) * (c.ndim - 1)) * c)
    return out.real, cond


def _rk4(T, f0, times, dt):
    out = np.empty((len(times),) + f0.shape)
    u, t = f0.copy(), 0.0
    for k, target in enumerate(times):
        span = target - t
        steps = int(np.ceil(span / dt - 1e-12)) if span > 0 else 0
        if steps:
            h = span / steps
            for _ in range(steps):
                k1 = T @ u
                k2 = T @ (u + 0.5 * h * k1)
                k3 = T @ (u + 0.5 * h * k2)
                k4 = T @ (u + h * k3)
                u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = target
        out[k] = u
    return out


def _rk4_path(T, f0, times, rtol=1e-8, max_halvings=8):
    """Fixed-step RK4 at min-spacing/20 with Richardson step halving."""
    grid = np.concatenate([[0.0], times])
    gaps = np.diff(grid)
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return np.repeat(f0[None], len(times), axis=0), 0.0
    dt = gaps.min() / 20.0
    coarse = _rk4(T, f0, times, dt)
    err = np.inf
    for _ in range(max_halvings):
        fine = _rk4(T, f0, times, dt / 2)
        # RK4 error ratio between steps dt and dt/2 is 16.
        err = np.abs(fine - coarse).max() / 15.0
        scale = max(np.abs(fine).max(), 1e-300)
        if err <= rtol * scale:
            return fine, err / scale
        dt, coarse = dt / 2, fine
    warnings.warn(f"RK4 Richardson estimate {err / scale:.2e} above tolerance", RuntimeWarning)
    return coarse, err / scale


def solve_first_order(prob: EvolutionProblem, method: str = "auto") -> Trajectory:
    """u_t = exp(tT) f0 at every requested time.

    Args:
        method: "auto" diagonalises when the eigenvector matrix has condition
            number below 1e8 and otherwise falls back to RK4; "eig" and "rk4"
            force a path ("eig" still falls back if ill conditioned).
    """
    if prob.order != 1:
        raise ValueError("solve_first_order needs an order-1 problem")
    T, f0, times = prob.T, prob.f0, prob.times
    if method not in ("auto", "eig", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    if method != "rk4":
        states, cond = _eig_path(T, f0, times)
        if states is not None:
            return Trajectory(times, states, "eig", info={"eigvec_condition": cond})
    states, err = _rk4_path(T, f0, times)
    return Trajectory(times, states, "rk4", error_estimate=err)


def companion(T, S) -> np.ndarray:
    n = T.shape[0]
    return np.block([[np.zeros((n, n)), np.eye(n)], [T, S]])


def solve_second_order(prob: EvolutionProblem, method: str = "auto") -> Trajectory:
    """u'' = T u + S u' via the first-order companion system on (u, u')."""
    if prob.order != 2:
        raise ValueError("solve_second_order needs an order-2 problem")
    n = prob.T.shape[0]
    first = EvolutionProblem(1, companion(prob.T, prob.S),
                             np.concatenate([prob.f0, prob.h0]), prob.times)
    tr = solve_first_order(first, method)
    return Trajectory(tr.times, tr.states[:, :n], tr.method, velocities=tr.states[:, n:],
                      error_estimate=tr.error_estimate, info=tr.info)


def laplacian(gt: GammaTensors) -> np.ndarray:
    """Strong Laplacian on functions (the function Gram is the identity)."""
    L, _ = calculus(gt).hodge_laplacian(0)
    return L


def heat(gt: GammaTensors, f0, times, method: str = "auto") -> Trajectory:
    return solve_first_order(EvolutionProblem(1, -laplacian(gt), f0, times), method)


def wave(gt: GammaTensors, f0, times, h0=None, gamma: float = 0.0,
         method: str = "auto") -> Trajectory:
    """Wave equation u'' = -Laplacian u - gamma u'."""
    n0 = gt.basis.n0
    prob = EvolutionProblem(2, -laplacian(gt), f0, times, S=-gamma * np.eye(n0), h0=h0)
    return solve_second_order(prob, method)


def wave_energy(gt: GammaTensors, tr: Trajectory) -> np.ndarray:
    """<u', u'> + <u, Laplacian u> at each sample."""
    L = laplacian(gt)
    u, v = tr.states, tr.velocities
    return np.einsum("ti,ti->t", v, v) + np.einsum("ti,ij,tj->t", u, L, u)


def vf_flow(X, f0, times, basis, gt: GammaTensors, method: str = "rk4") -> Trajectory:
    """Transport f0 along X: u' = X(u)."""
    T = calculus(gt).vf_operator(X)
    return solve_first_order(EvolutionProblem(1, T, f0, times), method)


def integral_curves(X, times, basis, gt: GammaTensors, method: str = "rk4") -> np.ndarray:
    """Positions obtained by flowing every coordinate function along X.

    Returns:
        (len(times), n, d) reconstructed coordinates U x_t.
    """
    coords = basis.project(gt.coords)  # (n0, d)
    T = calculus(gt).vf_operator(X)
    tr = solve_first_order(EvolutionProblem(1, T, coords, times), method)
    return np.einsum("pi,tid->tpd", basis.U, tr.states)
