"""Harmonic forms, cup products, circular coordinates and Morse analysis."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .carre_du_champ import GammaTensors, KForm, Tensor02, wedge
from .operators import calculus
from .pde import laplacian

GAP_RATIO = 5.0


@dataclass
class HarmonicSpectrum:
    """Lowest Hodge Laplacian eigenpairs in one degree.

    Attributes:
        degree: form degree k.
        eigvals: ascending eigenvalues.
        eigforms: G-orthonormal eigenforms matching ``eigvals``.
        gap_index: number of eigenvalues below the detected spectral gap,
            the Betti number estimate.
    """

    degree: int
    eigvals: np.ndarray
    eigforms: list
    gap_index: int

    @property
    def harmonic(self) -> list:
        return self.eigforms[: self.gap_index]


def gap_index(eigvals, ratio: float = GAP_RATIO) -> int:
    """Largest j with eigval[j] / max(eigval[j-1], eps) >= ratio (1-based j).

    eps = 1e-9 times the largest eigenvalue, so exact zeros do not divide by zero.
    """
    lam = np.maximum(np.asarray(eigvals, dtype=float), 0.0)
    if lam.size < 2:
        return 0
    eps = 1e-9 * max(lam[-1], 1e-300)
    r = lam[1:] / np.maximum(lam[:-1], eps)
    hits = np.nonzero(r >= ratio)[0]
    return int(hits[-1] + 1) if hits.size else 0


def harmonic_forms(basis, gt: GammaTensors, k: int, m: int = 10, ratio: float = GAP_RATIO,
                   up: str = "direct") -> HarmonicSpectrum:
    """Smallest m eigenpairs of Delta^weak a = lambda G a on the retained Gram subspace."""
    c = calculus(gt)
    rank = c.gram(k).rank
    if m > rank:
        raise ValueError(f"m={m} exceeds retained Gram rank {rank}")
    w, V = c.harmonic_spectrum(k, m, up)
    forms = [KForm(k, V[:, i].copy()) for i in range(V.shape[1])]
    return HarmonicSpectrum(k, w, forms, gap_index(w, ratio))


def _unit(c, a: KForm) -> np.ndarray:
    G = c.gram(a.degree).G
    return a.coeffs / np.sqrt(a.coeffs @ G @ a.coeffs)


def cup_product(a: KForm, b: KForm, target: HarmonicSpectrum, basis, gt: GammaTensors):
    """Harmonic part of a ^ b and its size against the target harmonic forms.

    a and b are scaled to unit norm first, the target eigenforms are already
    orthonormal. The correlation is the norm of the projection, which equals
    |<a ^ b, beta>| when the target has one harmonic form.

    Returns:
        (projected KForm, correlation).
    """
    if a.degree + b.degree != target.degree:
        raise ValueError("degrees do not add up to the target degree")
    c = calculus(gt)
    au = KForm(a.degree, _unit(c, a))
    bu = KForm(b.degree, _unit(c, b))
    w = wedge(au, bu, gt).coeffs
    H = target.harmonic or target.eigforms[:1]
    B = np.stack([h.coeffs for h in H], axis=1)
    G = c.gram(target.degree).G
    coef = B.T @ G @ w
    return KForm(target.degree, B @ coef), float(np.linalg.norm(coef))


class NoRotationalMode(ValueError):
    pass


def circular_coordinates(a: KForm, basis, gt: GammaTensors, eps: float = 1.0):
    """Angle-valued function whose rotation follows the 1-form a.

    Uses the complex eigenvector of a^op - eps Laplacian with the smallest
    eigenvalue magnitude among eigenvalues that are not (numerically) real.

    Returns:
        (angles in (-pi, pi], eigenvalue)
    """
    if a.degree != 1:
        raise ValueError("circular coordinates need a 1-form")
    c = calculus(gt)
    div = c.codifferential(1) @ a.coeffs
    # The weak codifferential includes boundary flux, which puts harmonic forms on an
    # annulus near 0.3; non-harmonic eigenforms sit above 1.
    if np.linalg.norm(div) > 0.5 * c.norm(a.coeffs, 1):
        warnings.warn("1-form is far from coclosed; circular coordinates may be unreliable",
                      RuntimeWarning)
    L = c.vf_operator(a.coeffs) - eps * laplacian(gt)
    w, V = np.linalg.eig(L)
    cand = np.nonzero(np.abs(w.imag) > 1e-6 * np.abs(w))[0]
    if cand.size == 0:
        raise NoRotationalMode("no rotational mode")
    i = cand[np.argmin(np.abs(w[cand]))]
    z = basis.U @ V[:, i]
    return np.angle(z), complex(w[i])


def circular_correlation(a, b) -> float:
    """Agreement of two angle samples up to rotation and reflection.

    max(|mean exp(i(a - b))|, |mean exp(i(a + b))|): 1 when a = +-b + c and
    near 0 for unrelated angles. Mean-direction based coefficients are
    undefined for uniformly spread angles, which is the usual case here.
    """
    a, b = np.asarray(a), np.asarray(b)
    return float(max(abs(np.mean(np.exp(1j * (a - b)))), abs(np.mean(np.exp(1j * (a + b))))))


# ------------------------------------------------------------------- Morse
@dataclass
class CriticalPoint:
    index_in_cloud: int
    morse_index: int
    hessian_eigvals: np.ndarray
    degenerate: bool = False


def _gradient_norm(c, f) -> np.ndarray:
    X = c.gradient() @ f
    F = c.functions(X, 1)
    return np.sqrt(np.maximum(np.einsum("pa,pab,pb->p", F, c.gt.gamma_cc, F), 0.0))


def critical_candidates(f, basis, gt: GammaTensors, percentile: float = 5.0) -> np.ndarray:
    """Local maxima of exp(-|grad f|) over the kernel graph, among the flattest points."""
    c = calculus(gt)
    g = _gradient_norm(c, f)
    P = gt.model.P.tocsr()
    thresh = np.percentile(g, percentile)
    out = []
    for p in np.nonzero(g <= thresh)[0]:
        nb = P.indices[P.indptr[p]:P.indptr[p + 1]]
        if np.all(g[p] <= g[nb]):
            out.append(p)
    return np.asarray(out, dtype=int)


def pointwise_hessian(f, basis, gt: GammaTensors) -> np.ndarray:
    """(n, d, d) ambient Hessian Gamma_p A_p Gamma_p for the visualisation."""
    c = calculus(gt)
    H = Tensor02(c.hessian(symmetric=True) @ f, symmetric=True)
    A = c._tensor_functions(H)
    G = gt.gamma_cc
    return np.einsum("pab,pbc,pcd->pad", G, A, G)


def morse_analysis(f, basis, gt: GammaTensors, percentile: float = 5.0,
                   rank_tol: float = 1e-2, eig_tol: float = 1e-2) -> list[CriticalPoint]:
    """Critical points of f with Morse indices.

    At each candidate the Hessian is restricted to the numerical range of the
    pointwise metric (rank at relative threshold ``rank_tol``) and solved as
    the generalized problem H v = lambda Gamma v.
    """
    f = np.asarray(f, dtype=float)
    H = pointwise_hessian(f, basis, gt)
    out = []
    for p in critical_candidates(f, basis, gt, percentile):
        lam, V = np.linalg.eigh(gt.gamma_cc[p])
        lam, V = lam[::-1], V[:, ::-1]
        D = int(np.sum(lam > rank_tol * lam[0]))
        L, W = lam[:D], V[:, :D]
        Ai = W.T @ H[p] @ W / np.sqrt(np.outer(L, L))
        ev = np.linalg.eigvalsh(0.5 * (Ai + Ai.T))
        tol = eig_tol * np.abs(ev).max()
        degenerate = bool(np.any(np.abs(ev) < tol))
        out.append(CriticalPoint(int(p), int(np.sum(ev < -tol)), ev, degenerate))
    return out


def euler_characteristic(points: list[CriticalPoint]) -> int:
    return sum((-1) ** cp.morse_index for cp in points if not cp.degenerate)
