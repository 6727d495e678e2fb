"""Compressed function space spanned by the top Markov eigenfunctions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .kernel import MarkovModel

DENSE_LIMIT = 512


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class FunctionBasis:
    """Eigenfunctions of P sampled at the points.

    Attributes:
        U: n x n0 array, column i is phi_i, with U.T @ diag(mu) @ U = I.
        lam: descending eigenvalues of P.
        mu: the stationary measure the basis is orthonormal against.
    """

    U: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def n0(self) -> int:
        return self.U.shape[1]

    def reconstruct(self, coeffs) -> np.ndarray:
        return self.U @ np.asarray(coeffs)

    def project(self, f) -> np.ndarray:
        return project(self, f)

    def multiply(self, f, h) -> np.ndarray:
        return multiply(self, f, h)


def _symmetrised(model: MarkovModel) -> sp.csr_matrix:
    s = np.sqrt(model.mu)
    S = sp.diags(s) @ model.P @ sp.diags(1.0 / s)
    return ((S + S.T) * 0.5).tocsr()


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eigenbasis(model: MarkovModel, n0: int = 50, tol: float = 1e-10, maxiter: int | None = None) -> FunctionBasis:
    """Top-n0 eigenpairs of P via the symmetric similarity transform."""
    n = model.n
    if not 1 <= n0 <= n:
        raise ValueError(f"n0 must lie in [1, {n}], got {n0}")
    S = _symmetrised(model)
    if n <= DENSE_LIMIT or n0 >= n - 1:
        w, V = np.linalg.eigh(S.toarray())
        w, V = w[::-1][:n0], V[:, ::-1][:, :n0]
    else:
        # Shifting by +I makes the spectrum positive so the wanted end is the largest
        # algebraic one and there is no interference from eigenvalues near -1.
        A = S + sp.identity(n, format="csr")
        ncv = min(n, max(2 * n0 + 1, n0 + 32))
        # Fixed start vector so repeated runs give identical bases.
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            w, V = eigsh(A, k=n0, which="LA", tol=tol, ncv=ncv, maxiter=maxiter, v0=v0)
        except ArpackNoConvergence as exc:
            raise EigensolverError(
                f"eigsh did not converge: {len(exc.eigenvalues)} of {n0} eigenpairs found "
                f"(ncv={ncv}, tol={tol})") from exc
        order = np.argsort(w)[::-1]
        w, V = w[order] - 1.0, V[:, order]
    U = V / np.sqrt(model.mu)[:, None]
    U = _fix_signs(U)
    return FunctionBasis(U=U, lam=w, mu=model.mu)


def project(basis: FunctionBasis, f) -> np.ndarray:
    """Coefficients U^T diag(mu) f of a pointwise function (or columns of one)."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != basis.n:
        raise ValueError(f"expected {basis.n} values, got {f.shape[0]}")
    if f.ndim == 1:
        return basis.U.T @ (basis.mu * f)
    return basis.U.T @ (basis.mu[:, None] * f)


def multiply(basis: FunctionBasis, f, h) -> np.ndarray:
    """Product of two functions in coefficient form, re-projected onto the basis."""
    return project(basis, (basis.U @ f) * (basis.U @ h))


def energy(model: MarkovModel, f) -> float:
    """Smoothness <f, P f>_mu / <f, f>_mu, which is 1 for constants."""
    f = np.asarray(f, dtype=float)
    num = np.dot(model.mu * f, model.P @ f)
    den = np.dot(model.mu * f, f)
    return float(num / den)
