"""Differential operators assembled from weak formulations.

Vector fields and 1-forms share one coefficient layout: ``X[i * d + j]`` is
the coefficient of phi_i grad x_j (raising and lowering indices is the
identity on coefficients). Functions entering the gradient, divergence and
Laplacian on 0-forms use all n0 basis functions; every other space uses the
first n1.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .carre_du_champ import (GammaTensors, KForm, Tensor02, compound, gram, gram_2tensor,
                             kform_metric, multi_indices, rank_multi_index, sym_embedding,
                             vector_field_arrows)
from .weak_solver import DEFAULT_CONDITION, GramOperator


def integrated_cdc(gt: GammaTensors, F, H, w) -> np.ndarray:
    """sum_p w_p Gamma_p(F_a, H_b) for the columns of F and H.

    Uses the covariance expansion so the (n, a, b) pointwise array is never formed.
    """
    P = gt.model.P
    ws = np.asarray(w) * 2.0 / gt.model.rho ** 2
    PF = np.asarray(P @ F)
    PH = PF if H is F else np.asarray(P @ H)
    v = np.asarray(P.T @ ws)
    out = (F * v[:, None]).T @ H
    if gt.centred:
        out -= (PF * ws[:, None]).T @ PH
    else:
        out += (F * ws[:, None]).T @ H - (F * ws[:, None]).T @ PH - (PF * ws[:, None]).T @ H
    return out


class Calculus:
    """Caches Gram operators and weak matrices for one set of Gamma blocks.

    Args:
        gt: carre du champ blocks.
        condition_target: spectral cutoff ratio for every Gram pseudoinverse.
        tikhonov: if set, use the ridge (G + tikhonov I)^-1 instead.
    """

    def __init__(self, gt: GammaTensors, condition_target: float = DEFAULT_CONDITION,
                 tikhonov: float | None = None):
        self.gt = gt
        self.condition_target = condition_target
        self.tikhonov = tikhonov
        self._cache: dict = {}

    # ------------------------------------------------------------- helpers
    @property
    def n1(self) -> int:
        return self.gt.n1

    @property
    def n0(self) -> int:
        return self.gt.basis.n0

    @property
    def d(self) -> int:
        return self.gt.d

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def _gram_operator(self, G) -> GramOperator:
        return GramOperator(G, condition_target=self.condition_target, tikhonov=self.tikhonov)

    def metric(self, k: int) -> np.ndarray:
        return self._cached(("metric", k), lambda: kform_metric(self.gt, k))

    def gram(self, k: int) -> GramOperator:
        """Gram operator of k-forms. Degree 0 is the n0-function space (identity Gram)."""
        if k == 0:
            return self._cached(("gram", 0), lambda: self._gram_operator(np.eye(self.n0)))
        return self._cached(("gram", k), lambda: self._gram_operator(gram(self.gt, k)))

    def gram02(self, symmetric: bool = False) -> GramOperator:
        return self._cached(("gram02", symmetric),
                            lambda: self._gram_operator(gram_2tensor(self.gt, symmetric)))

    @property
    def Umu(self) -> np.ndarray:
        return self._cached("Umu", lambda: self.gt.U1 * self.gt.mu[:, None])

    def functions(self, coeffs, k: int = 1) -> np.ndarray:
        """Pointwise coefficient functions (n, C(d,k)) of a form or vector field."""
        C = comb(self.d, k)
        return self.gt.U1 @ np.asarray(coeffs).reshape(self.n1, C)

    def project_field(self, F) -> np.ndarray:
        """Coefficients of sum_j F[:, j] grad x_j with each F_j projected onto n1 functions."""
        return (self.Umu.T @ np.asarray(F)).ravel()

    def coordinate_field(self, j: int, f=None) -> np.ndarray:
        """Coefficients of f grad x_j (f defaults to the constant 1)."""
        F = np.zeros((self.gt.n, self.d))
        F[:, j] = 1.0 if f is None else f
        return self.project_field(F)

    def arrows(self, X) -> np.ndarray:
        return vector_field_arrows(self.gt, X)

    def norm(self, a, k: int = 1) -> float:
        a = np.asarray(a)
        return float(np.sqrt(max(a @ self.gram(k).G @ a, 0.0)))

    # ------------------------------------------------------------ gradient
    def gradient_weak(self) -> np.ndarray:
        """(n1 d) x n0 matrix of <phi_i' grad x_j', grad phi_i>."""
        def build():
            W = np.einsum("pa,pji->aji", self.Umu, self.gt.gamma_cb, optimize=True)
            return W.reshape(self.n1 * self.d, self.n0)
        return self._cached("grad_w", build)

    def gradient(self) -> np.ndarray:
        return self._cached("grad", lambda: self.gram(1).solve(self.gradient_weak()))

    def divergence(self) -> np.ndarray:
        """n0 x (n1 d); the negative adjoint of the gradient (G^0 = I)."""
        return self._cached("div", lambda: -self.gradient_weak().T)

    # --------------------------------------------------- exterior calculus
    def d_weak(self, k: int) -> np.ndarray:
        """Weak exterior derivative on k-forms, rows tested against (k+1)-forms."""
        if k == 0:
            return self.gradient_weak()
        if not 0 < k < self.d:
            raise ValueError(f"no exterior derivative from degree {k} in dimension {self.d}")

        def build():
            gt, n1, d = self.gt, self.n1, self.d
            Jk, Jk1 = multi_indices(d, k), multi_indices(d, k + 1)
            gk = self.metric(k)
            cb = gt.gamma_cb[:, :, :n1]
            W = np.zeros((n1, len(Jk1), n1, len(Jk)))
            # Laplace expansion of det[Gamma(x_J'_r, phi_i) | Gamma(x_J'_r, x_J)] down the
            # first column: the k x k minors do not depend on i.
            for A, Jp in enumerate(Jk1):
                for r, jr in enumerate(Jp):
                    L = rank_multi_index(Jp[:r] + Jp[r + 1:], d)
                    sign = -1.0 if r % 2 else 1.0
                    lhs = cb[:, jr, :]
                    for B in range(len(Jk)):
                        w = sign * gk[:, L, B]
                        W[:, A, :, B] += self.Umu.T @ (lhs * w[:, None])
            return W.reshape(n1 * len(Jk1), n1 * len(Jk))
        return self._cached(("d_w", k), build)

    def exterior_derivative(self, k: int) -> np.ndarray:
        return self._cached(("d", k), lambda: self.gram(k + 1).solve(self.d_weak(k)))

    def codifferential(self, k: int) -> np.ndarray:
        """Strong codifferential from k-forms to (k-1)-forms."""
        if k < 1:
            raise ValueError("codifferential needs degree >= 1")
        return self._cached(("delta", k), lambda: self.gram(k - 1).solve(self.d_weak(k - 1).T))

    def curl(self) -> np.ndarray:
        """d = 3 only: 1-forms to vector fields via d^1 and the Hodge dual on 2-forms."""
        if self.d != 3:
            raise ValueError("curl is defined for d = 3 only")
        # dx0^dx1 -> dx2, dx0^dx2 -> -dx1, dx1^dx2 -> dx0
        perm = np.zeros((3, 3))
        perm[2, 0], perm[1, 1], perm[0, 2] = 1.0, -1.0, 1.0
        return np.kron(np.eye(self.n1), perm) @ self.exterior_derivative(1)

    # ------------------------------------------------ directional derivative
    def vf_operator(self, X) -> np.ndarray:
        """n0 x n0 matrix of f -> X(f)."""
        Xf = self.functions(X, 1)
        F = np.einsum("pj,pjt->pt", Xf, self.gt.gamma_cb)
        return (self.gt.basis.U * self.gt.mu[:, None]).T @ F

    # ------------------------------------------------------ Hodge Laplacian
    def up_weak(self, k: int, mode: str = "direct") -> np.ndarray:
        """<d alpha, d beta> on the k-form spanning set.

        ``direct`` evaluates the (k+1) x (k+1) determinant metric of
        d(phi_i dx_J) = dphi_i ^ dx_J exactly; ``projected`` routes through the
        strong exterior derivative, d_w^T G^+ d_w.
        """
        if mode == "projected":
            if k >= self.d:
                return np.zeros((self._dim(k),) * 2)
            dw = self.d_weak(k)
            return self._cached(("up_p", k), lambda: _sym(dw.T @ self.gram(k + 1).pinv() @ dw))
        if mode != "direct":
            raise ValueError(f"unknown mode {mode!r}")
        return self._cached(("up", k), lambda: self._up_direct(k))

    def _dim(self, k: int) -> int:
        return self.n0 if k == 0 else self.n1 * comb(self.d, k)

    def _up_direct(self, k: int) -> np.ndarray:
        gt, d = self.gt, self.d
        if k == 0:
            return _sym(integrated_cdc(gt, gt.basis.U, gt.basis.U, gt.mu))
        if k >= d:
            return np.zeros((self._dim(k),) * 2)
        n1 = self.n1
        U1 = gt.U1
        Js = multi_indices(d, k)
        C = len(Js)
        gk = self.metric(k)
        gk1 = self.metric(k - 1)
        cb = gt.gamma_cb[:, :, :n1]
        out = np.zeros((n1, C, n1, C))
        for A, Jp in enumerate(Js):
            for B in range(A, C):
                J = Js[B]
                # det [[G(phi', phi), G(phi', x_J)], [G(x_J', phi), G(x_J', x_J)]] by
                # cofactor expansion: det(D) G(phi', phi) - b adj(D) c.
                block = integrated_cdc(gt, U1, U1, gt.mu * gk[:, A, B])
                for r in range(k):
                    Lr = rank_multi_index(Jp[:r] + Jp[r + 1:], d)
                    for s in range(k):
                        Ls = rank_multi_index(J[:s] + J[s + 1:], d)
                        sign = -1.0 if (r + s) % 2 else 1.0
                        w = sign * gt.mu * gk1[:, Lr, Ls]
                        block -= (cb[:, J[s], :] * w[:, None]).T @ cb[:, Jp[r], :]
                out[:, A, :, B] = block
                if B != A:
                    out[:, B, :, A] = block.T
        return _sym(out.reshape(n1 * C, n1 * C))

    def down_weak(self, k: int) -> np.ndarray:
        if k == 0:
            return np.zeros((self.n0, self.n0))

        def build():
            dw = self.d_weak(k - 1)
            return _sym(dw @ self.gram(k - 1).pinv() @ dw.T)
        return self._cached(("down", k), build)

    def hodge_laplacian(self, k: int, up: str = "direct") -> tuple[np.ndarray, GramOperator]:
        """(weak Hodge Laplacian, Gram operator) on k-forms."""
        if not 0 <= k <= self.d:
            raise ValueError(f"degree {k} outside [0, {self.d}]")
        L = self.down_weak(k) + self.up_weak(k, up)
        return _sym(L), self.gram(k)

    # ------------------------------------------------- Hodge decomposition
    def hodge_decomposition(self, alpha, k: int) -> "HodgeParts":
        """Split a k-form into exact, coexact and harmonic parts.

        The exact potential solves Up_{k-1} beta = d_{k-1}^T alpha, with Up taken
        in its projected form so the solve is an exact least-squares fit. The coexact
        part is fitted to the remainder within the part of im(codifferential)
        that is G-orthogonal to the exact forms; with an exact cochain complex
        this is the plain Down_{k+1} solve.
        """
        a = np.asarray(alpha, dtype=float).ravel()
        G = self.gram(k)
        Gm = G.G
        if k >= 1:
            dw = self.d_weak(k - 1)
            up = self._gram_operator(self.up_weak(k - 1, "projected"))
            beta = up.pinv() @ (dw.T @ a)
            A = self.exterior_derivative(k - 1)
            exact = A @ beta
        else:
            beta, A, exact = None, None, np.zeros_like(a)
        resid = a - exact
        if k + 1 <= self.d:
            Bm = self.codifferential(k + 1)
            if A is not None:
                AtGA = self._gram_operator(_sym(A.T @ Gm @ A))
                Bm = Bm - A @ (AtGA.pinv() @ (A.T @ Gm @ Bm))
            normal = self._gram_operator(_sym(Bm.T @ Gm @ Bm))
            delta = normal.pinv() @ (Bm.T @ Gm @ resid)
            coexact = Bm @ delta
        else:
            delta, coexact = None, np.zeros_like(a)
        harmonic = resid - coexact
        return HodgeParts(exact_potential=beta, exact=exact, coexact_potential=delta,
                          coexact=coexact, harmonic=harmonic)

    # ---------------------------------------------------------- Lie bracket
    def lie_bracket(self, X, Y) -> np.ndarray:
        """[X, Y] evaluated as X(Y(x_j)) - Y(X(x_j)) and tested against phi_i' grad x_j'."""
        gt = self.gt
        Xf, Yf = self.functions(X), self.functions(Y)
        Xx = np.einsum("pa,pab->pb", Xf, gt.gamma_cc)
        Yx = np.einsum("pa,pab->pb", Yf, gt.gamma_cc)
        XY = np.einsum("pa,pab->pb", Xf, gt.cdc(gt.coords, Yx))
        YX = np.einsum("pa,pab->pb", Yf, gt.cdc(gt.coords, Xx))
        weak = (self.Umu.T @ (XY - YX)).ravel()
        return self.gram(1).solve(weak)

    # ------------------------------------------------------------- Hessian
    def hessian_weak(self, symmetric: bool = True) -> np.ndarray:
        def build():
            gt = self.gt
            ccb = gt.gamma_c_cb
            bcc = gt.gamma_b_cc
            T = 0.5 * (ccb + ccb.transpose(0, 2, 1, 3) - bcc.transpose(0, 2, 3, 1))
            W = np.einsum("pk,pabi->kabi", self.Umu, T, optimize=True)
            W = W.reshape(self.n1, self.d * self.d, self.n0)
            if symmetric:
                W = np.einsum("as,kai->ksi", sym_embedding(self.d), W)
            return W.reshape(-1, self.n0)
        return self._cached(("hess_w", symmetric), build)

    def hessian(self, symmetric: bool = True) -> np.ndarray:
        """Strong Hessian, n0 functions to (symmetric) 2-tensor coefficients."""
        return self._cached(("hess", symmetric),
                            lambda: self.gram02(symmetric).solve(self.hessian_weak(symmetric)))

    # ----------------------------------------------------------- 2-tensors
    def _tensor_functions(self, a) -> np.ndarray:
        """(n, d, d) pointwise coefficient matrices of a (0,2)-tensor."""
        t = a if isinstance(a, Tensor02) else Tensor02(np.asarray(a))
        full = t.full(self.d).reshape(self.n1, self.d * self.d)
        return (self.gt.U1 @ full).reshape(-1, self.d, self.d)

    def tensor02_action(self, a, X, Y) -> np.ndarray:
        """Pointwise function a(X, Y)."""
        A = self._tensor_functions(a)
        return np.einsum("pa,pab,pb->p", self.arrows(X), A, self.arrows(Y))

    def tensor02_operator(self, a) -> np.ndarray:
        """Strong (n1 d) x (n1 d) operator X -> a(X, .)."""
        return self.gram(1).solve(self.tensor02_operator_weak(a))

    def tensor02_operator_weak(self, a) -> np.ndarray:
        gt, n1, d = self.gt, self.n1, self.d
        A = self._tensor_functions(a)
        M = np.einsum("pta,pab,pbs->pts", gt.gamma_cc, A, gt.gamma_cc)  # [p, t2, t1]
        W = np.zeros((n1, d, n1, d))
        for t1 in range(d):
            for t2 in range(d):
                W[:, t1, :, t2] = self.Umu.T @ (gt.U1 * M[:, t2, t1][:, None])
        return W.reshape(n1 * d, n1 * d)

    # -------------------------------------------------------- Levi-Civita
    def levi_civita_weak(self) -> np.ndarray:
        """(n1 d^2) x (n1 d) weak matrix of Y -> grad Y."""
        def build():
            gt, n1, d = self.gt, self.n1, self.d
            cc, ccc = gt.gamma_cc, gt.gamma_c_cc
            cb = gt.gamma_cb[:, :, :n1]
            H = 0.5 * (ccc + ccc.transpose(0, 2, 1, 3) - ccc.transpose(0, 2, 3, 1))
            # H[p, a, b, j] = Hess(x_j)(grad x_a, grad x_b)
            W = np.zeros((n1, d, d, n1, d))
            for a in range(d):
                for b in range(d):
                    for j in range(d):
                        rhs = cb[:, a, :] * cc[:, b, j][:, None] + gt.U1 * H[:, a, b, j][:, None]
                        W[:, a, b, :, j] = self.Umu.T @ rhs
            return W.reshape(n1 * d * d, n1 * d)
        return self._cached("lc_w", build)

    def levi_civita(self) -> np.ndarray:
        """Strong matrix Y -> grad Y into general (0,2)-tensor coefficients."""
        return self._cached("lc", lambda: self.gram02(False).solve(self.levi_civita_weak()))

    def nabla(self, Y) -> Tensor02:
        return Tensor02(self.levi_civita() @ np.asarray(Y))

    def covariant(self, X, Y) -> np.ndarray:
        """nabla_X Y."""
        return self.tensor02_operator(self.nabla(Y)) @ np.asarray(X)

    # ----------------------------------------------------------- spectra
    def harmonic_spectrum(self, k: int, m: int, up: str = "direct"):
        L, G = self.hodge_laplacian(k, up)
        V = G.basis
        lam = G.eigvals[G.retained]
        T = V / np.sqrt(lam)
        A = _sym(T.T @ L @ T)
        w, Y = np.linalg.eigh(A)
        m = min(m, len(w))
        return w[:m], T @ Y[:, :m]


@dataclass(frozen=True)
class HodgeParts:
    exact_potential: np.ndarray | None
    exact: np.ndarray
    coexact_potential: np.ndarray | None
    coexact: np.ndarray
    harmonic: np.ndarray


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


# ---------------------------------------------------------------------------
# Functional interface over a shared cache.

def calculus(gt: GammaTensors) -> Calculus:
    """Shared default-settings Calculus for ``gt``."""
    cache = getattr(gt, "_calculus", None)
    if cache is None:
        cache = Calculus(gt)
        gt._calculus = cache
    return cache


def gradient(basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).gradient()


def divergence(basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).divergence()


def exterior_derivative(basis, gt: GammaTensors, k: int) -> np.ndarray:
    return calculus(gt).exterior_derivative(k)


def codifferential(basis, gt: GammaTensors, k: int) -> np.ndarray:
    return calculus(gt).codifferential(k)


def vf_operator(X, basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).vf_operator(X)


def hodge_laplacian(basis, gt: GammaTensors, k: int):
    return calculus(gt).hodge_laplacian(k)


def hodge_decomposition(a: KForm, basis, gt: GammaTensors) -> HodgeParts:
    return calculus(gt).hodge_decomposition(a.coeffs, a.degree)


def lie_bracket(X, Y, basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).lie_bracket(X, Y)


def hessian(basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).hessian(symmetric=True)


def tensor02_action(a, X, Y, basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).tensor02_action(a, X, Y)


def tensor02_operator(a, basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).tensor02_operator(a)


def levi_civita(X, basis, gt: GammaTensors) -> Tensor02:
    return calculus(gt).nabla(X)


def covariant(X, Y, basis, gt: GammaTensors) -> np.ndarray:
    return calculus(gt).covariant(X, Y)
