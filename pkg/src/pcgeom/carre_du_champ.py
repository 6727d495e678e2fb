"""Carre du champ estimates, pointwise metrics and Gram matrices.

Functions on the cloud are length-n arrays. Coefficient vectors for forms and
tensors are flattened with the basis-function index outermost, so a k-form
with n1 functions in dimension d has index ``i * C(d, k) + J`` where J ranks
the multi-index among the lexicographically ordered increasing tuples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np

from .function_space import FunctionBasis
from .kernel import MarkovModel, PointCloud


# ---------------------------------------------------------------- multi-indices

def multi_indices(d: int, k: int) -> list[tuple[int, ...]]:
    """Strictly increasing k-tuples from range(d) in lexicographic order."""
    return list(combinations(range(d), k))


def rank_multi_index(J, d: int) -> int:
    """Lexicographic rank of an increasing tuple (combinatorial number system)."""
    k = len(J)
    r = 0
    prev = -1
    for pos, j in enumerate(J):
        for v in range(prev + 1, j):
            r += comb(d - 1 - v, k - 1 - pos)
        prev = j
    return r


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 when an entry repeats."""
    seq = list(seq)
    if len(set(seq)) < len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def sym_pairs(d: int) -> list[tuple[int, int]]:
    """Index pairs j1 <= j2 used by symmetric 2-tensors."""
    return [(a, b) for a in range(d) for b in range(a, d)]


def sym_embedding(d: int) -> np.ndarray:
    """d^2 x d(d+1)/2 matrix placing a symmetric coefficient at (a,b) and (b,a)."""
    pairs = sym_pairs(d)
    E = np.zeros((d * d, len(pairs)))
    for s, (a, b) in enumerate(pairs):
        E[a * d + b, s] = 1.0
        E[b * d + a, s] = 1.0
    return E


# ------------------------------------------------------------------ data types

@dataclass(frozen=True)
class KForm:
    """A differential k-form given by its flattened coefficients."""

    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    def __add__(self, other):
        return KForm(self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return KForm(self.degree, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return KForm(self.degree, self.coeffs * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Tensor02:
    """A (0,2)-tensor, either general (n1*d*d coefficients) or symmetric."""

    coeffs: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    def full(self, d: int) -> np.ndarray:
        """Coefficients in the general (i, j1, j2) layout."""
        if not self.symmetric:
            return self.coeffs
        s = d * (d + 1) // 2
        c = self.coeffs.reshape(-1, s)
        return (c @ sym_embedding(d).T).ravel()


# ------------------------------------------------------------- carre du champ

def cdc_scale(model: MarkovModel) -> np.ndarray:
    # A kernel exp(-r^2 / rho^2) has per-axis variance rho^2 / 2, so this factor
    # makes Gamma(f, h) tend to grad f . grad h.
    return 2.0 / model.rho ** 2


def cdc_pair(model: MarkovModel, f, h, centred: bool = True) -> np.ndarray:
    """Pointwise carre du champ Gamma(f, h).

    ``f`` and ``h`` may be length-n vectors or n x a and n x b arrays, in which
    case the result has shape (n, a, b). The centred estimator is the
    covariance of f and h under the transition law P_i; the uncentred one uses
    increments f_j - f_i instead.
    """
    P = model.P
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    vec = f.ndim == 1 and h.ndim == 1
    F = f[:, None] if f.ndim == 1 else f
    H = h[:, None] if h.ndim == 1 else h
    # Both estimators are shift invariant; removing column means cuts cancellation
    # and makes Gamma(f, const) exactly zero.
    F = F - F.mean(axis=0)
    H = H - H.mean(axis=0)
    n, a = F.shape
    b = H.shape[1]
    prod = (F[:, :, None] * H[:, None, :]).reshape(n, a * b)
    Pfh = np.asarray(P @ prod).reshape(n, a, b)
    PF = np.asarray(P @ F)
    PH = np.asarray(P @ H)
    if centred:
        out = Pfh - PF[:, :, None] * PH[:, None, :]
    else:
        out = (Pfh - F[:, :, None] * PH[:, None, :] - PF[:, :, None] * H[:, None, :]
               + F[:, :, None] * H[:, None, :])
    out *= cdc_scale(model)[:, None, None]
    return out[:, 0, 0] if vec else out


def smoothed_coordinates(model: MarkovModel, points) -> np.ndarray:
    return np.asarray(model.P @ np.asarray(points, dtype=float))


def projected_coordinates(basis: FunctionBasis, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return basis.U @ (basis.U.T @ (basis.mu[:, None] * pts))


@dataclass
class GammaTensors:
    """Carre du champ blocks over coordinates and basis functions.

    ``gamma_cc[p, a, b] = Gamma_p(x_a, x_b)`` and
    ``gamma_cb[p, j, i] = Gamma_p(x_j, phi_i)`` for all n0 basis functions.
    Blocks involving basis-basis pairs or nested Gamma are built on first use.
    ``points`` keeps the raw cloud when ``coords`` has been smoothed.
    """

    model: MarkovModel
    basis: FunctionBasis
    coords: np.ndarray
    n1: int
    centred: bool = True
    points: np.ndarray | None = None
    gamma_cc: np.ndarray = field(init=False, repr=False)
    gamma_cb: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n1 > self.basis.n0:
            raise ValueError(f"n1={self.n1} exceeds n0={self.basis.n0}")
        X = self.coords
        self.gamma_cc = self.cdc(X, X)
        self.gamma_cc = 0.5 * (self.gamma_cc + self.gamma_cc.transpose(0, 2, 1))
        self.gamma_cb = self.cdc(X, self.basis.U)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def U1(self) -> np.ndarray:
        return self.basis.U[:, : self.n1]

    @property
    def mu(self) -> np.ndarray:
        return self.basis.mu

    def cdc(self, f, h) -> np.ndarray:
        return cdc_pair(self.model, f, h, centred=self.centred)

    @cached_property
    def gamma_bb(self) -> np.ndarray:
        """(n, n1, n1): Gamma_p(phi_i, phi_j)."""
        return self.cdc(self.U1, self.U1)

    @cached_property
    def gamma_c_cb(self) -> np.ndarray:
        """(n, d, d, n0): Gamma_p(x_a, Gamma(x_b, phi_i))."""
        n, d, n0 = self.gamma_cb.shape
        inner = self.gamma_cb.reshape(n, d * n0)
        return self.cdc(self.coords, inner).reshape(n, d, d, n0)

    @cached_property
    def gamma_b_cc(self) -> np.ndarray:
        """(n, n0, d, d): Gamma_p(phi_i, Gamma(x_a, x_b))."""
        n, d = self.n, self.d
        inner = self.gamma_cc.reshape(n, d * d)
        return self.cdc(self.basis.U, inner).reshape(n, -1, d, d)

    @cached_property
    def gamma_c_cc(self) -> np.ndarray:
        """(n, d, d, d): Gamma_p(x_c, Gamma(x_a, x_b)), indexed [p, c, a, b]."""
        n, d = self.n, self.d
        inner = self.gamma_cc.reshape(n, d * d)
        return self.cdc(self.coords, inner).reshape(n, d, d, d)


def gamma_blocks(model: MarkovModel, basis: FunctionBasis, cloud, n1: int | None = None,
                 coords: str = "raw", centred: bool = True) -> GammaTensors:
    """Build the carre du champ blocks.

    Args:
        coords: "raw" ambient coordinates, "smooth" for P @ x, or "projected"
            for the L2(mu) projection of x onto the basis.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if coords == "raw":
        X = pts
    elif coords == "smooth":
        X = smoothed_coordinates(model, pts)
    elif coords == "projected":
        X = projected_coordinates(basis, pts)
    else:
        raise ValueError(f"unknown coordinate option {coords!r}")
    n1 = basis.n0 if n1 is None else n1
    return GammaTensors(model=model, basis=basis, coords=np.ascontiguousarray(X), n1=n1,
                        centred=centred, points=pts)


# ------------------------------------------------------------ metrics and Grams

def compound(M: np.ndarray, k: int) -> np.ndarray:
    """k-th compound (matrix of k x k minors) of a stack of square matrices."""
    M = np.asarray(M, dtype=float)
    d = M.shape[-1]
    lead = M.shape[:-2]
    if k == 0:
        return np.ones(lead + (1, 1))
    if k == 1:
        return M.copy()
    J = np.array(multi_indices(d, k))
    C = len(J)
    if k <= 3:
        out = np.empty(lead + (C, C))
        for a in range(C):
            rows = M[..., J[a], :]
            sub = rows[..., :, J]               # (..., k, C, k)
            sub = np.moveaxis(sub, -2, -3)      # (..., C, k, k)
            out[..., a, :] = np.linalg.det(sub)
        return out
    # Cauchy-Binet on M = L L^T: C_k(M) = C_k(L) C_k(L)^T, valid for PSD input.
    w, V = np.linalg.eigh(M)
    L = V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
    CL = np.empty(lead + (C, C))
    for a in range(C):
        rows = L[..., J[a], :]
        sub = np.moveaxis(rows[..., :, J], -2, -3)
        CL[..., a, :] = np.linalg.det(sub)
    return CL @ np.swapaxes(CL, -1, -2)


def kform_metric(gt: GammaTensors, k: int) -> np.ndarray:
    """(n, C, C) pointwise metric on k-forms dx_J."""
    if not 0 <= k <= gt.d:
        raise ValueError(f"degree {k} outside [0, {gt.d}]")
    return compound(gt.gamma_cc, k)


def _weighted_gram(U: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (U * w[:, None]).T @ U


def gram_from_metric(U: np.ndarray, mu: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Sum_p U_pi U_pi' g_p(J, J') mu_p, flattened with i outermost."""
    n1 = U.shape[1]
    C = g.shape[1]
    G = np.zeros((n1, C, n1, C))
    for a in range(C):
        for b in range(a, C):
            B = _weighted_gram(U, mu * g[:, a, b])
            G[:, a, :, b] = B
            if b != a:
                G[:, b, :, a] = B.T
    G = G.reshape(n1 * C, n1 * C)
    return 0.5 * (G + G.T)


def gram(gt: GammaTensors, k: int) -> np.ndarray:
    """Gram matrix of the spanning set {phi_i dx_J} for k-forms."""
    return gram_from_metric(gt.U1, gt.mu, kform_metric(gt, k))


def tensor02_metric(gt: GammaTensors) -> np.ndarray:
    """(n, d^2, d^2) pointwise metric Gamma(x_a, x_a') Gamma(x_b, x_b')."""
    g = gt.gamma_cc
    n, d, _ = g.shape
    return np.einsum("pac,pbe->pabce", g, g).reshape(n, d * d, d * d)


def gram_2tensor(gt: GammaTensors, symmetric: bool = False) -> np.ndarray:
    """Gram matrix of {phi_i dx_a (x) dx_b}.

    The symmetric variant is the restriction to symmetric coefficient arrays,
    i.e. E^T G E with E the embedding from j1 <= j2 coefficients. This doubles
    the cross terms between distinct off-diagonal pairs.
    """
    G = gram_from_metric(gt.U1, gt.mu, tensor02_metric(gt))
    if not symmetric:
        return G
    E = np.kron(np.eye(gt.n1), sym_embedding(gt.d))
    Gs = E.T @ G @ E
    return 0.5 * (Gs + Gs.T)


def pointwise_inner(gt: GammaTensors, a, b, k: int) -> np.ndarray:
    """Naive per-point metric g_p(a, b) for two k-forms."""
    C = comb(gt.d, k)
    A = gt.U1 @ np.asarray(a).reshape(gt.n1, C)
    B = gt.U1 @ np.asarray(b).reshape(gt.n1, C)
    g = kform_metric(gt, k)
    return np.einsum("pa,pab,pb->p", A, g, B)


# --------------------------------------------------------------------- wedge

def wedge(a: KForm, b: KForm, gt: GammaTensors) -> KForm:
    """Wedge product with coefficient products re-projected onto n1 functions."""
    k, l = a.degree, b.degree
    d, n1, basis = gt.d, gt.n1, gt.basis
    if k + l > d:
        raise ValueError(f"degree {k}+{l} exceeds dimension {d}")
    U = basis.U[:, :n1]
    Jk, Jl, Jm = multi_indices(d, k), multi_indices(d, l), multi_indices(d, k + l)
    A = U @ a.coeffs.reshape(n1, len(Jk))
    B = U @ b.coeffs.reshape(n1, len(Jl))
    out = np.zeros((U.shape[0], len(Jm)))
    for s, J in enumerate(Jk):
        for t, K in enumerate(Jl):
            sign = permutation_sign(J + K)
            if sign == 0:
                continue
            out[:, rank_multi_index(tuple(sorted(J + K)), d)] += sign * A[:, s] * B[:, t]
    coeffs = U.T @ (basis.mu[:, None] * out)
    return KForm(k + l, coeffs.ravel())


def admissible_pair_fraction(d: int, k: int, l: int) -> float:
    """Share of (J, K) pairs with disjoint multi-indices."""
    total = comb(d, k) * comb(d, l)
    return comb(d, k) * comb(d - k, l) / total


# ------------------------------------------------------------- visualisation

@dataclass(frozen=True)
class FormVisual:
    """Per-point rendering data of a form.

    ``tensor`` holds the full skew array g(alpha, dx_j1 ^ ... ^ dx_jk)(p).
    Depending on the degree, ``vectors`` (k=1), ``plane`` and ``magnitude``
    (k=2) or ``scalar`` (k=3 in 3d) are filled in.
    """

    tensor: np.ndarray
    vectors: np.ndarray | None = None
    plane: np.ndarray | None = None
    magnitude: np.ndarray | None = None
    scalar: np.ndarray | None = None


def vector_field_arrows(gt: GammaTensors, X) -> np.ndarray:
    """(n, d) arrows X(x_c) of a vector field with coefficients X[i, j]."""
    Xf = gt.U1 @ np.asarray(X).reshape(gt.n1, gt.d)
    return np.einsum("pj,pjc->pc", Xf, gt.gamma_cc)


def visualize_form(a: KForm, gt: GammaTensors) -> FormVisual:
    k, d, n = a.degree, gt.d, gt.n
    if k not in (1, 2, 3) or (k == 3 and d != 3) or k > d:
        raise ValueError(f"no visual reduction for degree {k} in dimension {d}")
    Js = multi_indices(d, k)
    A = gt.U1 @ a.coeffs.reshape(gt.n1, len(Js))
    vals = np.einsum("pa,pab->pb", A, kform_metric(gt, k))
    if k == 1:
        return FormVisual(tensor=vals, vectors=vals)
    if k == 2:
        T = np.zeros((n, d, d))
        for s, (i, j) in enumerate(Js):
            T[:, i, j] = vals[:, s]
            T[:, j, i] = -vals[:, s]
        if d == 2:
            plane = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
            return FormVisual(tensor=T, plane=plane, magnitude=T[:, 0, 1])
        # A skew matrix pairs its singular vectors: T u1 = s v, so T ~ s (v u1^T - u1 v^T).
        Uv, S, Vt = np.linalg.svd(T)
        plane = np.stack([Vt[:, 0, :], Vt[:, 1, :]], axis=1)
        mag = np.einsum("pi,pij,pj->p", plane[:, 0], T, plane[:, 1])
        return FormVisual(tensor=T, plane=plane, magnitude=mag)
    T = np.zeros((n, 3, 3, 3))
    for perm in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        T[:, perm[0], perm[1], perm[2]] = vals[:, 0]
        T[:, perm[0], perm[2], perm[1]] = -vals[:, 0]
    return FormVisual(tensor=T, scalar=vals[:, 0])
