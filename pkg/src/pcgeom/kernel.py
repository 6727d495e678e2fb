"""Point clouds, variable-bandwidth kNN kernels and the induced Markov chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class PointCloud:
    """An n x d array of finite coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be a 2d array")
        if pts.shape[0] < 2:
            raise ValueError("need at least 2 points")
        if pts.shape[1] < 1:
            raise ValueError("need at least 1 coordinate")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class MarkovModel:
    """Row-stochastic transition matrix with its stationary measure.

    Attributes:
        P: sparse n x n CSR matrix, rows sum to one.
        mu: stationary probability vector, reversible for P.
        rho: per-point bandwidths used to build the kernel.
        knn: kernel sparsity parameter.
    """

    P: sp.csr_matrix
    mu: np.ndarray
    rho: np.ndarray
    knn: int

    @property
    def n(self) -> int:
        return self.P.shape[0]


def merge_duplicates(points):
    """Collapse exact duplicate rows.

    Returns:
        (unique points, multiplicity of each unique point, inverse index map
        such that ``unique[inverse] == points``).
    """
    pts = np.asarray(points, dtype=float)
    uniq, inverse, counts = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    return uniq, counts.astype(float), inverse.ravel()


def build_bandwidths(cloud: PointCloud, neighbor_rank: int = 8, tree=None) -> np.ndarray:
    """Distance from each point to its ``neighbor_rank``-th nearest neighbour."""
    if not 1 <= neighbor_rank < cloud.n:
        raise ValueError(f"neighbor_rank must lie in [1, {cloud.n - 1}], got {neighbor_rank}")
    tree = cKDTree(cloud.points) if tree is None else tree
    dist, _ = tree.query(cloud.points, k=neighbor_rank + 1)
    rho = dist[:, neighbor_rank]
    if np.any(rho <= 0):
        raise ValueError("degenerate bandwidth: duplicate points give a zero neighbour distance")
    return rho


def density_bandwidths(cloud: PointCloud, neighbor_rank: int = 8, knn: int = 32,
                       power: float = -0.5, tree=None) -> np.ndarray:
    """Bandwidth rho = q**power from a kernel density estimate q.

    The density is estimated with the kNN-distance kernel; the result is
    rescaled so its median matches the kNN-distance bandwidths.
    """
    rho0 = build_bandwidths(cloud, neighbor_rank, tree=tree)
    K = build_kernel(cloud, rho0, knn, tree=tree)
    q = np.asarray(K.sum(axis=1)).ravel() / cloud.n
    rho = q ** power
    return rho * (np.median(rho0) / np.median(rho))


def build_kernel(cloud: PointCloud, rho, knn: int = 32, tree=None) -> sp.csr_matrix:
    """Sparse kernel exp(-|x_i - x_j|^2 / (rho_i rho_j)) on kNN pairs.

    Each point is joined to itself and its ``knn`` nearest neighbours; the
    pattern is then symmetrised with an elementwise max.
    """
    if knn < 2:
        raise ValueError("knn must be at least 2")
    rho = np.asarray(rho, dtype=float)
    n = cloud.n
    k = min(knn + 1, n)
    tree = cKDTree(cloud.points) if tree is None else tree
    dist, idx = tree.query(cloud.points, k=k)
    rows = np.repeat(np.arange(n), k)
    cols = idx.ravel()
    vals = np.exp(-dist.ravel() ** 2 / (rho[rows] * rho[cols]))
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    K = K.maximum(K.T).tocsr()
    K.sort_indices()
    return K


def build_markov(K, rho=None, knn: int | None = None, weights=None) -> MarkovModel:
    """Row-normalise a symmetric kernel into a reversible Markov chain.

    ``weights`` are point multiplicities (from merged duplicates). They enter as
    P_ij ~ K_ij w_j and mu_i ~ w_i sum_j K_ij w_j, which keeps detailed balance.
    """
    K = sp.csr_matrix(K, dtype=float)
    n = K.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    Kw = K @ sp.diags(w) if weights is not None else K
    D = np.asarray(Kw.sum(axis=1)).ravel()
    if np.any(D <= 0):
        bad = int(np.flatnonzero(D <= 0)[0])
        raise ValueError(f"isolated point: kernel row {bad} sums to zero")
    P = (sp.diags(1.0 / D) @ Kw).tocsr()
    P.sort_indices()
    mass = w * D
    mu = mass / mass.sum()
    if rho is None:
        rho = np.ones(n)
    if knn is None:
        knn = int(np.diff(K.indptr).max())
    return MarkovModel(P=P, mu=mu, rho=np.asarray(rho, dtype=float), knn=knn)


def markov_from_points(points, knn: int = 32, neighbor_rank: int = 8,
                       bandwidth: str = "knn", weights=None) -> MarkovModel:
    """Kernel and Markov chain in one call. Points must be distinct."""
    cloud = points if isinstance(points, PointCloud) else PointCloud(points)
    tree = cKDTree(cloud.points)
    rank = min(neighbor_rank, cloud.n - 1)
    if bandwidth == "knn":
        rho = build_bandwidths(cloud, rank, tree=tree)
    elif bandwidth == "density":
        rho = density_bandwidths(cloud, rank, knn, tree=tree)
    else:
        raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
    K = build_kernel(cloud, rho, knn, tree=tree)
    return build_markov(K, rho=rho, knn=knn, weights=weights)
