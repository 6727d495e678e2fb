"""Regularised pseudoinverses of Gram matrices and weak-to-strong conversion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_CONDITION = 1e5


class RankZeroGram(ValueError):
    pass


@dataclass
class GramOperator:
    """Symmetric Gram matrix with a cached eigendecomposition.

    With ``tikhonov=None`` the pseudoinverse is the spectral cutoff at
    eps = B / condition_target; otherwise it is (G + tikhonov * I)^-1.
    """

    G: np.ndarray
    condition_target: float = DEFAULT_CONDITION
    tikhonov: float | None = None
    eigvals: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        asym = np.abs(G - G.T).max() if G.size else 0.0
        if asym > 1e-8 * max(np.abs(G).max(), 1e-300):
            raise ValueError(f"Gram matrix is not symmetric (max asymmetry {asym:.3g})")
        self.G = 0.5 * (G + G.T)
        w, V = np.linalg.eigh(self.G)
        self.eigvals = w[::-1]
        self.eigvecs = V[:, ::-1]
        self._pinv = None

    @property
    def B(self) -> float:
        return float(self.eigvals[0]) if self.eigvals.size else 0.0

    @property
    def cutoff(self) -> float:
        return self.B / self.condition_target

    @property
    def retained(self) -> np.ndarray:
        return self.eigvals >= self.cutoff

    @property
    def rank(self) -> int:
        return int(self.retained.sum()) if self.B > 0 else 0

    @property
    def basis(self) -> np.ndarray:
        """Columns spanning the retained eigenspace."""
        return self.eigvecs[:, self.retained]

    def pinv(self) -> np.ndarray:
        if self._pinv is None:
            self._pinv = regularized_pinv(self)
        return self._pinv

    def solve(self, W) -> np.ndarray:
        return self.pinv() @ W


def regularized_pinv(G) -> np.ndarray:
    """Spectral-cutoff (default) or Tikhonov inverse of a Gram matrix."""
    if not isinstance(G, GramOperator):
        G = GramOperator(G)
    if G.tikhonov is not None:
        return G.eigvecs @ np.diag(1.0 / (G.eigvals + G.tikhonov)) @ G.eigvecs.T
    if G.rank == 0:
        raise RankZeroGram("rank-zero Gram: no eigenvalue survives the spectral cutoff")
    keep = G.retained
    V = G.eigvecs[:, keep]
    return (V / G.eigvals[keep]) @ V.T


@dataclass
class WeakOperator:
    """Weak matrix whose rows are tested against the codomain spanning set."""

    W: np.ndarray
    codomain_gram: GramOperator
    domain_gram: GramOperator | None = None

    def strong(self) -> np.ndarray:
        return solve_strong(self)

    def adjoint_strong(self) -> np.ndarray:
        if self.domain_gram is None:
            raise ValueError("adjoint needs the domain Gram matrix")
        return self.domain_gram.pinv() @ self.W.T


def solve_strong(op: WeakOperator) -> np.ndarray:
    W = np.asarray(op.W)
    if W.shape[0] != op.codomain_gram.G.shape[0]:
        raise ValueError(f"weak matrix has {W.shape[0]} rows, Gram side is {op.codomain_gram.G.shape[0]}")
    return op.codomain_gram.pinv() @ W


@dataclass(frozen=True)
class FrameReport:
    B: float
    cutoff: float
    rank: int
    condition: float
    trace_bound: float | None


def frame_report(G: GramOperator, gamma_cc: np.ndarray | None = None) -> FrameReport:
    """Upper frame bound, cutoff and retained rank, plus max_p trace(Gamma_p) if given."""
    trace = None if gamma_cc is None else float(np.trace(gamma_cc, axis1=1, axis2=2).max())
    return FrameReport(B=G.B, cutoff=G.cutoff, rank=G.rank, condition=G.B / G.cutoff if G.cutoff > 0 else np.inf,
                       trace_bound=trace)
