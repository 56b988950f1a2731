"""Matrix-free projection onto the feature column space.

The step x <- Px never forms the n x n projector: it fits ridge-regression
weights through a cached d x d SPD factorization of F^T F + lambda*I and
expands them back through F.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.blas import dsyrk

from .errors import DimensionMismatchError, SingularGramError


@dataclass(frozen=True)
class RidgeSolveCache:
    """Factored normal-equation system, reusable across iterations."""

    gram: np.ndarray  # F^T F + lambda*I, d x d
    factor: tuple
    lam: float

    @property
    def d(self) -> int:
        return self.gram.shape[0]


def auto_lambda(F: np.ndarray) -> float:
    """Default ridge strength 1e-4 * trace(F^T F) / d."""
    F = np.asarray(F, dtype=np.float64)
    d = F.shape[1]
    return 1e-4 * float(np.einsum("ij,ij->", F, F)) / d


def accumulate_gram(F: np.ndarray) -> np.ndarray:
    """F^T F in double precision via the symmetric rank-k BLAS kernel."""
    lower = dsyrk(1.0, F, trans=1, lower=1)
    return lower + np.tril(lower, -1).T


def build_cache(F: np.ndarray, lam: float | None = None) -> RidgeSolveCache:
    """Accumulate and factor the Gram system; lam=None picks auto_lambda(F)."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] < 1:
        raise DimensionMismatchError(f"need an (n, d>=1) feature matrix, got {F.shape}")
    if lam is None:
        lam = auto_lambda(F)
    if lam < 0:
        raise ValueError(f"ridge strength must be >= 0, got {lam}")
    gram = accumulate_gram(F)
    if lam > 0:
        gram = gram + lam * np.eye(F.shape[1])
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"Gram matrix not SPD (lambda={lam}): {exc}") from exc
    # a zero Gram eigenvalue surfaces as a ~sqrt(eps)-relative Cholesky pivot
    diag = np.abs(np.diag(factor[0]))
    if lam == 0 and diag.min() <= 1e-7 * diag.max():
        raise SingularGramError(
            "Gram matrix numerically singular with lambda=0; pass lam>0"
        )
    return RidgeSolveCache(gram=gram, factor=factor, lam=float(lam))


def fit_weights(cache: RidgeSolveCache, F: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Solve (F^T F + lambda*I) w = F^T x with one refinement step."""
    F = np.asarray(F, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (F.shape[0],):
        raise DimensionMismatchError(
            f"label vector has shape {x.shape}, expected ({F.shape[0]},)"
        )
    if F.shape[1] != cache.d:
        raise DimensionMismatchError(
            f"feature matrix width {F.shape[1]} does not match cache d={cache.d}"
        )
    rhs = F.T @ x
    w = cho_solve(cache.factor, rhs)
    w += cho_solve(cache.factor, rhs - cache.gram @ w)
    return w


def project(cache: RidgeSolveCache, F: np.ndarray, x: np.ndarray) -> np.ndarray:
    """x <- F w*, the (ridge-regularized) projection of x onto col(F)."""
    return np.asarray(F, dtype=np.float64) @ fit_weights(cache, F, x)
