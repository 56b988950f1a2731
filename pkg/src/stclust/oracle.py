"""Dense small-scale ground truth: explicit M, P, A and their spectrum.

Everything here materializes n x n matrices and is intended for verification
and analysis only (hard cap n <= 8192). The eigensolver is a hand-rolled
power iteration with Hotelling deflation so the spectral route stays
independent of the matrix-free production path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularGramError, TooLargeError
from .motion_graph import MotionGraph

SIZE_CAP = 8192


@dataclass(frozen=True)
class ExplicitGraph:
    M: np.ndarray
    P: np.ndarray
    A: np.ndarray
    lam: float

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class PowerResult:
    vector: np.ndarray
    value: float
    iterations: int
    residual: float
    converged: bool  # residual met and a spectral gap was detected


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # descending
    vectors: np.ndarray  # one column per eigenvalue
    residuals: np.ndarray
    flags: np.ndarray  # per-eigenpair converged flags

    @property
    def eigengap(self) -> float:
        return float(self.eigenvalues[0] - self.eigenvalues[1])

    @property
    def ratio(self) -> float:
        lam2 = self.eigenvalues[1]
        if lam2 == 0.0:
            return float("inf")
        return float(self.eigenvalues[0] / lam2)


@dataclass(frozen=True)
class PerturbationReport:
    e_norm: float  # Frobenius norm of the perturbation
    a_norm: float  # Frobenius norm of the ideal matrix
    epsilon: float  # eigenvector-alteration upper bound 8*e_norm/a_norm


def build_explicit(graph: MotionGraph, F: np.ndarray, lam: float = 0.0) -> ExplicitGraph:
    """Densify M and form P = F (F^T F + lam I)^-1 F^T and A = P M P."""
    n = graph.n
    if n > SIZE_CAP:
        raise TooLargeError(f"n={n} exceeds the dense cap {SIZE_CAP}")
    F = np.asarray(F, dtype=np.float64)
    if F.shape[0] != n:
        raise ValueError(f"feature matrix has {F.shape[0]} rows, expected {n}")

    M = np.zeros((n, n))
    M[graph.rows, graph.indices] = graph.weights

    gram = F.T @ F + lam * np.eye(F.shape[1])
    try:
        B = np.linalg.solve(gram, F.T)  # (F^T F + lam I)^-1 F^T, d x n
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"explicit Gram solve failed: {exc}") from exc
    P = F @ B
    # A = P M P expanded through the d-dimensional core to avoid n^3 work
    core = B @ M @ B.T
    A = F @ core @ F.T
    return ExplicitGraph(M=M, P=P, A=A, lam=float(lam))


def dense_power_iteration(
    A: np.ndarray,
    x0: np.ndarray | None = None,
    iters: int = 1000,
    tol: float = 1e-12,
    seed: int = 0,
) -> PowerResult:
    """Leading eigenpair of a symmetric matrix by plain power iteration.

    Never raises on a flat spectrum: the best iterate comes back with
    converged=False when the residual target is missed or no gap separates
    the top eigenvalue (estimated by a short deflated run) from the rest.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if x0 is None:
        x = np.random.default_rng(seed).standard_normal(n)
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
    x /= np.linalg.norm(x)

    value = float(x @ (A @ x))
    used = 0
    for used in range(1, iters + 1):
        y = A @ x
        nrm = float(np.linalg.norm(y))
        if nrm < 1e-300:
            break
        x_new = y / nrm
        value = float(x_new @ (A @ x_new))
        drift = float(np.linalg.norm(x_new - x * np.sign(x @ x_new)))
        x = x_new
        if drift < tol:
            break
    residual = float(np.linalg.norm(A @ x - value * x))
    residual_ok = residual <= max(tol * abs(value), 1e-12)

    # gap probe: largest |eigenvalue| of the deflated matrix
    probe = np.random.default_rng(seed + 1).standard_normal(n)
    probe -= (probe @ x) * x
    lam2 = 0.0
    nrm = float(np.linalg.norm(probe))
    if nrm > 0:
        probe /= nrm
        for _ in range(60):
            probe = A @ probe - value * (x @ probe) * x
            nrm = float(np.linalg.norm(probe))
            if nrm < 1e-300:
                break
            probe /= nrm
        lam2 = abs(float(probe @ (A @ probe) - value * (x @ probe) ** 2))
    gap_ok = abs(value) - lam2 > 1e-9 * max(abs(value), 1.0)

    return PowerResult(
        vector=x,
        value=value,
        iterations=used,
        residual=residual,
        converged=bool(residual_ok and gap_ok),
    )


def spectrum(A: np.ndarray, k: int = 6, iters: int = 5000, tol: float = 1e-11) -> SpectrumReport:
    """Top-k eigenpairs via power iteration with Hotelling deflation."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    work = A.copy()
    values, vectors, residuals, flags = [], [], [], []
    for i in range(k):
        res = dense_power_iteration(work, iters=iters, tol=tol, seed=1234 + i)
        values.append(res.value)
        vectors.append(res.vector)
        residuals.append(float(np.linalg.norm(work @ res.vector - res.value * res.vector)))
        flags.append(res.converged)
        work = work - res.value * np.outer(res.vector, res.vector)

    order = np.argsort(values)[::-1]
    return SpectrumReport(
        eigenvalues=np.asarray(values)[order],
        vectors=np.stack(vectors, axis=1)[:, order],
        residuals=np.asarray(residuals)[order],
        flags=np.asarray(flags)[order],
    )


def perturbation_bound(A_star: np.ndarray, E: np.ndarray) -> PerturbationReport:
    """Eigenvector stability bound epsilon = 8 ||E||_F / ||A*||_F."""
    A_star = np.asarray(A_star, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if A_star.shape != E.shape:
        raise ValueError(f"shape mismatch {A_star.shape} vs {E.shape}")
    e_norm = float(np.linalg.norm(E, "fro"))
    a_norm = float(np.linalg.norm(A_star, "fro"))
    eps = 8.0 * e_norm / a_norm if a_norm > 0 else 0.0
    return PerturbationReport(e_norm=e_norm, a_norm=a_norm, epsilon=eps)


def reorder_by_mask(A: np.ndarray, labels: np.ndarray):
    """Permute nodes so ground-truth object nodes come first (matrix dumps)."""
    labels = np.asarray(labels).ravel()
    if labels.size != A.shape[0]:
        raise ValueError("label vector length does not match matrix size")
    perm = np.argsort(~(labels > 0), kind="stable")
    return A[np.ix_(perm, perm)], perm
