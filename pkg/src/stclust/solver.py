"""Propagate / project / normalize iteration to the leading eigenvector.

Each iteration maps x to normalize(P M x). The fixed point is the principal
eigenvector of the feature-motion coupling; neither M nor the projector is
ever materialized.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BadInitFileError, CollapsedSolutionError
from .motion_graph import MotionGraph, matvec_M
from .projection import RidgeSolveCache, project

INIT_MODES = ("uniform", "constant", "gaussian", "file")


@dataclass(frozen=True)
class SolverConfig:
    p: int = 5  # propagation radius, frames
    q: int = 1  # feature half-window, frames
    sigma_t: float = 2.0  # temporal kernel bandwidth, frames
    lam: float | None = None  # ridge strength; None = auto, 0 = plain projector
    tol: float = 1e-6  # L2 step-norm stopping tolerance
    max_iters: int = 20
    init_mode: str = "uniform"
    seed: int = 42
    standardize: bool = True
    bias: bool = True
    init_file: str | None = None

    def validate(self) -> "SolverConfig":
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.q < 0:
            raise ValueError(f"q must be >= 0, got {self.q}")
        if self.sigma_t <= 0:
            raise ValueError(f"sigma_t must be > 0, got {self.sigma_t}")
        if self.lam is not None and self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.init_mode == "file" and not self.init_file:
            raise BadInitFileError("init_mode 'file' needs init_file")
        return self


@dataclass
class SolveDiagnostics:
    rayleigh: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    ms: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    negative_fraction: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iter", "rayleigh", "step_norm", "ms"])
            for i, (r, s, t) in enumerate(
                zip(self.rayleigh, self.step_norm, self.ms), start=1
            ):
                writer.writerow([i, repr(r), repr(s), repr(t)])


def _normalize(x: np.ndarray) -> np.ndarray:
    nrm = float(np.linalg.norm(x))
    if nrm < 1e-30:
        raise CollapsedSolutionError("iterate collapsed to the zero vector")
    return x / nrm


def init_labels(
    n: int,
    mode: str = "uniform",
    seed: int = 42,
    dims: tuple[int, int, int] | None = None,
    init_file: str | None = None,
) -> np.ndarray:
    """Unit-norm starting labels.

    uniform: iid U(0,1) draws; constant: 1/sqrt(n); gaussian: a centered
    per-frame 2D Gaussian (needs dims=(m,h,w)); file: a TensorFile of n
    values (needs init_file).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "uniform":
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.0, 1.0, size=n)
    elif mode == "constant":
        x = np.ones(n)
    elif mode == "gaussian":
        if dims is None:
            raise ValueError("gaussian init needs dims=(m,h,w)")
        m, h, w = dims
        if m * h * w != n:
            raise ValueError(f"dims {dims} inconsistent with n={n}")
        rr, cc = np.mgrid[0:h, 0:w]
        blob = np.exp(
            -(
                (rr - (h - 1) / 2.0) ** 2 / (2.0 * (h / 4.0) ** 2)
                + (cc - (w - 1) / 2.0) ** 2 / (2.0 * (w / 4.0) ** 2)
            )
        )
        x = np.tile(blob.ravel(), m)
    elif mode == "file":
        if not init_file:
            raise BadInitFileError("init mode 'file' needs a path")
        from .ike import read_tensor

        try:
            x = read_tensor(init_file).astype(np.float64).ravel()
        except Exception as exc:
            raise BadInitFileError(f"cannot load init labels: {exc}") from exc
        if x.size != n:
            raise BadInitFileError(f"init file holds {x.size} values, expected {n}")
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return _normalize(x)


def sign_fix(x: np.ndarray) -> np.ndarray:
    """Resolve eigenvector sign: entry sum nonnegative; if the sum is
    numerically zero (features with zero column means make every projected
    vector sum to zero), make the largest-magnitude entry positive."""
    s = float(x.sum())
    if abs(s) > 1e-9 * np.sqrt(x.size):
        return x if s >= 0 else -x
    peak = x[np.argmax(np.abs(x))]
    return x if peak >= 0 else -x


def _step(graph: MotionGraph, F: np.ndarray, cache: RidgeSolveCache, x: np.ndarray):
    y = matvec_M(graph, x)
    z = project(cache, F, y)
    rayleigh = float(x @ z)  # equals x^T A x once x lives in col(F), lam=0
    return _normalize(z), rayleigh


def iterate_once(
    graph: MotionGraph, F: np.ndarray, cache: RidgeSolveCache, x: np.ndarray
) -> np.ndarray:
    """One propagation/projection/normalization step."""
    x_new, _ = _step(graph, F, cache, x)
    return x_new


def solve(
    graph: MotionGraph,
    F: np.ndarray,
    cache: RidgeSolveCache,
    config: SolverConfig,
    x0: np.ndarray | None = None,
):
    """Iterate to convergence; returns (sign-fixed unit vector, diagnostics)."""
    config.validate()
    if x0 is None:
        x = init_labels(
            graph.n,
            mode=config.init_mode,
            seed=config.seed,
            dims=(graph.m, graph.h, graph.w),
            init_file=config.init_file,
        )
    else:
        x = _normalize(np.asarray(x0, dtype=np.float64))

    diag = SolveDiagnostics()
    for _ in range(config.max_iters):
        t0 = time.perf_counter()
        x_new, rayleigh = _step(graph, F, cache, x)
        step = float(np.linalg.norm(x_new - x))
        diag.ms.append((time.perf_counter() - t0) * 1000.0)
        diag.rayleigh.append(rayleigh)
        diag.step_norm.append(step)
        diag.iterations += 1
        x = x_new
        if step < config.tol:
            diag.converged = True
            break

    x = sign_fix(x)
    diag.negative_fraction = float(np.mean(x < 0.0))
    return x, diag
