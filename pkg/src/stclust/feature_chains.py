"""Node-level features gathered along outgoing motion chains.

Each node's feature row concatenates the per-pixel features of the nodes met
walking its backward chain q steps, the node itself, and its forward chain
q steps (2q+1 slots in temporal order). Chains that terminate early repeat
the terminal node's features so every row is fully populated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, FeatureDimOverflowError
from .flow_io import FlowField
from .motion_graph import ChainIndex

MAX_FEATURE_DIM = 99


@dataclass
class FeatureMapSet:
    """Ordered, named per-pixel feature planes, each (m, h, w, c)."""

    m: int
    h: int
    w: int
    planes: list[tuple[str, np.ndarray]] = field(default_factory=list)

    def add(self, name: str, plane: np.ndarray) -> "FeatureMapSet":
        plane = np.asarray(plane, dtype=np.float64)
        if plane.ndim == 3:
            plane = plane[..., None]
        if plane.shape[:3] != (self.m, self.h, self.w):
            raise DimensionMismatchError(
                f"plane {name!r} has shape {plane.shape}, expected "
                f"({self.m},{self.h},{self.w},c)"
            )
        if not np.isfinite(plane).all():
            raise ValueError(f"plane {name!r} contains non-finite values")
        self.planes.append((name, plane))
        return self

    @property
    def channels(self) -> int:
        return sum(p.shape[3] for _, p in self.planes)


def flow_planes(flow: FlowField) -> np.ndarray:
    """Per-frame (u, v) displacement planes, shape (m, h, w, 2).

    Frames 0..m-2 use forward flow; the last frame, which has no outgoing
    forward flow, uses the negated backward flow defined on its own grid.
    """
    last = -flow.backward[flow.m - 2]
    return np.concatenate([flow.forward, last[None]], axis=0)


def feature_dim(q: int, channels: int, bias: bool) -> int:
    """Feature-matrix width for a half-window q; raises past the cap."""
    d = (2 * q + 1) * channels + (1 if bias else 0)
    if d > MAX_FEATURE_DIM:
        raise FeatureDimOverflowError(
            f"(2*{q}+1)*{channels}{'+1' if bias else ''} = {d} exceeds {MAX_FEATURE_DIM}"
        )
    return d


def _chain_positions(chains: ChainIndex, q: int) -> list[np.ndarray]:
    """Node ids per slot, ordered oldest to newest; early ends are clamped."""
    n = chains.n
    here = np.arange(n, dtype=np.int64)
    back = [here]
    pos = here
    for _ in range(q):
        nxt = chains.bwd[pos]
        pos = np.where(nxt >= 0, nxt, pos)
        back.append(pos)
    fore = []
    pos = here
    for _ in range(q):
        nxt = chains.fwd[pos]
        pos = np.where(nxt >= 0, nxt, pos)
        fore.append(pos)
    return back[::-1] + fore  # [-q .. -1, 0, +1 .. +q]


def collect_features(chains: ChainIndex, maps: FeatureMapSet, q: int) -> np.ndarray:
    """Build the n x (2q+1)*channels feature matrix by chain collection."""
    if q < 0:
        raise ValueError(f"half-window q must be >= 0, got {q}")
    if (chains.m, chains.h, chains.w) != (maps.m, maps.h, maps.w):
        raise DimensionMismatchError("chains and feature maps disagree on dims")
    feature_dim(q, maps.channels, bias=False)

    n = chains.n
    if maps.channels == 0:
        return np.empty((n, 0))
    pixfeat = np.concatenate(
        [plane.reshape(n, plane.shape[3]) for _, plane in maps.planes], axis=1
    )
    slots = _chain_positions(chains, q)
    return np.concatenate([pixfeat[pos] for pos in slots], axis=1)


def standardize_columns(F: np.ndarray, add_bias: bool = True) -> np.ndarray:
    """Zero-mean unit-variance columns (population std); zero-variance
    columns become all zeros. Appends an untouched all-ones bias column
    unless add_bias is False."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 2:
        raise DimensionMismatchError(f"need an (n>=2, d) matrix, got {F.shape}")
    mu = F.mean(axis=0)
    sigma = F.std(axis=0)
    dead = sigma <= 1e-12 * np.maximum(1.0, np.abs(mu))
    out = (F - mu) / np.where(dead, 1.0, sigma)
    out[:, dead] = 0.0
    if add_bias:
        out = np.hstack([out, np.ones((F.shape[0], 1))])
    return out


def add_bias_column(F: np.ndarray) -> np.ndarray:
    return np.hstack([np.asarray(F, dtype=np.float64), np.ones((F.shape[0], 1))])


def build_feature_matrix(
    chains: ChainIndex,
    maps: FeatureMapSet,
    q: int,
    standardize: bool = True,
    bias: bool = True,
) -> np.ndarray:
    """Chain collection plus optional column standardization and bias."""
    feature_dim(q, maps.channels, bias)
    F = collect_features(chains, maps, q)
    if standardize:
        return standardize_columns(F, add_bias=bias)
    return add_bias_column(F) if bias else F
