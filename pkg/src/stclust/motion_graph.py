"""Motion chains and the implicit motion matrix M.

Chains step from a pixel to the nearest pixel reached by its flow vector,
one frame at a time. Two nodes are linked iff some chain (forward or
backward, up to a radius of p frames) connects them; the link weight is a
Gaussian kernel of the temporal distance. The resulting symmetric weighted
adjacency is stored as deduplicated CSR-style neighbor lists and never
densified on the production path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonPositiveBandwidthError
from .flow_io import FlowField


@dataclass(frozen=True)
class ChainIndex:
    """Per-node successor maps; -1 marks an absent link.

    fwd[a] is the node in the next frame reached by following a's forward
    flow vector; bwd[a] the node in the previous frame via backward flow.
    Every node has exactly one outgoing link per direction where the
    neighboring frame exists and the step stays inside the frame.
    """

    m: int
    h: int
    w: int
    fwd: np.ndarray
    bwd: np.ndarray

    @property
    def n(self) -> int:
        return self.m * self.h * self.w


@dataclass(frozen=True)
class MotionGraph:
    """Symmetric nonnegative adjacency over video pixels, CSR layout.

    rows/indices/weights hold every directed entry (a, b, w) with its mirror
    (b, a, w) also present; entries are sorted by (row, col) and deduplicated,
    so matvec accumulation order is fixed.
    """

    m: int
    h: int
    w: int
    p: int
    sigma_t: float
    rows: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    indptr: np.ndarray

    @property
    def n(self) -> int:
        return self.m * self.h * self.w

    @property
    def edge_count(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def frame_of(self, node) -> np.ndarray:
        return np.asarray(node) // (self.h * self.w)


def temporal_kernel(dt, sigma_t: float):
    """Gaussian weight exp(-dt^2 / (2 sigma_t^2)) of an inter-frame distance."""
    if sigma_t <= 0:
        raise NonPositiveBandwidthError(f"sigma_t must be > 0, got {sigma_t}")
    dt = np.asarray(dt, dtype=np.float64)
    out = np.exp(-(dt * dt) / (2.0 * sigma_t * sigma_t))
    return float(out) if out.ndim == 0 else out


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # nearest integer, ties away from zero (np.round would round half-to-even)
    return np.trunc(x + np.copysign(0.5, x)).astype(np.int64)


def build_chains(flow: FlowField) -> ChainIndex:
    """Follow flow vectors one frame at a time to build successor maps."""
    m, h, w = flow.m, flow.h, flow.w
    n = m * h * w
    fwd = np.full(n, -1, dtype=np.int64)
    bwd = np.full(n, -1, dtype=np.int64)

    rr, cc = np.mgrid[0:h, 0:w]
    base = rr * w + cc  # node offset within one frame

    for t in range(m - 1):
        u = flow.forward[t, ..., 0]
        v = flow.forward[t, ..., 1]
        r2 = _round_half_away(rr + v)
        c2 = _round_half_away(cc + u)
        ok = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
        src = t * h * w + base
        dst = (t + 1) * h * w + r2 * w + c2
        fwd[src[ok]] = dst[ok]

    for t in range(1, m):
        u = flow.backward[t - 1, ..., 0]
        v = flow.backward[t - 1, ..., 1]
        r2 = _round_half_away(rr + v)
        c2 = _round_half_away(cc + u)
        ok = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
        src = t * h * w + base
        dst = (t - 1) * h * w + r2 * w + c2
        bwd[src[ok]] = dst[ok]

    return ChainIndex(m=m, h=h, w=w, fwd=fwd, bwd=bwd)


def build_motion_graph(chains: ChainIndex, p: int, sigma_t: float) -> MotionGraph:
    """Materialize the edge set of M from chain walks of 1..p steps.

    An edge (a, b) exists iff b is reachable from a by walking forward links
    or backward links; duplicate incidences collapse to a single edge whose
    weight depends only on the temporal distance of its endpoints.
    """
    if p < 1:
        raise ValueError(f"propagation radius p must be >= 1, got {p}")
    if sigma_t <= 0:
        raise NonPositiveBandwidthError(f"sigma_t must be > 0, got {sigma_t}")

    n = chains.n
    all_src = []
    all_dst = []
    start = np.arange(n, dtype=np.int64)
    for links in (chains.fwd, chains.bwd):
        cur = start
        alive = np.ones(n, dtype=bool)
        for _ in range(p):
            nxt = np.where(alive, links[np.where(alive, cur, 0)], -1)
            alive = alive & (nxt >= 0)
            if not alive.any():
                break
            cur = np.where(alive, nxt, cur)
            all_src.append(start[alive])
            all_dst.append(cur[alive])

    if all_src:
        src = np.concatenate(all_src)
        dst = np.concatenate(all_dst)
        # symmetrize, then dedupe on the (row, col) pair
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        keys = rows * np.int64(n) + cols
        keys = np.unique(keys)
        rows = keys // n
        cols = keys % n
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)

    hw = chains.h * chains.w
    dt = np.abs(rows // hw - cols // hw)
    weights = temporal_kernel(dt, sigma_t)
    counts = np.bincount(rows, minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    return MotionGraph(
        m=chains.m,
        h=chains.h,
        w=chains.w,
        p=p,
        sigma_t=sigma_t,
        rows=rows,
        indices=cols,
        weights=weights,
        indptr=indptr,
    )


def matvec_M(graph: MotionGraph, x: np.ndarray) -> np.ndarray:
    """Exact y = M x from the neighbor lists; y[a] = sum_b M[a,b] x[b]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (graph.n,):
        raise DimensionMismatchError(f"expected length-{graph.n} vector, got {x.shape}")
    contrib = graph.weights * x[graph.indices]
    return np.bincount(graph.rows, weights=contrib, minlength=graph.n)


def dump_edges_csv(graph: MotionGraph, path) -> None:
    """Debug dump of the directed edge entries as a,b,weight."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["a", "b", "weight"])
        for a, b, wt in zip(graph.rows, graph.indices, graph.weights):
            writer.writerow([int(a), int(b), repr(float(wt))])
