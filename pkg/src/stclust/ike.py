"""Iterative knowledge exchange: graph cycles with an external network.

Cycle 1 solves the graph from flow features alone. Every later cycle
re-initializes the node features with the previous cycle's graph output
(and the network's predictions, when a network command is configured),
rebuilds the feature matrix, and solves again. The network is any external
executable honoring the directory protocol below; it is trained per video
on the graph's pseudo-labels.

Workspace layout, per video::

    <workspace>/cycle_<c>/
        x_%04d.stgt      graph soft masks (pseudo-labels), one per frame
        s_%04d.stgt      network predictions imported for the next cycle
        masks/           PGM previews (soft_*.pgm, mask_*.pgm)
        metrics.csv      per-frame IoU/MAE when ground truth is available
        diagnostics.csv  solver trace
        cycle.done       completion marker (enables resuming)

Network contract: the command template receives {frames_dir} {labels_dir}
{out_dir}; it must exit 0 and write one s_%04d.stgt TensorFile of shape
(h, w) per frame into out_dir. Labels are provided as x_%04d.stgt files of
shape (h, w) with values in [0, 1] inside labels_dir.
"""

from __future__ import annotations

import os
import shlex
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    NetworkFailedError,
    ShapeMismatchError,
    TruncatedFileError,
)
from .feature_chains import FeatureMapSet, flow_planes
from .flow_io import FlowField
from .masks import SegmentationMasks, compute_metrics, to_masks, write_masks
from .pipeline import GraphContext, build_context, run_graph
from .solver import SolverConfig

TENSOR_MAGIC = b"STGT"
TENSOR_VERSION = 1
MAX_RANK = 4


# ---------------------------------------------------------------------------
# TensorFile: the cross-component interchange format
# ---------------------------------------------------------------------------

def write_tensor(arr: np.ndarray, path) -> None:
    """Write a float32 tensor: b"STGT", u32 version, u32 rank, u32 dims[],
    then row-major little-endian float32 payload. Atomic (temp + rename)."""
    arr = np.asarray(arr, dtype="<f4")
    if arr.ndim > MAX_RANK:
        raise ValueError(f"rank {arr.ndim} exceeds {MAX_RANK}")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<II", TENSOR_VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr).tobytes())
    os.replace(tmp, path)


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedFileError(f"{path}: shorter than the minimal header")
    if data[:4] != TENSOR_MAGIC:
        raise BadMagicError(f"{path}: magic {data[:4]!r} != {TENSOR_MAGIC!r}")
    version, rank = struct.unpack("<II", data[4:12])
    if version != TENSOR_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if rank > MAX_RANK:
        raise ValueError(f"{path}: rank {rank} exceeds {MAX_RANK}")
    head = 12 + 4 * rank
    if len(data) < head:
        raise TruncatedFileError(f"{path}: header ends before dims")
    dims = struct.unpack(f"<{rank}I", data[12:head])
    count = int(np.prod(dims)) if rank else 1
    need = 4 * count
    if len(data) - head < need:
        raise TruncatedFileError(f"{path}: payload {len(data)-head} < {need} bytes")
    return np.frombuffer(data[head : head + need], dtype="<f4").reshape(dims).copy()


# ---------------------------------------------------------------------------
# cycle state and the network boundary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkInvocation:
    """External trainer/predictor command; placeholders {frames_dir}
    {labels_dir} {out_dir} are substituted before execution."""

    command: str
    timeout: float = 1800.0


@dataclass
class CycleState:
    cycle: int = 0  # last completed cycle, 0 = none
    x_soft: np.ndarray | None = None  # (m, h, w) graph output, [0, 1]
    s_planes: np.ndarray | None = None  # (m, h, w) network output, [0, 1]
    d: int = 0  # feature width used by the last graph solve
    metrics: list = field(default_factory=list)  # MetricsReport or None per cycle


def cycle_dir(workspace, c: int) -> Path:
    return Path(workspace) / f"cycle_{c}"


def export_pseudo_labels(soft: np.ndarray, out_dir) -> None:
    """Per-frame soft masks as TensorFiles plus PGM previews."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .flow_io import write_pgm

    for i in range(soft.shape[0]):
        write_tensor(soft[i], out_dir / f"x_{i:04d}.stgt")
        write_pgm(soft[i], out_dir / f"x_{i:04d}.pgm")


def import_predictions(out_dir, m: int, h: int, w: int) -> np.ndarray:
    """Read s_%04d.stgt planes, validating shape against the video."""
    out_dir = Path(out_dir)
    planes = np.empty((m, h, w), dtype=np.float64)
    for i in range(m):
        path = out_dir / f"s_{i:04d}.stgt"
        if not path.exists():
            raise ShapeMismatchError(f"missing prediction {path.name}")
        arr = read_tensor(path)
        if arr.shape != (h, w):
            raise ShapeMismatchError(
                f"{path.name}: shape {arr.shape}, expected ({h}, {w})"
            )
        planes[i] = arr
    return planes


def invoke_network(net: NetworkInvocation, frames_dir, labels_dir, out_dir) -> None:
    try:
        cmd = net.command.format(
            frames_dir=str(frames_dir), labels_dir=str(labels_dir), out_dir=str(out_dir)
        )
    except KeyError as exc:
        raise NetworkFailedError(f"unknown placeholder in command: {exc}") from exc
    argv = shlex.split(cmd)
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=net.timeout
        )
    except subprocess.TimeoutExpired as exc:
        raise NetworkFailedError(f"network timed out after {net.timeout}s") from exc
    except OSError as exc:
        raise NetworkFailedError(f"cannot run network command: {exc}") from exc
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip().splitlines()[-5:]
        raise NetworkFailedError(
            f"network exited {proc.returncode}: " + " | ".join(tail)
        )


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------

def _quantize(soft: np.ndarray) -> np.ndarray:
    # features round-trip through float32 TensorFiles; feeding the quantized
    # values forward keeps fresh and resumed runs bit-identical
    return soft.astype(np.float32).astype(np.float64)


def _cycle_feature_maps(flow: FlowField, state: CycleState, tau: float) -> FeatureMapSet:
    # soft masks carry a value gradient along occlusion rims; fed back raw
    # they let the solver express a halo around the object, so the label and
    # prediction planes enter the feature matrix binarized at the run's tau
    maps = FeatureMapSet(flow.m, flow.h, flow.w)
    maps.add("flow", flow_planes(flow))
    if state.x_soft is not None:
        maps.add("labels", (state.x_soft >= tau).astype(np.float64))
    if state.s_planes is not None:
        maps.add("net", (state.s_planes >= tau).astype(np.float64))
    return maps


def run_cycle(
    state: CycleState,
    ctx: GraphContext,
    flow: FlowField,
    config: SolverConfig,
    workspace,
    tau: float = 0.5,
    gt: np.ndarray | None = None,
) -> CycleState:
    """Solve the graph for cycle state.cycle+1 and persist its outputs."""
    c = state.cycle + 1
    m, h, w = ctx.dims
    cdir = cycle_dir(workspace, c)
    cdir.mkdir(parents=True, exist_ok=True)

    maps = _cycle_feature_maps(flow, state, tau)
    x, diag, F = run_graph(ctx, maps, config)
    masks = to_masks(x, m, h, w, tau)
    report = compute_metrics(masks, gt) if gt is not None else None

    export_pseudo_labels(masks.soft, cdir)
    write_masks(masks, cdir / "masks")
    diag.write_csv(cdir / "diagnostics.csv")
    if report is not None:
        report.write_csv(cdir / "metrics.csv")
    (cdir / "cycle.done").write_text("ok\n")

    return CycleState(
        cycle=c,
        x_soft=_quantize(masks.soft),
        s_planes=None,
        d=F.shape[1],
        metrics=state.metrics + [report],
    )


def _resume_cycle(workspace, c: int, m: int, h: int, w: int, prev: CycleState):
    """Load a completed cycle's outputs instead of recomputing them."""
    cdir = cycle_dir(workspace, c)
    if not (cdir / "cycle.done").exists():
        return None
    try:
        soft = np.stack([read_tensor(cdir / f"x_{i:04d}.stgt") for i in range(m)])
    except (OSError, BadMagicError, TruncatedFileError):
        return None
    if soft.shape != (m, h, w):
        return None
    return CycleState(
        cycle=c,
        x_soft=soft.astype(np.float64),
        s_planes=None,
        d=0,
        metrics=prev.metrics + [None],
    )


def run_ike(
    flow: FlowField,
    config: SolverConfig,
    workspace,
    cycles: int = 3,
    network: NetworkInvocation | None = None,
    frames_dir=None,
    tau: float = 0.5,
    gt: np.ndarray | None = None,
):
    """Run `cycles` graph solves with optional network knowledge exchange.

    Returns (final SegmentationMasks, final CycleState). The final output is
    the graph's last-cycle masks. A failed network invocation raises after
    the completed cycles' outputs are persisted, so a rerun resumes.
    """
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    if network is not None and frames_dir is None:
        raise ValueError("a network invocation needs frames_dir")

    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    ctx = build_context(flow, config)
    m, h, w = ctx.dims

    state = CycleState()
    for c in range(1, cycles + 1):
        resumed = _resume_cycle(workspace, c, m, h, w, state)
        if resumed is not None:
            state = resumed
        else:
            state = run_cycle(state, ctx, flow, config, workspace, tau=tau, gt=gt)
        if network is not None and c < cycles:
            cdir = cycle_dir(workspace, c)
            if not all((cdir / f"s_{i:04d}.stgt").exists() for i in range(m)):
                invoke_network(network, frames_dir, cdir, cdir)
            state.s_planes = import_predictions(cdir, m, h, w).astype(np.float64)

    final = to_masks_from_state(state, m, h, w, tau)
    return final, state


def to_masks_from_state(state: CycleState, m: int, h: int, w: int, tau: float) -> SegmentationMasks:
    soft = state.x_soft
    binary = (soft >= tau).astype(np.uint8)
    return SegmentationMasks(soft=soft, binary=binary, tau=tau, constant=False)
