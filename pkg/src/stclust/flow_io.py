"""Flow and video I/O plus the synthetic scene generator.

File conventions:
  - optical flow: Middlebury ``.flo`` (float32 magic 202021.25, int32 width,
    int32 height, then h*w interleaved little-endian float32 (u, v) pairs,
    row-major); one file per frame pair, ``forward_%04d.flo`` maps frame i to
    i+1 and ``backward_%04d.flo`` maps frame i+1 to i.
  - video frames: 8-bit binary PPM (P6), ``frame_%04d.ppm``.
  - ground-truth masks: 8-bit binary PGM (P5) with values 0/255, ``gt_%04d.pgm``.

Flow vectors are stored as (u, v) = (column displacement, row displacement)
in pixels per frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    ObjectLeavesFrameError,
    TruncatedFileError,
)

FLO_MAGIC = 202021.25


@dataclass(frozen=True)
class VideoVolume:
    """A short video clip: pixels are m*h*w*3 intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 4 or p.shape[3] != 3:
            raise DimensionMismatchError(f"expected (m,h,w,3) pixels, got {p.shape}")
        if p.shape[0] < 2:
            raise DimensionMismatchError("a video needs at least 2 frames")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.pixels.shape[0]

    @property
    def h(self) -> int:
        return self.pixels.shape[1]

    @property
    def w(self) -> int:
        return self.pixels.shape[2]

    @property
    def n(self) -> int:
        """Node count of the space-time graph: one node per pixel."""
        return self.m * self.h * self.w


@dataclass(frozen=True)
class FlowField:
    """Dense forward/backward optical flow for a video of m frames.

    forward[i] maps pixels of frame i to frame i+1; backward[i] is defined on
    the pixel grid of frame i+1 and maps it back to frame i. Both have shape
    (m-1, h, w, 2).
    """

    forward: np.ndarray
    backward: np.ndarray

    def __post_init__(self):
        f, b = self.forward, self.backward
        if f.shape != b.shape or f.ndim != 4 or f.shape[3] != 2:
            raise DimensionMismatchError(
                f"inconsistent flow shapes {f.shape} / {b.shape}"
            )
        if not (np.isfinite(f).all() and np.isfinite(b).all()):
            raise ValueError("flow fields must be finite")

    @property
    def m(self) -> int:
        return self.forward.shape[0] + 1

    @property
    def h(self) -> int:
        return self.forward.shape[1]

    @property
    def w(self) -> int:
        return self.forward.shape[2]


@dataclass(frozen=True)
class GroundTruthMasks:
    """Binary per-frame object masks, m*h*w with values in {0, 1}."""

    masks: np.ndarray

    def __post_init__(self):
        m = self.masks
        if m.ndim != 3:
            raise DimensionMismatchError(f"expected (m,h,w) masks, got {m.shape}")
        vals = np.unique(m)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")


@dataclass(frozen=True)
class SynthSceneSpec:
    """Recipe for a rigid-translation synthetic scene.

    Velocities are integer (rows, cols) pixels per frame so that masks and
    motion chains stay on the pixel lattice exactly. Texture noise perturbs
    pixel intensities only, never the flow.
    """

    m: int = 10
    h: int = 48
    w: int = 64
    shape: str = "rectangle"  # "rectangle" or "disk"
    size: tuple[int, int] = (16, 16)  # rectangle (height, width); disk (radius, radius)
    position: tuple[int, int] = (24, 20)  # initial center (row, col)
    object_velocity: tuple[int, int] = (1, 2)  # (rows, cols) per frame
    background_velocity: tuple[int, int] = (0, 0)
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least 2 frames")
        if self.shape not in ("rectangle", "disk"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if tuple(self.object_velocity) == tuple(self.background_velocity):
            raise ValueError("object velocity must differ from background velocity")


# ---------------------------------------------------------------------------
# .flo read/write
# ---------------------------------------------------------------------------

def read_flo(path) -> np.ndarray:
    """Read one Middlebury .flo plane; returns float32 (h, w, 2)."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedFileError(f"{path}: shorter than the 12-byte header")
    (magic,) = struct.unpack("<f", data[:4])
    if magic != np.float32(FLO_MAGIC):
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    w, h = struct.unpack("<ii", data[4:12])
    if w <= 0 or h <= 0:
        raise TruncatedFileError(f"{path}: nonsense dimensions {w}x{h}")
    need = h * w * 2 * 4
    payload = data[12:]
    if len(payload) < need:
        raise TruncatedFileError(
            f"{path}: payload {len(payload)} bytes, header promises {need}"
        )
    plane = np.frombuffer(payload[:need], dtype="<f4").reshape(h, w, 2)
    return plane.copy()


def write_flo(plane: np.ndarray, path) -> None:
    """Write one flow plane as .flo; read_flo(write_flo(p)) is bit-exact."""
    plane = np.asarray(plane)
    if plane.ndim != 3 or plane.shape[2] != 2:
        raise DimensionMismatchError(f"expected (h,w,2) plane, got {plane.shape}")
    if not np.isfinite(plane).all():
        raise ValueError("refusing to write non-finite flow values")
    h, w = plane.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(np.ascontiguousarray(plane, dtype="<f4").tobytes())


# ---------------------------------------------------------------------------
# PPM / PGM
# ---------------------------------------------------------------------------

def _read_pnm_header(data: bytes, magic: bytes):
    """Parse a binary PNM header, tolerating comments; returns (w, h, offset)."""
    if not data.startswith(magic):
        raise BadMagicError(f"expected {magic!r} header, got {data[:2]!r}")
    fields = []
    i = len(magic)
    while len(fields) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise TruncatedFileError("PNM header ended early")
        fields.append(int(data[i:j]))
        i = j
    i += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"only 8-bit PNM supported, got maxval {maxval}")
    return w, h, i


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 image; returns float64 (h, w, 3) in [0, 1]."""
    data = Path(path).read_bytes()
    w, h, off = _read_pnm_header(data, b"P6")
    need = h * w * 3
    if len(data) - off < need:
        raise TruncatedFileError(f"{path}: payload shorter than {need} bytes")
    raw = np.frombuffer(data[off : off + need], dtype=np.uint8).reshape(h, w, 3)
    return raw.astype(np.float64) / 255.0


def write_ppm(img: np.ndarray, path) -> None:
    """Write (h, w, 3) intensities in [0, 1] as binary P6."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatchError(f"expected (h,w,3) image, got {img.shape}")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(raw.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 image; returns float64 (h, w) in [0, 1]."""
    data = Path(path).read_bytes()
    w, h, off = _read_pnm_header(data, b"P5")
    need = h * w
    if len(data) - off < need:
        raise TruncatedFileError(f"{path}: payload shorter than {need} bytes")
    raw = np.frombuffer(data[off : off + need], dtype=np.uint8).reshape(h, w)
    return raw.astype(np.float64) / 255.0


def write_pgm(img: np.ndarray, path) -> None:
    """Write (h, w) intensities in [0, 1] as binary P5."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionMismatchError(f"expected (h,w) image, got {img.shape}")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(raw.tobytes())


# ---------------------------------------------------------------------------
# directory-level load/save
# ---------------------------------------------------------------------------

def save_video(video: VideoVolume, frames_dir) -> None:
    d = Path(frames_dir)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(video.m):
        write_ppm(video.pixels[i], d / f"frame_{i:04d}.ppm")


def load_video(frames_dir) -> VideoVolume:
    d = Path(frames_dir)
    paths = sorted(d.glob("frame_*.ppm"))
    if len(paths) < 2:
        raise FileNotFoundError(f"{frames_dir}: found {len(paths)} frame_*.ppm files")
    return VideoVolume(np.stack([read_ppm(p) for p in paths]))


def save_flow(flow: FlowField, flow_dir) -> None:
    d = Path(flow_dir)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(flow.m - 1):
        write_flo(flow.forward[i], d / f"forward_{i:04d}.flo")
        write_flo(flow.backward[i], d / f"backward_{i:04d}.flo")


def load_flow(flow_dir) -> FlowField:
    d = Path(flow_dir)
    fwd_paths = sorted(d.glob("forward_*.flo"))
    bwd_paths = sorted(d.glob("backward_*.flo"))
    if not fwd_paths or len(fwd_paths) != len(bwd_paths):
        raise FileNotFoundError(
            f"{flow_dir}: {len(fwd_paths)} forward vs {len(bwd_paths)} backward .flo files"
        )
    fwd = np.stack([read_flo(p) for p in fwd_paths]).astype(np.float64)
    bwd = np.stack([read_flo(p) for p in bwd_paths]).astype(np.float64)
    return FlowField(fwd, bwd)


def save_masks(gt: GroundTruthMasks, gt_dir) -> None:
    d = Path(gt_dir)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(gt.masks.shape[0]):
        write_pgm(gt.masks[i].astype(np.float64), d / f"gt_{i:04d}.pgm")


def load_masks(gt_dir) -> GroundTruthMasks:
    d = Path(gt_dir)
    paths = sorted(d.glob("gt_*.pgm"))
    if not paths:
        raise FileNotFoundError(f"{gt_dir}: no gt_*.pgm files")
    planes = [np.rint(read_pgm(p)).astype(np.uint8) for p in paths]
    return GroundTruthMasks(np.stack(planes))


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

def _object_mask(spec: SynthSceneSpec, t: int) -> np.ndarray:
    cr = spec.position[0] + t * spec.object_velocity[0]
    cc = spec.position[1] + t * spec.object_velocity[1]
    rr, cc_grid = np.mgrid[0 : spec.h, 0 : spec.w]
    if spec.shape == "rectangle":
        hh, hw = spec.size[0] / 2.0, spec.size[1] / 2.0
        return (np.abs(rr - cr) <= hh) & (np.abs(cc_grid - cc) <= hw)
    r = spec.size[0]
    return (rr - cr) ** 2 + (cc_grid - cc) ** 2 <= r * r


def _check_in_frame(spec: SynthSceneSpec) -> None:
    for t in range(spec.m):
        cr = spec.position[0] + t * spec.object_velocity[0]
        cc = spec.position[1] + t * spec.object_velocity[1]
        if spec.shape == "rectangle":
            er, ec = spec.size[0] / 2.0, spec.size[1] / 2.0
        else:
            er = ec = spec.size[0]
        if cr - er < 0 or cr + er > spec.h - 1 or cc - ec < 0 or cc + ec > spec.w - 1:
            raise ObjectLeavesFrameError(
                f"object leaves the frame at t={t} (center {cr},{cc})"
            )


def synth_scene(spec: SynthSceneSpec):
    """Render a moving-object scene with exact flow and analytic masks.

    Forward flow equals the object velocity on object pixels and the
    background velocity elsewhere; backward flow is the negated velocity
    field evaluated on the destination frame. Returns
    (VideoVolume, FlowField, GroundTruthMasks).
    """
    _check_in_frame(spec)
    rng = np.random.default_rng(spec.seed)
    m, h, w = spec.m, spec.h, spec.w

    masks = np.stack([_object_mask(spec, t) for t in range(m)])

    # Textures: static background, object texture pinned to object-local
    # coordinates so appearance travels with the object.
    bg_base = np.array([0.30, 0.35, 0.40])
    obj_base = np.array([0.80, 0.65, 0.45])
    bg_tex = rng.uniform(-spec.noise, spec.noise, size=(h, w, 3))
    obj_tex = rng.uniform(-spec.noise, spec.noise, size=(h, w, 3))

    pixels = np.empty((m, h, w, 3))
    rr, cc = np.mgrid[0:h, 0:w]
    for t in range(m):
        frame = bg_base + bg_tex
        dr = t * spec.object_velocity[0]
        dc = t * spec.object_velocity[1]
        # object-local texture lookup (object never leaves the frame)
        loc_r = np.clip(rr - dr, 0, h - 1)
        loc_c = np.clip(cc - dc, 0, w - 1)
        obj_frame = obj_base + obj_tex[loc_r, loc_c]
        frame = np.where(masks[t][..., None], obj_frame, frame)
        pixels[t] = np.clip(frame, 0.0, 1.0)

    ov = spec.object_velocity
    bv = spec.background_velocity
    forward = np.empty((m - 1, h, w, 2))
    backward = np.empty((m - 1, h, w, 2))
    for t in range(m - 1):
        # (u, v) = (col, row) displacement
        forward[t, ..., 0] = np.where(masks[t], ov[1], bv[1])
        forward[t, ..., 1] = np.where(masks[t], ov[0], bv[0])
        backward[t, ..., 0] = np.where(masks[t + 1], -ov[1], -bv[1])
        backward[t, ..., 1] = np.where(masks[t + 1], -ov[0], -bv[0])

    video = VideoVolume(pixels)
    flow = FlowField(forward, backward)
    gt = GroundTruthMasks(masks.astype(np.uint8))
    return video, flow, gt
