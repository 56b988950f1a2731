"""Seeded multi-video synthetic corpora for sweeps and verification."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .flow_io import (
    FlowField,
    SynthSceneSpec,
    save_flow,
    save_masks,
    save_video,
    synth_scene,
)


def degrade_flow(flow: FlowField, level: float, seed: int) -> FlowField:
    """Simulate flow-estimator error: seeded uniform jitter of +-level px.

    The scene generator itself stays exact; this models the noise real flow
    networks introduce, which is what the feature projection has to absorb.
    """
    rng = np.random.default_rng(seed)
    return FlowField(
        flow.forward + rng.uniform(-level, level, flow.forward.shape),
        flow.backward + rng.uniform(-level, level, flow.backward.shape),
    )

_VELOCITIES = [(0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (-1, 1), (1, -1), (-1, -1)]


def make_scene_spec(m: int, h: int, w: int, seed: int) -> SynthSceneSpec:
    """One randomized in-frame scene; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    shape = "rectangle" if rng.integers(2) else "disk"

    # keep total displacement well inside the frame
    pool = [
        v
        for v in _VELOCITIES
        if (m - 1) * abs(v[0]) <= h // 3 and (m - 1) * abs(v[1]) <= w // 3
    ] or [(0, 1) if w >= h else (1, 0)]
    ov = pool[int(rng.integers(len(pool)))]
    bv_pool = [v for v in pool + [(0, 0)] if v != ov]
    bv = bv_pool[int(rng.integers(len(bv_pool)))]

    dr = (m - 1) * abs(ov[0])
    dc = (m - 1) * abs(ov[1])
    if shape == "rectangle":
        sh = int(rng.integers(max(3, h // 4), max(4, (h - dr) // 2)))
        sw = int(rng.integers(max(3, w // 4), max(4, (w - dc) // 2)))
        size = (sh, sw)
        er, ec = sh / 2.0, sw / 2.0
    else:
        cap = max(2, (min(h - dr, w - dc) - 3) // 2)
        lo = max(2, min(h, w) // 6)
        r = int(rng.integers(lo, max(lo + 1, cap)))
        size = (r, r)
        er = ec = float(r)

    # start position such that the object stays inside for all m frames
    r_lo = int(np.ceil(er)) + 1 + max(0, -(m - 1) * ov[0])
    r_hi = h - 2 - int(np.ceil(er)) - max(0, (m - 1) * ov[0])
    c_lo = int(np.ceil(ec)) + 1 + max(0, -(m - 1) * ov[1])
    c_hi = w - 2 - int(np.ceil(ec)) - max(0, (m - 1) * ov[1])
    if r_lo > r_hi or c_lo > c_hi:
        raise ValueError(
            f"cannot place a {size} {shape} with velocity {ov} in {h}x{w}x{m}"
        )
    pos = (int(rng.integers(r_lo, r_hi + 1)), int(rng.integers(c_lo, c_hi + 1)))

    return SynthSceneSpec(
        m=m,
        h=h,
        w=w,
        shape=shape,
        size=size,
        position=pos,
        object_velocity=ov,
        background_velocity=bv,
        noise=0.05,
        seed=seed,
    )


def make_corpus_specs(count: int, m: int, h: int, w: int, seed: int):
    return [make_scene_spec(m, h, w, seed * 1000 + i) for i in range(count)]


def generate_corpus(out_dir, specs) -> list:
    """Write video_%02d/{frames,flow,gt} trees; returns the video dirs."""
    out_dir = Path(out_dir)
    dirs = []
    for i, spec in enumerate(specs):
        vdir = out_dir / f"video_{i:02d}"
        video, flow, gt = synth_scene(spec)
        save_video(video, vdir / "frames")
        save_flow(flow, vdir / "flow")
        save_masks(gt, vdir / "gt")
        dirs.append(vdir)
    return dirs
