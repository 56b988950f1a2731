"""Command-line surface.

Subcommands: synth, segment, ike, oracle, sweep-q, metrics. Exit codes:
0 success, 1 runtime failure, 2 usage or validation error. Options can come
from a flat ``key = value`` config file (--config); explicit flags win.

Heavy imports happen inside the command handlers so --threads can cap the
BLAS worker pool before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

DEFAULTS = {
    "p": 5,
    "q": 1,
    "sigma_t": 2.0,
    "lam": "auto",
    "tol": 1e-6,
    "max_iters": 20,
    "init": "uniform",
    "seed": 42,
    "bias": "on",
    "standardize": "on",
    "init_file": None,
    "tau": 0.5,
    "cycles": 3,
    "network_cmd": None,
    "network_timeout": 1800.0,
    "threads": 0,
    "count": 1,
    "m": 10,
    "h": 48,
    "w": 64,
    "k": 6,
    "perturb": 0.0,
    "q_list": "0,1,2",
}


class CliError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


def _add_solver_opts(sp):
    sp.add_argument("--p", type=int, help="propagation radius in frames")
    sp.add_argument("--q", type=int, help="feature half-window in frames")
    sp.add_argument("--sigma-t", dest="sigma_t", type=float, help="temporal kernel bandwidth")
    sp.add_argument("--lambda", dest="lam", help="ridge strength, a float or 'auto'")
    sp.add_argument("--tol", type=float, help="step-norm stopping tolerance")
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--init", choices=["uniform", "constant", "gaussian", "file"])
    sp.add_argument("--init-file", dest="init_file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--bias", choices=["on", "off"], help="append an intercept column")
    sp.add_argument("--standardize", choices=["on", "off"])


def _add_common(sp):
    sp.add_argument("--config", help="flat key = value config file; flags win")
    sp.add_argument("--threads", type=int, help="cap internal worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stclust",
        description="Video object discovery by space-time spectral clustering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate synthetic scenes with flow and masks")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--h", type=int)
    sp.add_argument("--w", type=int)
    sp.add_argument("--seed", type=int)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("segment", help="segment one video from frames + flow")
    sp.add_argument("--frames", help="directory of frame_%%04d.ppm images")
    sp.add_argument("--flow", help="directory of forward/backward_%%04d.flo files")
    sp.add_argument("--out", required=True)
    sp.add_argument("--gt", help="optional directory of gt_%%04d.pgm masks")
    sp.add_argument("--tau", type=float, help="binarization threshold")
    sp.add_argument("--dump-diagnostics", action="store_true")
    _add_solver_opts(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("ike", help="graph/network knowledge-exchange cycles")
    sp.add_argument("--frames")
    sp.add_argument("--flow")
    sp.add_argument("--out", required=True)
    sp.add_argument("--gt")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--network-cmd", dest="network_cmd")
    sp.add_argument("--network-timeout", dest="network_timeout", type=float)
    sp.add_argument("--dump-diagnostics", action="store_true")
    _add_solver_opts(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_ike)

    sp = sub.add_parser(
        "oracle", help="verify the matrix-free solver against the dense spectrum"
    )
    sp.add_argument("--m", type=int, help="frames (default 5)")
    sp.add_argument("--h", type=int, help="height (default 16)")
    sp.add_argument("--w", type=int, help="width (default 16)")
    sp.add_argument("--k", type=int, help="eigenvalues to report")
    sp.add_argument("--perturb", type=float, help="relative Frobenius noise level")
    sp.add_argument("--dump-dir", help="write matrix + eigenvalue dumps here")
    _add_solver_opts(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("sweep-q", help="J Mean across feature half-window sizes")
    sp.add_argument("--corpus", required=True, help="directory of video_*/ workspaces")
    sp.add_argument("--q-list", dest="q_list", help="comma-separated q values")
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.add_argument("--tau", type=float)
    _add_solver_opts(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_sweep_q)

    sp = sub.add_parser("metrics", help="J Mean / MAE between mask directories")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", help="CSV output path")
    _add_common(sp)
    sp.set_defaults(func=cmd_metrics)

    return parser


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

def load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"--config: no such file: {path}")
    values = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def resolve(args, key, cast=None, default=None):
    """Flag value, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is None:
        val = getattr(args, "_config_values", {}).get(key)
    if val is None:
        val = DEFAULTS.get(key) if default is None else default
    if val is not None and cast is not None:
        try:
            val = cast(val)
        except (TypeError, ValueError) as exc:
            raise CliError(f"--{key.replace('_', '-')}: bad value {val!r}: {exc}")
    return val


def _apply_config_file(args, parser_keys) -> None:
    if getattr(args, "config", None):
        values = load_config_file(args.config)
        unknown = set(values) - set(parser_keys)
        if unknown:
            raise CliError(f"--config: unknown keys: {', '.join(sorted(unknown))}")
        args._config_values = values
    else:
        args._config_values = {}


def _solver_config(args):
    from .solver import SolverConfig

    lam_raw = resolve(args, "lam")
    if isinstance(lam_raw, str) and lam_raw.strip().lower() == "auto":
        lam = None
    else:
        try:
            lam = float(lam_raw)
        except (TypeError, ValueError):
            raise CliError(f"--lambda: expected a float or 'auto', got {lam_raw!r}")

    def onoff(key):
        v = resolve(args, key)
        if isinstance(v, bool):
            return v
        if str(v).lower() in ("on", "true", "1", "yes"):
            return True
        if str(v).lower() in ("off", "false", "0", "no"):
            return False
        raise CliError(f"--{key}: expected on/off, got {v!r}")

    cfg = SolverConfig(
        p=resolve(args, "p", int),
        q=resolve(args, "q", int),
        sigma_t=resolve(args, "sigma_t", float),
        lam=lam,
        tol=resolve(args, "tol", float),
        max_iters=resolve(args, "max_iters", int),
        init_mode=resolve(args, "init") or "uniform",
        seed=resolve(args, "seed", int),
        standardize=onoff("standardize"),
        bias=onoff("bias"),
        init_file=resolve(args, "init_file"),
    )
    try:
        return cfg.validate()
    except ValueError as exc:
        raise CliError(str(exc))


def _require_dir(args, key) -> Path:
    val = resolve(args, key)
    if not val:
        raise CliError(f"--{key.replace('_', '-')} is required")
    p = Path(val)
    if not p.is_dir():
        raise CliError(f"--{key.replace('_', '-')}: no such directory: {val}")
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .corpus import generate_corpus, make_corpus_specs

    out = Path(resolve(args, "out"))
    count = resolve(args, "count", int)
    if count < 1:
        raise CliError("--count must be >= 1")
    specs = make_corpus_specs(
        count,
        resolve(args, "m", int),
        resolve(args, "h", int),
        resolve(args, "w", int),
        resolve(args, "seed", int),
    )
    dirs = generate_corpus(out, specs)
    for d in dirs:
        print(d)
    return 0


def _load_flow_gt(args):
    from .flow_io import load_flow, load_masks

    flow_dir = _require_dir(args, "flow")
    try:
        flow = load_flow(flow_dir)
    except FileNotFoundError as exc:
        raise CliError(f"--flow: {exc}")
    gt = None
    if resolve(args, "gt"):
        gt = load_masks(_require_dir(args, "gt")).masks
        if gt.shape != (flow.m, flow.h, flow.w):
            raise CliError(f"--gt: masks {gt.shape} do not match flow {(flow.m, flow.h, flow.w)}")
    frames_dir = resolve(args, "frames")
    if frames_dir:
        from .flow_io import load_video

        video = load_video(_require_dir(args, "frames"))
        if (video.m, video.h, video.w) != (flow.m, flow.h, flow.w):
            raise CliError(
                f"--frames: video {(video.m, video.h, video.w)} does not match flow"
            )
    return flow, gt, frames_dir


def cmd_segment(args) -> int:
    from .masks import compute_metrics, to_masks, write_masks
    from .pipeline import segment_flow

    flow, gt, _ = _load_flow_gt(args)
    config = _solver_config(args)
    tau = resolve(args, "tau", float)
    out = Path(resolve(args, "out"))
    out.mkdir(parents=True, exist_ok=True)

    x, diag, _ = segment_flow(flow, config)
    seg = to_masks(x, flow.m, flow.h, flow.w, tau)
    write_masks(seg, out / "masks")
    if args.dump_diagnostics:
        diag.write_csv(out / "diagnostics.csv")
    line = (
        f"iterations={diag.iterations} converged={diag.converged} "
        f"negative_fraction={diag.negative_fraction:.4f}"
    )
    if gt is not None:
        report = compute_metrics(seg, gt)
        report.write_csv(out / "metrics.csv")
        line += f" jmean={report.jmean:.4f} mae={report.mae:.4f}"
    print(line)
    return 0


def cmd_ike(args) -> int:
    from .ike import NetworkInvocation, run_ike
    from .masks import write_masks

    flow, gt, frames_dir = _load_flow_gt(args)
    config = _solver_config(args)
    tau = resolve(args, "tau", float)
    cycles = resolve(args, "cycles", int)
    if cycles < 1:
        raise CliError("--cycles must be >= 1")
    out = Path(resolve(args, "out"))

    network = None
    cmd = resolve(args, "network_cmd")
    if cmd:
        if not frames_dir:
            raise CliError("--network-cmd needs --frames")
        network = NetworkInvocation(cmd, timeout=resolve(args, "network_timeout", float))

    final, state = run_ike(
        flow,
        config,
        out,
        cycles=cycles,
        network=network,
        frames_dir=frames_dir,
        tau=tau,
        gt=gt,
    )
    write_masks(final, out / "final_masks")
    for c, report in enumerate(state.metrics, start=1):
        if report is not None:
            print(f"cycle={c} jmean={report.jmean:.4f} mae={report.mae:.4f}")
    print(f"cycles={state.cycle} final_d={state.d}")
    return 0


def cmd_oracle(args) -> int:
    import dataclasses

    import numpy as np

    from .corpus import make_scene_spec
    from .feature_chains import build_feature_matrix
    from .flow_io import synth_scene
    from .ike import write_tensor
    from .masks import jmean as jmean_fn
    from .masks import to_masks
    from .oracle import (
        build_explicit,
        dense_power_iteration,
        perturbation_bound,
        reorder_by_mask,
        spectrum,
    )
    from .pipeline import base_feature_maps, build_context
    from .projection import auto_lambda, build_cache
    from .solver import sign_fix, solve

    m = resolve(args, "m", int, default=5)
    h = resolve(args, "h", int, default=16)
    w = resolve(args, "w", int, default=16)
    seed = resolve(args, "seed", int)
    config = _solver_config(args)
    # the equivalence check wants both routes fully converged
    if args.max_iters is None and "max_iters" not in args._config_values:
        config = dataclasses.replace(config, max_iters=200, tol=1e-13)

    spec = make_scene_spec(m, h, w, seed)
    _, flow, gt = synth_scene(spec)
    ctx = build_context(flow, config)
    maps = base_feature_maps(flow)
    F = build_feature_matrix(ctx.chains, maps, config.q, config.standardize, config.bias)
    lam = config.lam if config.lam is not None else auto_lambda(F)
    cache = build_cache(F, lam)
    x_imp, diag = solve(ctx.graph, F, cache, config)

    eg = build_explicit(ctx.graph, F, lam)
    dense = dense_power_iteration(eg.A, iters=2000, tol=1e-14, seed=seed)
    x_dense = sign_fix(dense.vector)
    cosine = float(abs(x_imp @ x_dense))

    k = resolve(args, "k", int)
    rep = spectrum(eg.A, k=min(k, eg.n))
    gt_flat = gt.masks.reshape(-1)
    seg = to_masks(x_imp, m, h, w, resolve(args, "tau", float))
    j = jmean_fn(seg.binary, gt.masks)

    print(f"n={eg.n} d={F.shape[1]} lambda={lam:.6g}")
    print(f"cosine={cosine:.12f} iterations={diag.iterations}")
    print("eigenvalues=" + ",".join(f"{v:.6g}" for v in rep.eigenvalues))
    print(f"eigengap={rep.eigengap:.6g} ratio={rep.ratio:.6g} jmean={j:.4f}")

    perturb = resolve(args, "perturb", float)
    if perturb and perturb > 0:
        rng = np.random.default_rng(seed + 7)
        E = rng.standard_normal(eg.A.shape)
        E = (E + E.T) / 2.0
        E *= perturb * np.linalg.norm(eg.A, "fro") / np.linalg.norm(E, "fro")
        prep = perturbation_bound(eg.A, E)
        noisy = dense_power_iteration(eg.A + E, iters=2000, tol=1e-14, seed=seed)
        angle = float(np.arccos(min(1.0, abs(noisy.vector @ dense.vector))))
        print(
            f"perturbation: e_norm={prep.e_norm:.6g} a_norm={prep.a_norm:.6g} "
            f"epsilon={prep.epsilon:.6g} rotation={angle:.6g}"
        )

    if args.dump_dir:
        dump = Path(args.dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        ordered, _ = reorder_by_mask(eg.A, gt_flat)
        write_tensor(ordered.astype(np.float32), dump / "feature_motion_matrix.stgt")
        with open(dump / "eigenvalues.csv", "w") as f:
            f.write("rank,eigenvalue\n")
            for i, v in enumerate(rep.eigenvalues, start=1):
                f.write(f"{i},{v!r}\n")

    return 0 if cosine >= 1.0 - 1e-6 else 1


def cmd_sweep_q(args) -> int:
    import dataclasses

    from .flow_io import load_flow, load_masks
    from .masks import jmean as jmean_fn
    from .masks import to_masks
    from .pipeline import segment_flow

    corpus = _require_dir(args, "corpus")
    videos = sorted(d for d in corpus.glob("video_*") if d.is_dir())
    if not videos:
        raise CliError(f"--corpus: no video_*/ directories under {corpus}")
    try:
        q_values = [int(s) for s in str(resolve(args, "q_list")).split(",") if s.strip()]
    except ValueError as exc:
        raise CliError(f"--q-list: {exc}")
    if not q_values:
        raise CliError("--q-list is empty")

    config = _solver_config(args)
    tau = resolve(args, "tau", float)
    rows = []
    for qv in q_values:
        scores = []
        for vdir in videos:
            flow = load_flow(vdir / "flow")
            gt = load_masks(vdir / "gt").masks
            cfg = dataclasses.replace(config, q=qv)
            x, _, _ = segment_flow(flow, cfg)
            seg = to_masks(x, flow.m, flow.h, flow.w, tau)
            scores.append(jmean_fn(seg.binary, gt))
        rows.append((qv, sum(scores) / len(scores)))

    lines = ["q,jmean"] + [f"{qv},{score!r}" for qv, score in rows]
    text = "\n".join(lines) + "\n"
    if resolve(args, "out"):
        Path(resolve(args, "out")).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_metrics(args) -> int:
    import numpy as np

    from .flow_io import read_pgm
    from .masks import MetricsReport, per_frame_iou

    def load_dir(kind):
        d = _require_dir(args, kind)
        for pattern in ("mask_*.pgm", "gt_*.pgm", "*.pgm"):
            paths = sorted(d.glob(pattern))
            if paths:
                return np.stack([read_pgm(p) for p in paths]), d
        raise CliError(f"--{kind}: no .pgm masks under {d}")

    pred_soft, pred_dir = load_dir("pred")
    gt_soft, _ = load_dir("gt")
    if pred_soft.shape != gt_soft.shape:
        raise CliError(f"prediction {pred_soft.shape} vs gt {gt_soft.shape}")

    soft_paths = sorted(pred_dir.glob("soft_*.pgm"))
    if len(soft_paths) == pred_soft.shape[0]:
        pred_for_mae = np.stack([read_pgm(p) for p in soft_paths])
    else:
        pred_for_mae = pred_soft

    gt_bin = gt_soft >= 0.5
    pred_bin = pred_soft >= 0.5
    iou, empty = per_frame_iou(pred_bin, gt_bin)
    frame_mae = np.abs(pred_for_mae - gt_bin.astype(np.float64)).mean(axis=(1, 2))
    report = MetricsReport(
        jmean=float(iou.mean()),
        mae=float(frame_mae.mean()),
        frame_iou=iou,
        frame_mae=frame_mae,
        empty_union=empty,
    )
    if resolve(args, "out"):
        report.write_csv(resolve(args, "out"))
    print(f"jmean={report.jmean:.6f} mae={report.mae:.6f}")
    return 0


# ---------------------------------------------------------------------------

def _cap_threads(argv) -> None:
    # must run before numpy is imported anywhere in this process
    for i, tok in enumerate(argv):
        n = None
        if tok == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif tok.startswith("--threads="):
            n = tok.split("=", 1)[1]
        if n and n.isdigit() and int(n) > 0:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, n)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _cap_threads(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    from .errors import StclustError

    try:
        keys = set(vars(args)) | set(DEFAULTS)
        _apply_config_file(args, keys)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except StclustError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
