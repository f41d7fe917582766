"""Command-line entry point.

Every subcommand accepts the shared flags (--seed, --checkpoint, --lambda,
--gop, --mode, --iters, --window, --out).  Reports are JSON objects, one per
line: per-frame lines carry frame, type, bits_y, bits_z, bits_g, bits_total,
mse, psnr, iterations, best_iter in that order.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .codec import DEFAULT_LAMBDAS, TrainSchedule, init_codec_params, train_end_to_end
from .evaluation import SyntheticSpec, bd_rate, dump_flow_visualization, gen_synthetic, psnr, synthetic_pairs
from .fileio import read_checkpoint, read_video, write_checkpoint, write_video
from .motion import FinetuneConfig, estimate_flow, evaluate_flow, finetune_flow, init_flow_params, write_mv_labels
from .online import GopConfig, OptConfig, WindowConfig, decode_sequence, encode_sequence

log = logging.getLogger("flowcodec")


def _emit(record: dict, stream=None) -> None:
    print(json.dumps(record), file=stream or sys.stdout, flush=True)


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise SystemExit(f"error: --{name.replace('_', '-')} is required for {args.command}")
    return value


def _opt_config(args) -> OptConfig:
    if args.iters is None:
        return OptConfig(seed=args.seed)
    return OptConfig(iterations=args.iters, seed=args.seed)


# ---------------------------------------------------------------- subcommands


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        width=args.size, height=args.size, frames=args.frames, motions=(tuple(args.motion),), texture_seed=args.seed
    )
    video, labels, _ = gen_synthetic(spec)
    out = Path(_need(args, "out"))
    write_video(out, video)
    write_mv_labels(out.with_suffix(".mvl"), labels)
    _emit({"video": str(out), "labels": str(out.with_suffix(".mvl")), "frames": args.frames, "size": args.size})
    return 0


def cmd_train_flow(args) -> int:
    n = args.iters if args.iters is not None else 2000
    train = synthetic_pairs(args.pairs, seed=args.seed, with_labels=True, size=args.size)
    held = synthetic_pairs(8, seed=args.seed + 1, with_labels=True, size=args.size)
    params = read_checkpoint(args.checkpoint) if args.checkpoint else init_flow_params(seed=args.seed)
    epe0, psnr0 = evaluate_flow(params, held)
    tuned = finetune_flow(params, train, FinetuneConfig(iterations=n, lr=args.lr, seed=args.seed))
    epe1, psnr1 = evaluate_flow(tuned, held)
    write_checkpoint(_need(args, "out"), tuned)
    _emit({"iterations": n, "epe_before": epe0, "epe_after": epe1, "warp_psnr_before": psnr0, "warp_psnr_after": psnr1})
    return 0


def cmd_train_codec(args) -> int:
    lam = args.lam if args.lam is not None else DEFAULT_LAMBDAS[0]
    if args.data:
        video = read_video(args.data)
        data = [(video[i + 1], video[i]) for i in range(len(video) - 1)]
    else:
        data = synthetic_pairs(args.pairs, seed=args.seed, size=args.size)
    flow = init_flow_params(seed=args.seed)
    if args.flow_checkpoint:
        flow = {k: v for k, v in read_checkpoint(args.flow_checkpoint).items() if k.startswith("flow.")}
    n = args.iters if args.iters is not None else 2000
    history: list[float] = []
    sched = TrainSchedule(iterations=n, lr=args.lr, milestones={int(0.75 * n): 0.3}, seed=args.seed)
    params = train_end_to_end(init_codec_params(seed=args.seed), flow, data, lam, sched, history)
    write_checkpoint(_need(args, "out"), params)
    _emit({"lambda": lam, "iterations": n, "loss_first": history[0] if history else None,
           "loss_last": history[-1] if history else None})
    return 0


def cmd_encode(args) -> int:
    params = read_checkpoint(_need(args, "checkpoint"))
    video = read_video(args.input)
    gop = GopConfig(intra_period=args.gop, lam=args.lam, frames=args.frames)
    data, reports, _ = encode_sequence(video, params, gop, args.mode, _opt_config(args), WindowConfig(args.window))
    Path(_need(args, "out")).write_bytes(data)
    for r in reports:
        print(r.log_line(), flush=True)
    return 0


def cmd_decode(args) -> int:
    params = read_checkpoint(_need(args, "checkpoint"))
    video = decode_sequence(Path(args.input).read_bytes(), params)
    write_video(_need(args, "out"), np.clip(video, 0.0, 1.0))
    _emit({"frames": len(video), "out": str(args.out)})
    return 0


def cmd_eval(args) -> int:
    """Per-frame PSNR of a decoded video against the original, plus the stream's rate."""
    ref, dec = read_video(args.original), read_video(args.decoded)
    n = min(len(ref), len(dec))
    values = [psnr(ref[i], dec[i]) for i in range(n)]
    for i, v in enumerate(values):
        _emit({"frame": i, "psnr": v})
    summary = {"frames": n, "psnr": float(np.mean(values))}
    if args.stream:
        bits = 8 * Path(args.stream).stat().st_size
        summary["bpp"] = bits / (n * ref.shape[2] * ref.shape[3])
    _emit(summary)
    return 0


def _read_curve(path):
    pts = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            pts.append((rec.get("bpp", rec.get("rate")), rec["psnr"]))
    return pts


def cmd_bdrate(args) -> int:
    _emit({"bd_rate": bd_rate(_read_curve(args.anchor), _read_curve(args.test))})
    return 0


def cmd_ablate(args) -> int:
    from .evaluation.ablation import run_ablation

    checkpoints = args.checkpoints or ([args.checkpoint] if args.checkpoint else [])
    datasets = {Path(p).stem: read_video(p) for p in args.inputs}
    values = [int(v) for v in args.values.split(",")] if args.values else None
    base = _opt_config(args)
    report = run_ablation(args.axis, datasets, checkpoints, values, GopConfig(args.gop, frames=args.frames), base,
                          window_iterations=args.iters)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for rec in report.records():
            _emit(rec, out)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_dump_flow(args) -> int:
    params = read_checkpoint(_need(args, "checkpoint"))
    video = read_video(args.input)
    i = args.frame
    if not 1 <= i < len(video):
        raise SystemExit(f"error: --frame must be in 1..{len(video) - 1}")
    flow = estimate_flow(video[i], video[i - 1], params).data
    dump_flow_visualization(flow, _need(args, "out"))
    _emit({"frame": i, "out": str(args.out), "max_magnitude": float(np.hypot(*flow).max())})
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--checkpoint", help="checkpoint file (FCKP)")
    shared.add_argument("--lambda", dest="lam", type=float, help="rate-distortion multiplier")
    shared.add_argument("--gop", type=int, default=12, help="intra period")
    shared.add_argument("--mode", choices=("none", "single", "window"), default="single")
    shared.add_argument("--iters", type=int, help="latent updates per frame (encode) or training steps")
    shared.add_argument("--window", type=int, default=4, help="window size for --mode window")
    shared.add_argument("--out", help="output path")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="flowcodec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", parents=[shared], help="render a translating test sequence and its MV labels")
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--motion", type=float, nargs=2, default=(1.25, -0.5), metavar=("DX", "DY"))
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train-flow", parents=[shared], help="fine-tune the flow network on synthetic MV labels")
    p.add_argument("--pairs", type=int, default=128)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_flow)

    p = sub.add_parser("train-codec", parents=[shared], help="train codec and flow network end to end")
    p.add_argument("--data", help="FVID video used as consecutive training pairs (default: synthetic pairs)")
    p.add_argument("--flow-checkpoint", help="initialise the flow network from this checkpoint")
    p.add_argument("--pairs", type=int, default=24)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_codec)

    p = sub.add_parser("encode", parents=[shared], help="code an FVID video into an FRDC stream")
    p.add_argument("input")
    p.add_argument("--frames", type=int)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[shared], help="decode an FRDC stream to FVID")
    p.add_argument("input")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[shared], help="PSNR (and rate) of a decoded video")
    p.add_argument("original")
    p.add_argument("decoded")
    p.add_argument("--stream", help="FRDC stream for the rate")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", parents=[shared], help="BD-rate between two curves given as JSON lines {bpp, psnr}")
    p.add_argument("anchor")
    p.add_argument("test")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("ablate", parents=[shared], help="sweep N or W over videos and checkpoints")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--axis", choices=("N", "W"), default="N")
    p.add_argument("--values", help="comma-separated sweep values (default: the standard sweep)")
    p.add_argument("--checkpoints", nargs="+", help="one checkpoint per lambda")
    p.add_argument("--frames", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dump-flow", parents=[shared], help="write the estimated flow of one frame as a PPM")
    p.add_argument("input")
    p.add_argument("--frame", type=int, default=1)
    p.set_defaults(func=cmd_dump_flow)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
