"""Command line front end: simulate / reconstruct / train / eval / flowviz.

Every run is reproducible: the seed is mandatory where randomness exists, the
effective configuration is echoed into each report, and file outputs are
byte-identical across reruns (and across SPIKEFLOW_THREADS settings).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import reconstruct as recon
from .evaluate import (EvalReport, FloFormatError, aee, flow_to_color, read_flo,
                       report_json, write_flo, write_image, write_pgm)
from .model import SpikeFlowModel
from .simulate import CameraConfig, SceneSpec, ground_truth_flow, simulate
from .stream import SpkFormatError, read_spk, write_spk
from .training import TrainConfig, predict_flow, train
from .util import thread_cap

def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


# training config file keys (key=value lines) and the TrainConfig fields they set
CONFIG_KEYS = {
    "lambda": ("smoothness_weight", float),
    "lr": ("lr", float),
    "iters": ("iters", int),
    "batch": ("batch", int),
    "L": ("window_length", int),
    "D_s": ("short_half", int),
    "D_l": ("long_half", int),
    "K": ("orders", int),
    "seed": ("seed", int),
    "dt": ("dt", int),
    "fusion_mode": ("fusion_mode", str),
    "eval_every": ("eval_every", int),
    "taus": ("taus", int),
    "channels": ("channels", int),
    "dilations": ("dilations", _int_tuple),
    "kernel": ("kernel", int),
    "head_lr_scale": ("head_lr_scale", float),
}

RECON_METHODS = ("window-short", "window-long", "interval-1", "interval-2", "fused")


def _parse_pair(text: str, name: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"{name} must be 'X,Y', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} components must be numbers, got {text!r}")


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"size must be 'HxW', got {text!r}")
    try:
        height, width = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"size components must be integers, got {text!r}")
    return height, width


def load_config_file(path) -> dict:
    """Parse key=value lines; unknown keys are an error."""
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r} "
                             f"(known: {', '.join(sorted(CONFIG_KEYS))})")
        field, cast = CONFIG_KEYS[key]
        overrides[field] = cast(value)
    return overrides


def _scene_from_args(args, seed: int) -> SceneSpec:
    return SceneSpec(kind=args.kind, height=args.size[0], width=args.size[1],
                     velocity=args.velocity, spin=args.spin,
                     brightness=args.brightness, seed=seed,
                     fg_velocity=args.fg_velocity, fg_radius=args.fg_radius)


def _add_scene_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kind", choices=("translate", "rotate", "two_layer"),
                        default="translate")
    parser.add_argument("--velocity", type=lambda s: _parse_pair(s, "velocity"),
                        default=(0.1, -0.05), help="pixels per frame, 'VX,VY'")
    parser.add_argument("--spin", type=float, default=0.0, help="radians per frame (rotate)")
    parser.add_argument("--size", type=_parse_size, default=(32, 32), help="'HxW'")
    parser.add_argument("--brightness", type=lambda s: _parse_pair(s, "brightness"),
                        default=(0.15, 0.95), help="normalized intensity range 'LO,HI'")
    parser.add_argument("--fg-velocity", type=lambda s: _parse_pair(s, "fg-velocity"),
                        default=(0.0, 0.0))
    parser.add_argument("--fg-radius", type=float, default=0.0)
    parser.add_argument("--frames", type=int, default=400)
    parser.add_argument("--noise", choices=("deterministic", "poisson"),
                        default="deterministic")
    parser.add_argument("--substeps", type=int, default=1)
    parser.add_argument("--theta", type=float, default=1.0)
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=1.0)


def _write_manifest(path, entries: dict) -> None:
    lines = [f"{key}={value}" for key, value in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_manifest(path) -> dict:
    entries = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if line and "=" in line:
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def _scene_from_manifest(entries: dict) -> SceneSpec:
    def pair(key):
        vx, vy = entries[key].split(",")
        return float(vx), float(vy)

    return SceneSpec(kind=entries["kind"],
                     height=int(entries["height"]), width=int(entries["width"]),
                     velocity=pair("velocity"), spin=float(entries.get("spin", 0.0)),
                     brightness=pair("brightness"), seed=int(entries["seed"]),
                     fg_velocity=pair("fg_velocity") if "fg_velocity" in entries else (0.0, 0.0),
                     fg_radius=float(entries.get("fg_radius", 0.0)))


def _cmd_simulate(args) -> int:
    thread_cap()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = _scene_from_args(args, args.seed)
    camera = CameraConfig(threshold=args.theta, conversion_rate=args.alpha,
                          period=args.delta, noise_mode=args.noise, seed=args.seed)
    stream = simulate(scene, camera, frames=args.frames, substeps=args.substeps)
    write_spk(stream, out_dir / "scene.spk")

    t0 = args.t0 if args.t0 is not None else (args.frames - args.dt) // 2
    truth = ground_truth_flow(scene, t0, t0 + args.dt)
    write_flo(truth.flow, out_dir / "flow.flo")
    _write_manifest(out_dir / "manifest.txt", {
        "kind": scene.kind,
        "velocity": f"{scene.velocity[0]},{scene.velocity[1]}",
        "seed": scene.seed,
        "theta": camera.threshold,
        "alpha": camera.conversion_rate,
        "delta": camera.period,
        "frames": args.frames,
        "height": scene.height,
        "width": scene.width,
        "brightness": f"{scene.brightness[0]},{scene.brightness[1]}",
        "spin": scene.spin,
        "fg_velocity": f"{scene.fg_velocity[0]},{scene.fg_velocity[1]}",
        "fg_radius": scene.fg_radius,
        "noise": camera.noise_mode,
        "substeps": args.substeps,
        "t0": t0,
        "dt": args.dt,
    })
    print(f"wrote {out_dir / 'scene.spk'}, flow.flo, manifest.txt")
    return 0


def _cmd_reconstruct(args) -> int:
    stream = read_spk(args.infile)
    if not 0 <= args.t < stream.length:
        raise ValueError(f"--t {args.t} outside stream of length {stream.length}")
    cfg = recon.ReconConfig(short_half=args.d_short, long_half=args.d_long)
    if args.method == "window-short":
        image = recon.window_estimate(stream, args.t, cfg.short_half)
    elif args.method == "window-long":
        image = recon.window_estimate(stream, args.t, cfg.long_half)
    elif args.method == "interval-1":
        image, _ = recon.interval_estimate(stream, args.t, 1)
    elif args.method == "interval-2":
        image, _ = recon.interval_estimate(stream, args.t, 2)
    else:
        estimates, validity = recon.estimate_stack(stream, args.t, cfg)
        image = recon.fuse_stack(estimates, validity, np.full(cfg.terms, 1.0 / cfg.terms))
    write_pgm(image, args.out)
    print(f"wrote {args.out}")
    return 0


def _build_train_config(args) -> TrainConfig:
    settings = load_config_file(args.config) if args.config else {}
    for flag, field in (("seed", "seed"), ("dt", "dt"), ("iters", "iters"), ("lr", "lr"),
                        ("batch", "batch"), ("smoothness", "smoothness_weight"),
                        ("window_length", "window_length"), ("fusion_mode", "fusion_mode"),
                        ("eval_every", "eval_every")):
        value = getattr(args, flag)
        if value is not None:
            settings[field] = value
    if "seed" not in settings:
        raise ValueError("a seed is required: pass --seed or set seed= in the config file")
    return TrainConfig(**settings)


def _load_data_dir(path):
    data_dir = Path(path)
    stream = read_spk(data_dir / "scene.spk")
    manifest = _read_manifest(data_dir / "manifest.txt") if (data_dir / "manifest.txt").exists() else {}
    scene = _scene_from_manifest(manifest) if "kind" in manifest else None
    return stream, scene, manifest


def _cmd_train(args) -> int:
    thread_cap()
    cfg = _build_train_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.data:
        streams, references = [], []
        for path in args.data:
            stream, scene, _ = _load_data_dir(path)
            streams.append(stream)
            references.append(scene)
    else:
        scene = _scene_from_args(args, args.seed)
        camera = CameraConfig(noise_mode=args.noise, seed=args.seed)
        streams = [simulate(scene, camera, frames=args.frames, substeps=args.substeps)]
        references = [scene]

    def progress(entry):
        aee_part = f" aee={entry['aee']:.4f}" if "aee" in entry else ""
        print(f"iter {entry['iter']:5d} loss={entry['loss']:.6f}{aee_part}", file=sys.stderr)

    result = train(streams, cfg, references=references, progress=progress)
    ckpt_path = out_dir / "checkpoint.spkw"
    result.model.save(ckpt_path, extra_meta={"dt": cfg.dt, "seed": cfg.seed,
                                             "iters": cfg.iters})
    report = {
        "config": result.config,
        "final_loss": result.final_loss,
        "final_aee": result.final_aee,
        "history": result.history,
    }
    (out_dir / "report.json").write_text(report_json(report))
    print(f"wrote {ckpt_path} and report.json")
    return 0


def _cmd_eval(args) -> int:
    model, meta = SpikeFlowModel.load(args.checkpoint)
    dt = args.dt if args.dt is not None else int(meta.get("dt", 10))
    report = EvalReport(config={"checkpoint": str(args.checkpoint), "dt": dt,
                                "t0": args.t0, "seed": meta.get("seed")})
    for path in args.data:
        stream, _, manifest = _load_data_dir(path)
        reference = read_flo(Path(path) / "flow.flo")
        t0 = args.t0 if args.t0 is not None else int(manifest.get("t0", (stream.length - dt) // 2))
        predicted = predict_flow(model, stream, t0, dt)
        report.add_scene(Path(path).name, aee(predicted, reference),
                         n_valid=predicted.u.size, n_total=predicted.u.size)
    text = report_json(report)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_flowviz(args) -> int:
    flow = read_flo(args.flo)
    image = flow_to_color(flow, max_magnitude=args.max_magnitude)
    write_image(image, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikeflow",
                                     description="Spike-camera simulation, intensity "
                                                 "reconstruction, and unsupervised optical flow")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a synthetic scene to .spk + ground-truth .flo")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--dt", type=int, default=10)
    p_sim.add_argument("--t0", type=int, default=None)
    _add_scene_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="reconstruct intensity at one frame to PGM")
    p_rec.add_argument("--in", dest="infile", required=True)
    p_rec.add_argument("--t", type=int, required=True)
    p_rec.add_argument("--method", choices=RECON_METHODS, default="fused")
    p_rec.add_argument("--out", required=True)
    p_rec.add_argument("--d-short", type=int, default=40)
    p_rec.add_argument("--d-long", type=int, default=100)
    p_rec.set_defaults(func=_cmd_reconstruct)

    p_train = sub.add_parser("train", help="train the flow model on spike streams")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--config", default=None, help="key=value training config file")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--dt", type=int, default=None, choices=(10, 20))
    p_train.add_argument("--iters", type=int, default=None)
    p_train.add_argument("--lr", type=float, default=None)
    p_train.add_argument("--batch", type=int, default=None)
    p_train.add_argument("--smoothness", type=float, default=None)
    p_train.add_argument("--window-length", dest="window_length", type=int, default=None)
    p_train.add_argument("--fusion-mode", dest="fusion_mode",
                         choices=("learned", "windows", "intervals"), default=None)
    p_train.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p_train.add_argument("--data", nargs="*", default=None,
                         help="directories from `simulate`; omit to synthesize a scene")
    _add_scene_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint against ground-truth flow")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", nargs="+", required=True)
    p_eval.add_argument("--dt", type=int, default=None)
    p_eval.add_argument("--t0", type=int, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_viz = sub.add_parser("flowviz", help="render a .flo file with the Middlebury color map")
    p_viz.add_argument("--flo", required=True)
    p_viz.add_argument("--out", required=True)
    p_viz.add_argument("--max-magnitude", type=float, default=None)
    p_viz.set_defaults(func=_cmd_flowviz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, SpkFormatError, FloFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
