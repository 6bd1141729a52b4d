"""Command-line surface: train, restore, degrade, eval, mask, grid.

Exit codes are stable for scripting: 0 success, 2 usage/config errors,
1 runtime failures.
"""

import argparse
import logging
import os
import sys
import time

import numpy as np
import torch
import yaml

from . import data, dcp, imaging, metrics, physics, plotting, trainer

log = logging.getLogger("uwrestore")


class UsageError(Exception):
    """Bad invocation or configuration; maps to exit code 2."""


def _load_config(path):
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise UsageError(f"config file {path} must be a key-value mapping")
    return raw


def cmd_train(args):
    raw = _load_config(args.config)
    underwater_dir = raw.pop("underwater_dir", None)
    terrestrial_dir = raw.pop("terrestrial_dir", None)
    out_dir = raw.pop("out_dir", None)
    for name, value in (
        ("underwater_dir", underwater_dir),
        ("terrestrial_dir", terrestrial_dir),
        ("out_dir", out_dir),
    ):
        if not value:
            raise UsageError(f"config key {name!r} is required")
    try:
        cfg = trainer.TrainConfig.from_mapping(raw)
    except trainer.ConfigError as exc:
        raise UsageError(str(exc)) from exc
    for name, path in (
        ("underwater_dir", underwater_dir),
        ("terrestrial_dir", terrestrial_dir),
    ):
        if not os.path.isdir(path):
            raise UsageError(f"{name} does not exist: {path}")

    state = None
    if args.resume:
        if not os.path.exists(args.resume):
            raise UsageError(f"checkpoint not found: {args.resume}")
        state = trainer.load_checkpoint(args.resume)
        cfg = state.cfg
        log.info("resuming at epoch %d from %s", state.epoch, args.resume)

    dataset = data.UnpairedDataset.from_dirs(
        underwater_dir, terrestrial_dir, image_size=cfg.image_size
    )
    final = trainer.run(cfg, dataset, out_dir, state=state)
    print(final)
    return 0


def cmd_restore(args):
    if not os.path.exists(args.checkpoint):
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    if not os.path.isdir(args.input_dir):
        raise UsageError(f"input dir not found: {args.input_dir}")
    state = trainer.load_checkpoint(args.checkpoint)
    size = state.cfg.image_size
    state.f.eval()
    os.makedirs(args.output_dir, exist_ok=True)

    paths = imaging.list_images(args.input_dir)
    log_lines = []
    n_done = 0
    elapsed = 0.0
    for path in paths:
        stem = os.path.splitext(os.path.basename(path))[0]
        try:
            native = imaging.load_image(path, size=None)
        except imaging.ImageLoadError as exc:
            log.warning("skipping: %s", exc)
            log_lines.append(f"SKIP {path}: {exc}")
            continue
        h, w = native.shape[1:]
        batch = torch.from_numpy(imaging.resize_rgb(native, size, size))[None]
        start = time.perf_counter()
        with torch.no_grad():
            out = state.f(batch.to(state.device))
        elapsed += time.perf_counter() - start
        n_done += 1
        restored = imaging.resize_rgb(out.image[0].cpu().numpy(), h, w)
        imaging.save_image(restored, os.path.join(args.output_dir, f"{stem}.png"))
        d = out.decomposition
        if args.emit_depth:
            depth = plotting.depth_to_gray(d.depth[0].cpu().numpy())
            depth = np.clip(
                imaging.resize_rgb(np.repeat(depth, 3, axis=0), h, w)[:1], 0, 1
            )
            imaging.save_image(
                depth, os.path.join(args.output_dir, f"{stem}_depth.png")
            )
        if args.emit_backscatter:
            est = physics.estimate_backscatter(d.depth, d.t_b, d.b_inf)
            est = imaging.resize_rgb(est[0].clamp(0, 1).cpu().numpy(), h, w)
            imaging.save_image(
                est, os.path.join(args.output_dir, f"{stem}_backscatter.png")
            )
        log_lines.append(f"OK {path}")
    if n_done:
        fps = n_done / elapsed if elapsed > 0 else float("inf")
        log_lines.append(f"restored {n_done} images, {fps:.2f} FPS (model forward)")
    with open(os.path.join(args.output_dir, "restore_log.txt"), "w") as fh:
        fh.write("\n".join(log_lines) + "\n")
    return 0


def _build_depth(spec_str, height, width):
    if spec_str.startswith("constant:"):
        value = float(spec_str.split(":", 1)[1])
        if not physics.DEPTH_MIN <= value <= physics.DEPTH_MAX:
            raise UsageError(f"constant depth {value} outside [0, 6]")
        return np.full((1, height, width), value, dtype=np.float64)
    if spec_str == "gradient":
        ramp = np.linspace(physics.DEPTH_MIN, physics.DEPTH_MAX, height)
        return np.broadcast_to(ramp[None, :, None], (1, height, width)).copy()
    if spec_str.startswith("file:"):
        path = spec_str.split(":", 1)[1]
        gray = imaging.rgb_to_gray(imaging.load_image(path, size=None))
        if gray.shape[1:] != (height, width):
            gray = imaging.resize_rgb(np.repeat(gray, 3, axis=0), height, width)[:1]
        return gray * physics.DEPTH_MAX
    raise UsageError(
        f"bad depth spec {spec_str!r}; use constant:V, gradient, or file:PATH"
    )


def _depth_descriptor(spec_str):
    return spec_str if not spec_str.startswith("file:") else spec_str


def cmd_degrade(args):
    if not os.path.isdir(args.input_dir):
        raise UsageError(f"input dir not found: {args.input_dir}")
    if (args.params is None) == (args.sample is None):
        raise UsageError("exactly one of --params or --sample is required")
    fixed_params = None
    if args.params:
        with open(args.params) as fh:
            mapping = yaml.safe_load(fh)
        try:
            fixed_params = physics.DegradationParams.from_dict(mapping)
            fixed_params.validate()
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad params file {args.params}: {exc}") from exc
    rng = np.random.default_rng(args.sample) if args.sample is not None else None

    os.makedirs(args.output_dir, exist_ok=True)
    for path in imaging.list_images(args.input_dir):
        stem = os.path.splitext(os.path.basename(path))[0]
        try:
            clean = imaging.load_image(path, size=None)
        except imaging.ImageLoadError as exc:
            log.warning("skipping: %s", exc)
            continue
        h, w = clean.shape[1:]
        depth = _build_depth(args.depth, h, w)
        params = fixed_params if fixed_params is not None else data.sample_params(rng)
        t_d, t_b, b_inf = params.tensors(dtype=torch.float64)
        degraded = physics.degrade(
            torch.from_numpy(clean.astype(np.float64)),
            torch.from_numpy(depth),
            t_d,
            t_b,
            b_inf,
        )
        imaging.save_image(
            degraded.numpy(), os.path.join(args.output_dir, f"{stem}.png")
        )
        manifest = dict(params.to_dict(), depth=_depth_descriptor(args.depth))
        with open(os.path.join(args.output_dir, f"{stem}.yaml"), "w") as fh:
            yaml.safe_dump(manifest, fh, sort_keys=True)
    return 0


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_eval(args):
    if not os.path.isdir(args.input_dir):
        raise UsageError(f"input dir not found: {args.input_dir}")
    paired = args.restored_dir is not None
    if paired and not os.path.isdir(args.restored_dir):
        raise UsageError(f"restored dir not found: {args.restored_dir}")

    inputs = {os.path.basename(p): p for p in imaging.list_images(args.input_dir)}
    rows = []
    if paired:
        restored = {
            os.path.basename(p): p for p in imaging.list_images(args.restored_dir)
        }
        unpaired = sorted(set(inputs) ^ set(restored))
        for name in unpaired:
            log.warning("unpaired filename skipped: %s", name)
        names = sorted(set(inputs) & set(restored))
    else:
        names = sorted(inputs)

    for name in names:
        raw = imaging.load_image(inputs[name], size=None)
        if paired:
            rest = imaging.load_image(restored[name], size=None)
            if rest.shape != raw.shape:
                rest = imaging.resize_rgb(rest, raw.shape[1], raw.shape[2])
            row = {"filename": name}
            row.update(metrics.no_reference_row(rest))
            row.update(metrics.paired_row(raw, rest))
        else:
            row = {"filename": name}
            row.update(metrics.no_reference_row(raw))
        rows.append(row)

    fields = ["filename"] + list(metrics.NO_REFERENCE_FIELDS)
    if paired:
        fields += list(metrics.PAIRED_FIELDS)
    means = {"filename": "mean"}
    for key in fields[1:]:
        means[key] = float(np.mean([row[key] for row in rows])) if rows else 0.0

    os.makedirs(os.path.dirname(os.path.abspath(args.report)), exist_ok=True)
    import csv as _csv

    with open(args.report, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_format_value(row[k]) for k in fields])
        writer.writerow([_format_value(means[k]) for k in fields])

    fig_path = os.path.splitext(args.report)[0] + "_summary.png"
    plotting.save_metric_summary(rows, means, fig_path)
    print(f"wrote {args.report} ({len(rows)} rows) and {fig_path}")
    return 0


def cmd_mask(args):
    try:
        img = imaging.load_image(args.input, size=None)
    except imaging.ImageLoadError as exc:
        raise UsageError(str(exc)) from exc
    dcp_map = dcp.dcp_map(img)
    mask = dcp.darkest_mask(dcp_map, fraction=args.fraction, cap=args.cap)
    imaging.save_image(dcp_map, f"{args.output_prefix}_dcp.png")
    imaging.save_image(mask.astype(np.float64), f"{args.output_prefix}_mask.png")
    imaging.save_image(img * mask, f"{args.output_prefix}_overlay.png")
    return 0


def cmd_grid(args):
    filename_sets = {}
    for directory in args.dirs:
        if not os.path.isdir(directory):
            raise UsageError(f"directory not found: {directory}")
        filename_sets[directory] = {
            os.path.basename(p) for p in imaging.list_images(directory)
        }
    reference = filename_sets[args.dirs[0]]
    problems = []
    for directory, names in filename_sets.items():
        missing = sorted(reference - names)
        extra = sorted(names - reference)
        if missing or extra:
            problems.append(f"{directory}: missing={missing} extra={extra}")
    if problems:
        raise UsageError("directories do not share filenames: " + "; ".join(problems))

    columns = sorted(reference)
    rows = [
        [
            imaging.load_image(os.path.join(directory, name), size=args.cell_size)
            for name in columns
        ]
        for directory in args.dirs
    ]
    grid = plotting.compose_grid(rows, cell_size=args.cell_size)
    imaging.save_image(grid, args.output)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uwrestore",
        description="Physics-based unsupervised underwater image restoration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore a directory of underwater images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--emit-depth", action="store_true")
    p.add_argument("--emit-backscatter", action="store_true")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("degrade", help="synthesize underwater images")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--params", help="YAML file with the nine coefficients")
    p.add_argument("--sample", type=int, help="draw per-image coefficients (seed)")
    p.add_argument(
        "--depth",
        default="gradient",
        help="depth source: constant:V, gradient, or file:PATH",
    )
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("eval", help="metric report over a directory")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--restored-dir")
    p.add_argument("--report", required=True, help="output CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mask", help="dark-channel diagnostics for one image")
    p.add_argument("--input", required=True)
    p.add_argument("--output-prefix", required=True)
    p.add_argument("--fraction", type=float, default=0.01)
    p.add_argument("--cap", type=int, default=10000)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("grid", help="side-by-side comparison grid")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--output", required=True)
    p.add_argument("--cell-size", type=int, default=256)
    p.set_defaults(func=cmd_grid)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - unexpected runtime failure
        log.exception("command failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())
