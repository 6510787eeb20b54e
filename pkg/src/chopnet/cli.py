"""Command line interface: the whole workflow as one binary.

Subcommands mirror the pipeline order: chop a photograph, build a labeled
dataset, train the classifier, classify new photographs, evaluate region
accuracy, and serve the curation UI. Structured results are written to the
named output files (JSON, CSV, PNG); human-readable progress goes to
stderr. Exit codes: 0 success, 1 bad input or request, 2 internal failure
such as a diverged training run.
"""

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

from . import curation, mosaic, tiling
from .checkpoint import load_checkpoint
from .dataset import (
    MANIFEST_NAME,
    apply_reject_list,
    build_manifest,
    compute_channel_means,
    load_manifest,
    parse_reject_list,
    save_manifest,
    split,
)
from .errors import ChopnetError, ConfigError, InternalError
from .training import TrainingConfig, load_config, train, write_metrics_csv

PREPROCESS_NAME = "preprocess.json"

_CONFIG_KEYS = ("epochs", "batch_size", "solver", "base_lr", "lr_policy",
                "step_size_percent", "gamma", "momentum", "weight_decay",
                "seed", "snapshot_interval_epochs",
                "validation_interval_epochs")


def _progress(message):
    print(message, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; 2 is reserved for internal errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chopnet",
                     description="Chop photographs into overlapping tiles, "
                                 "train a tile classifier, and render "
                                 "classification mosaics.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    p = sub.add_parser("chop",
                       help="slice a photograph into overlapping tiles")
    p.add_argument("--image", required=True, help="source photograph")
    p.add_argument("--out-dir", required=True,
                   help="directory that receives one PNG per tile")
    p.add_argument("--tile-size", type=int, default=56,
                   help="tile side in pixels (default: 56)")
    p.add_argument("--overlap", type=float, default=0.5,
                   help="fraction of the tile shared with each neighbor "
                        "(default: 0.5)")
    p.set_defaults(func=cmd_chop)

    p = sub.add_parser("build-dataset",
                       help="chop labeled photographs into a train/val "
                            "dataset")
    p.add_argument("--source", action="append", required=True,
                   metavar="IMAGE:LABEL",
                   help="class-pure photograph and its class id; repeatable")
    p.add_argument("--dataset-dir", required=True,
                   help="output directory (manifest plus tiles/)")
    p.add_argument("--reject-list",
                   help="file of curated-away tile ids, one per line")
    p.add_argument("--val-fraction", type=float, default=0.25,
                   help="fraction of each class held out for validation "
                        "(default: 0.25)")
    p.add_argument("--seed", type=int, default=0,
                   help="split assignment seed (default: 0)")
    p.add_argument("--tile-size", type=int, default=56,
                   help="tile side in pixels (default: 56)")
    p.add_argument("--overlap", type=float, default=0.5,
                   help="fraction of the tile shared with each neighbor "
                        "(default: 0.5)")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="fit the tile classifier")
    p.add_argument("--dataset-dir", required=True,
                   help="dataset directory from build-dataset")
    p.add_argument("--config", help="key = value solver config file")
    p.add_argument("--out-dir", required=True,
                   help="directory for epoch snapshots and metrics.csv")
    d = TrainingConfig()
    for flag, kind, text in [
        ("--epochs", int, f"training epochs (default: {d.epochs})"),
        ("--batch-size", int, f"minibatch size (default: {d.batch_size})"),
        ("--solver", str, f"solver type (default: {d.solver})"),
        ("--base-lr", float, f"base learning rate (default: {d.base_lr})"),
        ("--lr-policy", str,
         f"learning rate policy (default: {d.lr_policy})"),
        ("--step-size-percent", float,
         f"epochs per rate step, as a percentage of the run "
         f"(default: {d.step_size_percent:g})"),
        ("--gamma", float,
         f"rate multiplier applied at each step (default: {d.gamma})"),
        ("--momentum", float, f"momentum (default: {d.momentum})"),
        ("--weight-decay", float,
         f"weight decay (default: {d.weight_decay})"),
        ("--seed", int,
         f"initialization and shuffling seed (default: {d.seed})"),
        ("--snapshot-interval-epochs", int,
         f"epochs between snapshots (default: "
         f"{d.snapshot_interval_epochs})"),
        ("--validation-interval-epochs", int,
         f"epochs between validation passes (default: "
         f"{d.validation_interval_epochs})"),
    ]:
        p.add_argument(flag, type=kind, default=argparse.SUPPRESS, help=text)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify",
                       help="color-code a photograph tile by tile")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--image", required=True, help="photograph to classify")
    p.add_argument("--out-overlay", required=True,
                   help="output overlay PNG path")
    p.add_argument("--out-predictions", required=True,
                   help="output predictions JSON path")
    p.add_argument("--min-confidence", type=float, default=0.0,
                   help="leave tiles below this confidence unmarked "
                        "(default: 0.0)")
    p.add_argument("--tile-size", type=int, default=None,
                   help="tile side in pixels (default: the checkpoint's "
                        "input size)")
    p.add_argument("--overlap", type=float, default=0.5,
                   help="fraction of the tile shared with each neighbor "
                        "(default: 0.5)")
    p.add_argument("--manifest",
                   help="dataset manifest supplying channel means "
                        "(default: preprocess.json next to the checkpoint)")
    p.add_argument("--channel-means", metavar="R,G,B",
                   help="preprocessing channel means, overriding any "
                        "manifest")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate",
                       help="region accuracy report from saved predictions")
    p.add_argument("--predictions", required=True,
                   help="predictions JSON from classify")
    p.add_argument("--regions", required=True,
                   help="JSON array of {name, label, rect: [x, y, w, h]}")
    p.add_argument("--samples", type=int, default=100,
                   help="tiles sampled per region (default: 100)")
    p.add_argument("--seed", type=int, default=0,
                   help="sampling seed (default: 0)")
    p.add_argument("--out-report", required=True,
                   help="output report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve",
                       help="run the local curation service and review UI")
    p.add_argument("--dataset-dir", required=True,
                   help="dataset directory to curate")
    p.add_argument("--host", default="127.0.0.1",
                   help="bind address (default: 127.0.0.1)")
    p.add_argument("--port", type=int, default=8000,
                   help="port (default: 8000)")
    p.add_argument("--ui-dir",
                   help="static review UI directory (default: the bundled "
                        "UI when present)")
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_chop(args) -> int:
    image = tiling.load_image(args.image)
    height, width = image.shape[:2]
    grid = tiling.plan_grid(width, height, args.tile_size, args.overlap)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    for tile in tiling.chop(image, grid):
        row, col = tile.index
        tiling.save_png(tile.pixels, out_dir / f"{stem}_r{row}_c{col}.png")
    print(f"{grid.cols} x {grid.rows} = {grid.tile_count} tiles")
    _progress(f"wrote {grid.tile_count} tiles to {out_dir}")
    return 0


def _parse_source(spec):
    path, sep, label = spec.rpartition(":")
    if not sep or not path:
        raise ConfigError(f"source {spec!r} must look like image.png:LABEL")
    try:
        return path, int(label)
    except ValueError:
        raise ConfigError(
            f"source {spec!r}: label {label!r} is not a class id") from None


def cmd_build_dataset(args) -> int:
    sources = [_parse_source(s) for s in args.source]
    dataset_dir = Path(args.dataset_dir)
    manifest = build_manifest(sources, dataset_dir,
                              tile_size=args.tile_size,
                              overlap_fraction=args.overlap)
    if args.reject_list:
        ids = parse_reject_list(Path(args.reject_list).read_text())
        applied, unknown = apply_reject_list(manifest, ids)
        _progress(f"rejected {applied} tiles from {args.reject_list}")
        if unknown:
            _progress(f"warning: {len(unknown)} reject ids match no tile")
    split(manifest, args.val_fraction, args.seed)
    manifest.channel_means = tuple(
        float(v) for v in compute_channel_means(manifest, dataset_dir))
    save_manifest(manifest, dataset_dir / MANIFEST_NAME)
    counts = Counter(r.split for r in manifest.records)
    _progress(f"wrote {len(manifest.records)} tiles to {dataset_dir} "
              f"({counts['train']} train, {counts['val']} val, "
              f"{counts['none']} rejected)")
    return 0


def cmd_train(args) -> int:
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS
                 if hasattr(args, k)}
    if args.config:
        config = load_config(args.config, overrides)
    else:
        config = TrainingConfig(**overrides)
    dataset_dir = Path(args.dataset_dir)
    manifest = load_manifest(dataset_dir / MANIFEST_NAME)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params, history, snapshots = train(manifest, dataset_dir, config,
                                       out_dir=out_dir, log=_progress)
    write_metrics_csv(history, out_dir / "metrics.csv")
    means = manifest.channel_means
    if means is None:
        means = compute_channel_means(manifest, dataset_dir)
    sidecar = {
        "channel_means": [float(v) for v in means],
        "tile_size": manifest.tile_size,
        "overlap_fraction": manifest.overlap_fraction,
    }
    (out_dir / PREPROCESS_NAME).write_text(json.dumps(sidecar) + "\n")
    _progress(f"wrote {len(snapshots)} snapshots and metrics.csv "
              f"to {out_dir}")
    return 0


def _resolve_means(args):
    if args.channel_means:
        parts = args.channel_means.split(",")
        try:
            means = tuple(float(v) for v in parts)
        except ValueError:
            raise ConfigError(
                f"--channel-means {args.channel_means!r} is not R,G,B"
            ) from None
        if len(means) != 3:
            raise ConfigError("--channel-means needs exactly three values")
        return means
    if args.manifest:
        manifest = load_manifest(args.manifest)
        if manifest.channel_means is None:
            raise ConfigError(
                f"{args.manifest} has no channel means; rebuild the "
                f"dataset or pass --channel-means")
        return manifest.channel_means
    sidecar = Path(args.checkpoint).parent / PREPROCESS_NAME
    if sidecar.is_file():
        doc = json.loads(sidecar.read_text())
        return tuple(float(v) for v in doc["channel_means"])
    raise ConfigError(
        "channel means not found: pass --channel-means or --manifest, or "
        f"keep {PREPROCESS_NAME} next to the checkpoint")


def cmd_classify(args) -> int:
    params = load_checkpoint(args.checkpoint)
    image = tiling.load_image(args.image)
    means = _resolve_means(args)
    pmap = mosaic.classify_image(params, image, means,
                                 tile_size=args.tile_size,
                                 overlap_fraction=args.overlap)
    overlay = mosaic.render_overlay(image, pmap,
                                    min_confidence=args.min_confidence)
    tiling.save_png(overlay, args.out_overlay)
    mosaic.save_predictions(pmap, args.out_predictions)
    _progress(f"classified {len(pmap)} tiles "
              f"({pmap.grid.cols} x {pmap.grid.rows})")
    return 0


def cmd_evaluate(args) -> int:
    pmap = mosaic.load_predictions(args.predictions)
    regions = mosaic.load_regions(args.regions)
    report = mosaic.evaluate_regions(pmap, regions,
                                     samples_per_region=args.samples,
                                     seed=args.seed)
    mosaic.write_report(report, args.out_report)
    _progress(f"evaluated {len(regions)} regions, "
              f"{args.samples} samples each")
    return 0


def cmd_serve(args) -> int:
    ui_dir = args.ui_dir
    if ui_dir is None:
        bundled = Path(__file__).parent / "ui"
        if bundled.is_dir():
            ui_dir = bundled
    _progress(f"serving {args.dataset_dir} "
              f"on http://{args.host}:{args.port}")
    try:
        curation.run_server(args.dataset_dir, host=args.host,
                            port=args.port, ui_dir=ui_dir)
    except SystemExit as exc:
        # uvicorn exits this way when it cannot bind the port
        code = exc.code if isinstance(exc.code, int) else 1
        return 1 if code else 0
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InternalError as exc:
        print(f"chopnet: error: {exc}", file=sys.stderr)
        return 2
    except ChopnetError as exc:
        print(f"chopnet: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"chopnet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
