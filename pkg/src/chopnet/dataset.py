"""Labeled tile datasets built from class-pure source photographs.

A dataset lives in one directory: a JSON Lines manifest plus a tiles/
subdirectory with one lossless PNG per tile, keyed by tile id. Tile ids are
deterministic ("{source stem}_r{row}_c{col}"), so rebuilding a dataset from
the same sources reproduces it byte for byte.

The train/validation split is stratified per class and assigned by a seeded
hash of the tile id; overlapping tiles from one photograph can therefore
land in both splits. That spatial leakage is inherent to splitting at tile
level and is deliberate here (see the user guide).
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tiling
from .errors import (
    DegenerateClass,
    DuplicateTileId,
    EmptyDataset,
    ImageTooSmall,
    LabelOutOfRange,
    ManifestError,
)

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "none")
MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str


DEFAULT_CLASSES = [
    ClassLabel(0, "POL"),
    ClassLabel(1, "TRA"),
    ClassLabel(2, "HYP"),
    ClassLabel(3, "NOM"),
]


@dataclass
class TileRecord:
    tile_id: str
    source_image: str
    row: int
    col: int
    x: int
    y: int
    size: int
    label: int
    split: str = "none"
    rejected: bool = False


@dataclass
class DatasetManifest:
    classes: list
    records: list = field(default_factory=list)
    seed: int | None = None
    tile_size: int = 56
    overlap_fraction: float = 0.5
    channel_means: tuple | None = None

    def class_names(self):
        return [c.name for c in self.classes]

    def usable_records(self):
        return [r for r in self.records if not r.rejected]


def validate_classes(classes):
    ids = [c.id for c in classes]
    if ids != list(range(len(classes))):
        raise ManifestError(f"class ids must be contiguous from 0, got {ids}")
    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        raise ManifestError(f"class names must be unique, got {names}")


def build_manifest(sources, dataset_dir, tile_size=56, overlap_fraction=0.5,
                   classes=None):
    """Chop every (image path, label id) source and persist the tiles.

    Writes {dataset_dir}/tiles/{tile_id}.png for every planned tile and
    returns a manifest with all records unsplit and unrejected. Source file
    stems must be unique because they key the tile ids.
    """
    classes = list(classes) if classes is not None else list(DEFAULT_CLASSES)
    validate_classes(classes)
    dataset_dir = Path(dataset_dir)
    tiles_dir = dataset_dir / "tiles"
    tiles_dir.mkdir(parents=True, exist_ok=True)

    known_labels = {c.id for c in classes}
    seen_stems = {}
    manifest = DatasetManifest(classes=classes, tile_size=tile_size,
                               overlap_fraction=overlap_fraction)
    for source, label in sources:
        source = Path(source)
        if label not in known_labels:
            raise LabelOutOfRange(
                f"{source}: label {label} not in class table "
                f"{[c.id for c in classes]}")
        stem = source.stem
        if stem in seen_stems:
            raise DuplicateTileId(
                f"sources {seen_stems[stem]} and {source} share the stem "
                f"{stem!r}; rename one to keep tile ids unique")
        seen_stems[stem] = source

        image = tiling.load_image(source)
        height, width = image.shape[:2]
        try:
            grid = tiling.plan_grid(width, height, tile_size, overlap_fraction)
        except ImageTooSmall:
            raise ImageTooSmall(
                f"{source}: image {width}x{height} is smaller than the "
                f"tile size {tile_size}") from None
        for tile in tiling.chop(image, grid):
            row, col = tile.index
            tile_id = f"{stem}_r{row}_c{col}"
            tiling.save_png(tile.pixels, tiles_dir / f"{tile_id}.png")
            manifest.records.append(TileRecord(
                tile_id=tile_id, source_image=str(source), row=row, col=col,
                x=tile.origin[0], y=tile.origin[1], size=tile_size,
                label=label))
    return manifest


def apply_reject_list(manifest, reject_ids):
    """Mark listed tiles rejected (and unsplit). Unknown ids are tolerated.

    Returns (number of records marked, sorted list of unknown ids).
    """
    reject_ids = set(reject_ids)
    applied = 0
    known = set()
    for rec in manifest.records:
        if rec.tile_id in reject_ids:
            known.add(rec.tile_id)
            rec.rejected = True
            rec.split = "none"
            applied += 1
    unknown = sorted(reject_ids - known)
    return applied, unknown


def _assignment_key(seed, tile_id):
    return hashlib.sha256(f"{seed}:{tile_id}".encode()).hexdigest()


def split(manifest, val_fraction, seed):
    """Assign train/val stratified per class, deterministically from the seed.

    Per class, round(val_fraction * n) records go to validation and the rest
    to training; membership is a pure function of (seed, tile_id). Rejected
    records stay out entirely.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    usable = manifest.usable_records()
    if not usable:
        raise EmptyDataset("no usable (non-rejected) records to split")
    by_class = {c.id: [] for c in manifest.classes}
    for rec in usable:
        by_class[rec.label].append(rec)
    for c in manifest.classes:
        if not by_class[c.id]:
            raise DegenerateClass(
                f"class {c.id} ({c.name}) has no usable records")
    for recs in by_class.values():
        recs.sort(key=lambda r: (_assignment_key(seed, r.tile_id), r.tile_id))
        n_val = int(val_fraction * len(recs) + 0.5)
        for i, rec in enumerate(recs):
            rec.split = "val" if i < n_val else "train"
    manifest.seed = seed
    return manifest


def compute_channel_means(manifest, dataset_dir):
    """Per-channel mean of all train-split tile pixels, as floats in [0,255]."""
    tiles_dir = Path(dataset_dir) / "tiles"
    total = np.zeros(3, dtype=np.float64)
    count = 0
    for rec in manifest.records:
        if rec.split != "train":
            continue
        pixels = tiling.load_image(tiles_dir / f"{rec.tile_id}.png")
        total += pixels.reshape(-1, 3).sum(axis=0, dtype=np.float64)
        count += pixels.shape[0] * pixels.shape[1]
    if count == 0:
        raise EmptyDataset("train split is empty; run split() first")
    return total / count


def load_split_tiles(manifest, dataset_dir, split_name):
    """Load all tiles of one split into memory, in manifest record order.

    Returns (tiles uint8 array of shape (N, S, S, 3), labels int array).
    """
    tiles_dir = Path(dataset_dir) / "tiles"
    records = [r for r in manifest.records if r.split == split_name]
    if not records:
        raise EmptyDataset(f"split {split_name!r} is empty")
    size = manifest.tile_size
    tiles = np.empty((len(records), size, size, 3), dtype=np.uint8)
    labels = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        tiles[i] = tiling.load_image(tiles_dir / f"{rec.tile_id}.png")
        labels[i] = rec.label
    return tiles, labels


# --- persistence ---

def save_manifest(manifest, path):
    """Write the JSON Lines manifest: one header line, one line per record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "schema_version": SCHEMA_VERSION,
        "classes": [{"id": c.id, "name": c.name} for c in manifest.classes],
        "seed": manifest.seed,
        "tile_size": manifest.tile_size,
        "overlap_fraction": manifest.overlap_fraction,
        "channel_means": (list(manifest.channel_means)
                          if manifest.channel_means is not None else None),
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for rec in manifest.records:
            f.write(json.dumps({
                "tile_id": rec.tile_id,
                "source_image": rec.source_image,
                "row": rec.row,
                "col": rec.col,
                "x": rec.x,
                "y": rec.y,
                "size": rec.size,
                "label": rec.label,
                "split": rec.split,
                "rejected": rec.rejected,
            }) + "\n")


def load_manifest(path):
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        lines = f.readlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(
            f"{path}: unsupported schema_version "
            f"{header.get('schema_version')!r}")
    classes = [ClassLabel(c["id"], c["name"]) for c in header["classes"]]
    validate_classes(classes)
    means = header.get("channel_means")
    manifest = DatasetManifest(
        classes=classes,
        seed=header.get("seed"),
        tile_size=header["tile_size"],
        overlap_fraction=header["overlap_fraction"],
        channel_means=tuple(means) if means is not None else None,
    )
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj["split"] not in SPLITS:
            raise ManifestError(f"{path}: bad split {obj['split']!r}")
        manifest.records.append(TileRecord(**obj))
    return manifest


def parse_reject_list(text):
    """One tile id per line; blank lines and '#' comments are ignored."""
    ids = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            ids.add(line)
    return ids


def format_reject_list(tile_ids):
    lines = sorted(tile_ids)
    return "\n".join(lines) + ("\n" if lines else "")
