"""Test-time pipeline: tile classification, overlay rendering, regions.

A test photograph is chopped with the same grid geometry as training,
every tile is classified with a confidence, and the result is drawn back
over the photo as half-transparent colored circles at tile centers. A
region protocol samples tile centers inside labeled rectangles and
reports per-region and per-class accuracy.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import network
from .errors import (ArchMismatch, ConfigError, EmptyRegion, GridMismatch,
                     ImageTooSmall)
from .tiling import TileGrid, plan_grid, tile_center
from .training import preprocess

# POL blue, TRA red, HYP green, NOM white, at 50% alpha
DEFAULT_PALETTE = {
    0: (0, 0, 255, 128),
    1: (255, 0, 0, 128),
    2: (0, 255, 0, 128),
    3: (255, 255, 255, 128),
}


@dataclass
class PredictionMap:
    """Row-major per-tile predictions over a tile grid."""
    grid: TileGrid
    class_ids: np.ndarray
    confidences: np.ndarray
    probs: np.ndarray
    class_names: list = field(default_factory=list)

    def __len__(self):
        return len(self.class_ids)


@dataclass(frozen=True)
class RegionSpec:
    name: str
    label: int
    rect: tuple  # (x, y, w, h) pixels


def classify_image(params, image, channel_means, tile_size=None,
                   overlap_fraction=0.5, _block=256) -> PredictionMap:
    """Chop an image and classify every tile with the given network.

    Preprocessing matches training: (pixel - channel_mean) / 255. Tiles
    are classified in fixed-size blocks, so memory stays flat on large
    photographs.
    """
    if tile_size is None:
        tile_size = params.arch.input_size
    if tile_size != params.arch.input_size:
        raise ArchMismatch(
            f"network expects {params.arch.input_size}px tiles, "
            f"asked to chop {tile_size}px")
    image = np.asarray(image)
    height, width = image.shape[:2]
    grid = plan_grid(width, height, tile_size, overlap_fraction)
    n = grid.tile_count
    num_classes = params.arch.num_classes
    class_ids = np.empty(n, dtype=np.int64)
    confidences = np.empty(n, dtype=np.float32)
    probs = np.empty((n, num_classes), dtype=np.float32)
    s = grid.tile_size
    for start in range(0, n, _block):
        stop = min(start + _block, n)
        batch = np.empty((stop - start, s, s, 3), dtype=image.dtype)
        for i in range(start, stop):
            row, col = divmod(i, grid.cols)
            x, y = col * grid.stride, row * grid.stride
            batch[i - start] = image[y:y + s, x:x + s]
        _, p = network.forward(params, preprocess(batch, channel_means))
        probs[start:stop] = p
        class_ids[start:stop] = np.argmax(p, axis=1)
        confidences[start:stop] = p.max(axis=1)
    return PredictionMap(grid=grid, class_ids=class_ids,
                         confidences=confidences, probs=probs,
                         class_names=list(params.class_names))


def render_overlay(image, pmap: PredictionMap, palette=None, radius=None,
                   min_confidence=0.0):
    """Copy of image with a class-colored circle at each tile center.

    Circles are filled at the palette's alpha (default 50%), clipped at
    image edges; tiles below min_confidence are left unmarked.
    """
    if palette is None:
        palette = DEFAULT_PALETTE
    image = np.asarray(image)
    height, width = image.shape[:2]
    grid = pmap.grid
    expected = plan_grid(width, height, grid.tile_size,
                         grid.overlap_fraction)
    if expected != grid:
        raise GridMismatch(
            f"prediction grid {grid.cols}x{grid.rows} does not match a "
            f"{width}x{height} image chopped at size {grid.tile_size}")
    if radius is None:
        radius = grid.tile_size // 4
    base = Image.fromarray(image).convert("RGBA")
    layer = Image.new("RGBA", base.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(layer)
    for i in range(len(pmap)):
        if pmap.confidences[i] < min_confidence:
            continue
        cid = int(pmap.class_ids[i])
        try:
            color = palette[cid]
        except KeyError:
            raise ConfigError(f"no palette color for class {cid}")
        row, col = divmod(i, grid.cols)
        cx, cy = tile_center(grid, (row, col))
        draw.ellipse([cx - radius, cy - radius, cx + radius, cy + radius],
                     fill=tuple(color))
    out = Image.alpha_composite(base, layer).convert("RGB")
    return np.asarray(out)


def region_tile_indices(pmap: PredictionMap, region: RegionSpec):
    """Row-major indices of tiles whose center lies in region.rect.

    The rectangle is half-open: x <= cx < x + w and likewise for y.
    """
    x0, y0, w, h = region.rect
    grid = pmap.grid
    indices = []
    for i in range(len(pmap)):
        row, col = divmod(i, grid.cols)
        cx, cy = tile_center(grid, (row, col))
        if x0 <= cx < x0 + w and y0 <= cy < y0 + h:
            indices.append(i)
    if not indices:
        raise EmptyRegion(
            f"region {region.name!r} rect {region.rect} contains no tile "
            f"centers")
    return np.asarray(indices)


def evaluate_regions(pmap: PredictionMap, regions, samples_per_region=100,
                     seed=0):
    """Sample tile centers in each region and score against its label.

    Per region, samples_per_region centers are drawn uniformly with
    replacement (seeded) and the fraction predicted as the region label
    is reported. Per-class numbers pool the sampled draws of that class's
    regions; the exhaustive per-class fraction over all region tiles is
    reported alongside.
    """
    if samples_per_region < 1:
        raise ConfigError(
            f"samples_per_region must be >= 1, got {samples_per_region}")
    names = pmap.class_names or [
        str(c) for c in range(pmap.probs.shape[1])]
    per_region = []
    sampled = {}  # label -> [correct, total]
    exhaustive = {}
    for ri, region in enumerate(regions):
        indices = region_tile_indices(pmap, region)
        rng = np.random.default_rng(np.random.SeedSequence([seed, ri]))
        draws = indices[rng.integers(0, len(indices), samples_per_region)]
        correct = int((pmap.class_ids[draws] == region.label).sum())
        per_region.append({
            "name": region.name,
            "label": region.label,
            "accuracy": correct / samples_per_region,
            "samples": samples_per_region,
        })
        stats = sampled.setdefault(region.label, [0, 0])
        stats[0] += correct
        stats[1] += samples_per_region
        ex = exhaustive.setdefault(region.label, [0, 0])
        ex[0] += int((pmap.class_ids[indices] == region.label).sum())
        ex[1] += len(indices)
    def classname(label):
        return names[label] if 0 <= label < len(names) else str(label)
    return {
        "per_region": per_region,
        "per_class": {classname(lab): c / t
                      for lab, (c, t) in sorted(sampled.items())},
        "exhaustive": {classname(lab): c / t
                       for lab, (c, t) in sorted(exhaustive.items())},
    }


# --- JSON interchange ---

def parse_regions(data) -> list:
    """Regions from a parsed JSON array of {name, label, rect:[x,y,w,h]}."""
    if not isinstance(data, list):
        raise ConfigError("regions file must be a JSON array")
    regions = []
    for i, entry in enumerate(data):
        try:
            name = entry["name"]
            label = entry["label"]
            rect = entry["rect"]
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"region {i}: missing field {exc}")
        if not isinstance(label, int) or label < 0:
            raise ConfigError(f"region {i}: label must be a class id")
        if (not isinstance(rect, list) or len(rect) != 4
                or not all(isinstance(v, int) for v in rect)):
            raise ConfigError(f"region {i}: rect must be [x, y, w, h]")
        regions.append(RegionSpec(name=str(name), label=label,
                                  rect=tuple(rect)))
    return regions


def load_regions(path) -> list:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    return parse_regions(data)


def save_predictions(pmap: PredictionMap, path) -> None:
    grid = pmap.grid
    doc = {
        "grid": {
            "tile_size": grid.tile_size,
            "overlap_fraction": grid.overlap_fraction,
            "stride": grid.stride,
            "cols": grid.cols,
            "rows": grid.rows,
        },
        "class_names": list(pmap.class_names),
        "entries": [
            [int(pmap.class_ids[i]), float(pmap.confidences[i]),
             [float(v) for v in pmap.probs[i]]]
            for i in range(len(pmap))
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_predictions(path) -> PredictionMap:
    try:
        doc = json.loads(Path(path).read_text())
        g = doc["grid"]
        grid = TileGrid(tile_size=g["tile_size"],
                        overlap_fraction=g["overlap_fraction"],
                        stride=g["stride"], cols=g["cols"], rows=g["rows"])
        entries = doc["entries"]
        class_names = doc["class_names"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed predictions file: {exc}")
    if len(entries) != grid.tile_count:
        raise GridMismatch(
            f"{path}: {len(entries)} entries for a "
            f"{grid.cols}x{grid.rows} grid")
    class_ids = np.array([e[0] for e in entries], dtype=np.int64)
    confidences = np.array([e[1] for e in entries], dtype=np.float32)
    probs = np.array([e[2] for e in entries], dtype=np.float32)
    return PredictionMap(grid=grid, class_ids=class_ids,
                         confidences=confidences, probs=probs,
                         class_names=class_names)


def write_report(report, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
