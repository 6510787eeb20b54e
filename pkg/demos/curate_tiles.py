# Curate a tile dataset: flag impurity tiles, export the reject list, and
# rebuild the splits without them. The interactive way to do this is
# `chopnet serve --dataset-dir ...` plus the browser UI; this script walks
# the same state machine directly so the bookkeeping is visible.

from pathlib import Path

import numpy as np

from chopnet import tiling
from chopnet.curation import CurationStore
from chopnet.dataset import (DEFAULT_CLASSES, MANIFEST_NAME,
                             apply_reject_list, build_manifest,
                             compute_channel_means, load_manifest,
                             parse_reject_list, save_manifest, split)

out_dir = Path("demo_output/curate")
rng = np.random.default_rng(3)

# Two tiny sources. The second one gets a contaminated corner: a patch of
# class-0 color inside a class-1 image, the kind of tile a curator drops.
clean = np.clip(rng.normal((190, 60, 60), 14, (64, 64, 3)), 0, 255)
dirty = np.clip(rng.normal((60, 190, 60), 14, (64, 64, 3)), 0, 255)
dirty[40:, 40:] = clean[40:, 40:]
tiling.save_png(clean.astype(np.uint8), out_dir / "pure.png")
tiling.save_png(dirty.astype(np.uint8), out_dir / "mixed.png")

ds = out_dir / "dataset"
manifest = build_manifest([(out_dir / "pure.png", 0),
                           (out_dir / "mixed.png", 1)],
                          ds, tile_size=16, overlap_fraction=0.5,
                          classes=DEFAULT_CLASSES[:2])
split(manifest, 0.25, seed=0)
manifest.channel_means = tuple(
    float(v) for v in compute_channel_means(manifest, ds))
save_manifest(manifest, ds / MANIFEST_NAME)
print(f"dataset: {len(manifest.records)} tiles")

# The curation store is what the HTTP service wraps: decisions append to
# dataset/curation.log and replay on the next startup, latest wins.
store = CurationStore(ds)
contaminated = [r.tile_id for r in store.records
                if r.tile_id.startswith("mixed_") and r.row >= 5
                and r.col >= 5]
for tile_id in contaminated:
    store.decide(tile_id, rejected=True)
print(f"rejected {len(contaminated)} contaminated tiles")

# Changing your mind is one more decision, not an edit of history.
store.decide(contaminated[0], rejected=False)

export = store.export_rejects()
(out_dir / "rejects.txt").write_text(export)
print(f"export has {len(export.splitlines())} tile ids")

# A fresh store over the same directory sees the same state: the log is
# the durable record, the manifest file itself was never rewritten.
replayed = CurationStore(ds)
assert replayed.export_rejects() == export

# Feeding the export back into the dataset builder is what makes the
# rejection durable dataset state: those tiles leave both splits.
manifest = load_manifest(ds / MANIFEST_NAME)
applied, unknown = apply_reject_list(manifest,
                                     parse_reject_list(export))
split(manifest, 0.25, seed=0)
manifest.channel_means = tuple(
    float(v) for v in compute_channel_means(manifest, ds))
save_manifest(manifest, ds / MANIFEST_NAME)
usable = sum(1 for r in manifest.records if not r.rejected)
print(f"rebuilt splits: {applied} rejected, {usable} usable tiles")
