"""Overlapping square tiling of large images.

Images are numpy arrays of shape (height, width, 3), dtype uint8, row-major.
A grid plan is pure geometry; chopping extracts byte-exact pixel copies in
row-major tile order. Partial tiles that would overhang the image are
dropped, never padded, so every tile has the same shape; the uncovered
right/bottom margin is at most stride-1 pixels per axis.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    GridMismatch,
    ImageTooSmall,
    IndexOutOfGrid,
    InvalidOverlap,
    UnsupportedImage,
)

__all__ = ["TileGrid", "Tile", "plan_grid", "chop", "tile_center",
           "load_image", "save_png"]


@dataclass(frozen=True)
class TileGrid:
    tile_size: int
    overlap_fraction: float
    stride: int
    cols: int
    rows: int

    @property
    def tile_count(self):
        return self.cols * self.rows


@dataclass(frozen=True)
class Tile:
    index: tuple  # (row, col)
    origin: tuple  # (x, y) pixels
    pixels: np.ndarray  # (S, S, 3) uint8


def plan_grid(width, height, tile_size, overlap_fraction):
    """Plan the unique overlapping grid for an image of the given size.

    stride = round(tile_size * (1 - overlap_fraction)), half-up;
    cols = floor((width - tile_size) / stride) + 1 and likewise for rows.
    """
    if not 0 <= overlap_fraction < 1:
        raise InvalidOverlap(
            f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    if tile_size < 1:
        raise InvalidOverlap(f"tile_size must be >= 1, got {tile_size}")
    if width < tile_size or height < tile_size:
        raise ImageTooSmall(
            f"image {width}x{height} is smaller than tile size {tile_size}")
    stride = int(tile_size * (1 - overlap_fraction) + 0.5)
    if stride < 1:
        raise InvalidOverlap(
            f"overlap_fraction {overlap_fraction} gives stride < 1 "
            f"for tile size {tile_size}")
    cols = (width - tile_size) // stride + 1
    rows = (height - tile_size) // stride + 1
    return TileGrid(tile_size=tile_size, overlap_fraction=overlap_fraction,
                    stride=stride, cols=cols, rows=rows)


def chop(image, grid):
    """Cut the image into grid.rows x grid.cols tiles, row-major.

    Each tile's pixels are a copy of the source region, byte for byte.
    """
    height, width = image.shape[:2]
    expected = plan_grid(width, height, grid.tile_size, grid.overlap_fraction)
    if expected != grid:
        raise GridMismatch(
            f"grid {grid} was not planned for a {width}x{height} image")
    size, stride = grid.tile_size, grid.stride
    tiles = []
    for row in range(grid.rows):
        y = row * stride
        for col in range(grid.cols):
            x = col * stride
            pixels = np.ascontiguousarray(image[y:y + size, x:x + size])
            tiles.append(Tile(index=(row, col), origin=(x, y), pixels=pixels))
    return tiles


def tile_center(grid, index):
    """Center pixel (x, y) of the tile at (row, col); floor for odd sizes."""
    row, col = index
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise IndexOutOfGrid(
            f"index {index} outside grid of {grid.rows} rows x {grid.cols} cols")
    half = grid.tile_size // 2
    return (col * grid.stride + half, row * grid.stride + half)


def load_image(path):
    """Load an 8-bit PNG or JPEG as an (H, W, 3) uint8 array.

    Grayscale inputs are expanded to three identical channels. Higher bit
    depths and non-RGB color models (16-bit, CMYK, ...) are rejected.
    """
    with Image.open(path) as im:
        if im.mode in ("RGB",):
            arr = np.asarray(im)
        elif im.mode in ("L",):
            arr = np.asarray(im)
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        elif im.mode in ("RGBA", "LA", "P"):
            arr = np.asarray(im.convert("RGB"))
        else:
            raise UnsupportedImage(
                f"{path}: unsupported pixel mode {im.mode!r}; "
                "only 8-bit RGB or grayscale input is accepted")
    if arr.dtype != np.uint8:
        raise UnsupportedImage(f"{path}: not 8-bit samples ({arr.dtype})")
    return np.ascontiguousarray(arr)


def save_png(image, path):
    """Write an (H, W, 3) uint8 array as a lossless PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")
