"""chopnet: patch-based texture classification toolkit.

Chop large photographs into overlapping square tiles, curate the tiles,
train a small convolutional classifier, and render per-tile classification
mosaics over new images.
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
from .tiling import TileGrid, Tile, plan_grid, chop, tile_center  # noqa: F401
