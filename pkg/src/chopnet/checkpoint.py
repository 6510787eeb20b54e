"""Versioned binary serialization of network parameters.

Format (little-endian throughout):

    magic   4 bytes  b"CHOP"
    version u32      currently 1
    header  input_size u32, input_channels u32, num_classes u32,
            then num_classes class names, each a u32 byte length
            followed by UTF-8 bytes
    body    for each layer in LAYER_ORDER: rank u32, dims u32[rank],
            raw float32 values in row-major order

Round-trips are bit-exact for float32 tensors.
"""

import struct

import numpy as np

from .errors import (ArchMismatch, BadMagic, CheckpointError,
                     InvalidArchitecture, TruncatedFile, UnsupportedVersion)
from .network import LAYER_ORDER, Architecture, NetworkParams, tensor_shapes

MAGIC = b"CHOP"
VERSION = 1


def save_checkpoint(params: NetworkParams, path) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    arch = params.arch
    chunks.append(struct.pack("<III", arch.input_size, arch.input_channels,
                              arch.num_classes))
    for name in params.class_names:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
    for key in LAYER_ORDER:
        arr = np.ascontiguousarray(params.tensors[key], dtype=np.float32)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(
                f"needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, expect: Architecture | None = None) -> NetworkParams:
    """Load params from a checkpoint file.

    If expect is given, the header architecture must match it exactly
    (ArchMismatch otherwise).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    version = reader.u32()
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {VERSION}")
    input_size = reader.u32()
    input_channels = reader.u32()
    num_classes = reader.u32()
    class_names = []
    for _ in range(num_classes):
        length = reader.u32()
        raw = reader.take(length)
        try:
            class_names.append(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: malformed class name: {exc}")
    try:
        arch = Architecture(input_size=input_size,
                            input_channels=input_channels,
                            num_classes=num_classes)
    except InvalidArchitecture as exc:
        raise ArchMismatch(f"{path}: header architecture unusable: {exc}")
    if expect is not None and arch != expect:
        raise ArchMismatch(f"{path}: checkpoint is {arch}, expected {expect}")

    shapes = tensor_shapes(arch)
    tensors = {}
    for key in LAYER_ORDER:
        rank = reader.u32()
        dims = tuple(reader.u32() for _ in range(rank))
        if dims != shapes[key]:
            raise ArchMismatch(
                f"{path}: tensor {key} has shape {dims}, header architecture "
                f"implies {shapes[key]}")
        count = int(np.prod(dims)) if dims else 1
        raw = reader.take(4 * count)
        tensors[key] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if reader.pos != len(data):
        raise CheckpointError(
            f"{path}: {len(data) - reader.pos} trailing bytes after tensors")
    return NetworkParams(arch=arch, class_names=class_names, tensors=tensors)
