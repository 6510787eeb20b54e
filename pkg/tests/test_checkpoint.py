"""Checkpoint serialization: bit-exact round-trips and corruption handling."""

import struct

import numpy as np
import pytest

from chopnet import network
from chopnet.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from chopnet.errors import (ArchMismatch, BadMagic, CheckpointError,
                            TruncatedFile, UnsupportedVersion)

CLASSES = ["POL", "TRA", "HYP", "NOM"]


def make_params(seed=0, input_size=16, names=CLASSES):
    arch = network.Architecture(input_size=input_size, input_channels=3,
                                num_classes=len(names))
    return network.init_params(arch, seed=seed, class_names=list(names))


def header_size(names):
    return 4 + 4 + 12 + sum(4 + len(n.encode("utf-8")) for n in names)


def test_round_trip_bit_exact(tmp_path):
    params = make_params(seed=7)
    path = tmp_path / "net.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.arch == params.arch
    assert loaded.class_names == params.class_names
    for key in network.LAYER_ORDER:
        assert loaded.tensors[key].dtype == np.float32
        assert loaded.tensors[key].tobytes() == params.tensors[key].tobytes()


def test_round_trip_casts_float64_to_float32(tmp_path):
    params = make_params(seed=3).astype(np.float64)
    path = tmp_path / "net.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    for key in network.LAYER_ORDER:
        expected = params.tensors[key].astype(np.float32)
        assert np.array_equal(loaded.tensors[key], expected)


def test_round_trip_utf8_class_names(tmp_path):
    params = make_params(names=["pöl", "трa", "hyp", "ノム"])
    path = tmp_path / "net.ckpt"
    save_checkpoint(params, path)
    assert load_checkpoint(path).class_names == ["pöl", "трa", "hyp", "ノム"]


def test_save_load_is_stable_across_calls(tmp_path):
    params = make_params(seed=11)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(params, a)
    save_checkpoint(params, b)
    assert a.read_bytes() == b.read_bytes()


def test_wrong_magic(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"JUNK"
    path.write_bytes(bytes(data))
    with pytest.raises(BadMagic):
        load_checkpoint(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", VERSION + 1)
    path.write_bytes(bytes(data))
    with pytest.raises(UnsupportedVersion):
        load_checkpoint(path)


def test_truncated_mid_tensor(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 100])
    with pytest.raises(TruncatedFile):
        load_checkpoint(path)


def test_truncated_in_header(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    path.write_bytes(path.read_bytes()[:10])
    with pytest.raises(TruncatedFile):
        load_checkpoint(path)


def test_empty_file(tmp_path):
    path = tmp_path / "net.ckpt"
    path.write_bytes(b"")
    with pytest.raises(TruncatedFile):
        load_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    path.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_expect_architecture_mismatch(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(input_size=16), path)
    with pytest.raises(ArchMismatch):
        load_checkpoint(path, expect=network.Architecture(input_size=56))
    loaded = load_checkpoint(path, expect=network.Architecture(input_size=16))
    assert loaded.arch.input_size == 16


def test_tampered_tensor_dims(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    data = bytearray(path.read_bytes())
    # first dim of conv1.w sits right after the rank u32
    offset = header_size(CLASSES) + 4
    assert struct.unpack_from("<I", data, offset)[0] == 20
    struct.pack_into("<I", data, offset, 21)
    path.write_bytes(bytes(data))
    with pytest.raises(ArchMismatch):
        load_checkpoint(path)


def test_unusable_header_architecture(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(make_params(), path)
    data = bytearray(path.read_bytes())
    # input_size field, directly after magic and version
    struct.pack_into("<I", data, 8, 7)
    path.write_bytes(bytes(data))
    with pytest.raises(ArchMismatch):
        load_checkpoint(path)


def test_magic_constant():
    assert MAGIC == b"CHOP"
    assert VERSION == 1
