"""The independent archive and graph writers against the format contract.

The quantization package is the other implementation of these formats, so
the strongest checks here are cross-implementation: bytes written by this
package must load there, and byte-for-byte match what its own writer emits.
"""

import struct

import numpy as np
import pytest

import mpcq
from zoo_export.archive import pack_archive, save_archive, sha256_file
from zoo_export.graphdoc import GraphNode, render_document


def test_pack_archive_golden_bytes():
    t = np.array([[1.0, -2.0]], dtype=np.float32)
    blob = pack_archive({"t": t})
    expect = b"MPCT" + struct.pack("<I", 1) + struct.pack("<Q", 1)
    expect += struct.pack("<I", 1) + b"t" + struct.pack("<BB", 0, 2)
    expect += struct.pack("<QQ", 1, 2) + t.tobytes()
    assert blob == expect


def test_entries_sorted_by_name_not_insertion():
    a = np.zeros(3, dtype=np.float32)
    b = np.ones(2, dtype=np.int8)
    assert pack_archive({"b": b, "a": a}) == pack_archive({"a": a, "b": b})


def test_cross_read_by_quantizer_package(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "conv.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "codes": rng.integers(-1, 2, size=(4, 8)).astype(np.int8),
        "bits": np.array([6], dtype=np.int32),
    }
    path = str(tmp_path / "x.mpct")
    save_archive(tensors, path)
    loaded = mpcq.load_archive(path)
    assert sorted(loaded) == sorted(tensors)
    for name in tensors:
        assert loaded[name].dtype == tensors[name].dtype
        np.testing.assert_array_equal(loaded[name], tensors[name])


def test_bytes_match_quantizer_writer(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {
        "z.w": rng.standard_normal((2, 5)).astype(np.float32),
        "z.b": rng.standard_normal(2).astype(np.float32),
        "n": np.array([3, -7], dtype=np.int32),
    }
    theirs = str(tmp_path / "a.mpct")
    mpcq.save_archive(tensors, theirs)
    assert pack_archive(tensors) == open(theirs, "rb").read()


def test_rejects_unsupported_dtypes():
    with pytest.raises(ValueError, match="float64"):
        pack_archive({"t": np.zeros(2, dtype=np.float64)})
    with pytest.raises(ValueError, match="t"):
        pack_archive({"t": np.zeros(2, dtype=np.int16)})


def test_non_contiguous_input_ok():
    base = np.arange(12, dtype=np.float32).reshape(3, 4)
    view = base[:, ::2]
    blob = pack_archive({"v": view})
    assert blob == pack_archive({"v": np.ascontiguousarray(view)})


def test_sha256_file_stable(tmp_path):
    p = str(tmp_path / "x.mpct")
    save_archive({"a": np.arange(4, dtype=np.float32)}, p)
    first = sha256_file(p)
    save_archive({"a": np.arange(4, dtype=np.float32)}, p)
    assert sha256_file(p) == first
    assert len(first) == 64


def test_rendered_document_parses_back():
    nodes = [
        GraphNode("c1", "conv2d", ["input"],
                  {"weight": "c1.w", "stride": "2", "padding": "3"}),
        GraphNode("b1", "bn", ["c1"],
                  {"gamma": "b1.g", "beta": "b1.b", "mean": "b1.m", "var": "b1.v"}),
        GraphNode("r1", "relu", ["b1"]),
        GraphNode("p1", "maxpool", ["r1"], {"kernel": "3", "stride": "2"}),
        GraphNode("fl", "flatten", ["p1"]),
        GraphNode("fc", "linear", ["fl"], {"weight": "fc.w", "bias": "fc.b"}),
    ]
    doc = render_document((3, 224, 224), nodes, "fc", header="demo model")
    g = mpcq.parse_graph(doc)
    assert [n.id for n in g.nodes] == ["c1", "b1", "r1", "p1", "fl", "fc"]
    assert g.output == "fc"
    assert g.input_shape == (3, 224, 224)
    assert g.by_id["c1"].attrs["stride"] == 2
    assert g.by_id["p1"].attrs["stride"] == 2


def test_rendered_document_omits_defaults():
    nodes = [GraphNode("c", "conv2d", ["input"], {"weight": "c.w"}),
             GraphNode("g", "avgpool", ["c"])]
    doc = render_document((3, 8, 8), nodes, "g")
    assert "stride" not in doc and "kernel" not in doc
    parsed = mpcq.parse_graph(doc)
    assert parsed.by_id["c"].attrs["stride"] == 1
    assert parsed.by_id["g"].attrs["kernel"] == 0  # global pool
