"""End-to-end exports: manifest invariants, determinism, CLI, handoff."""

import hashlib

import numpy as np
import pytest
import torch

import mpcq
import mpcq.cli
import zoo_export as zoo
from zoo_export.cli import main as cli_main
from zoo_export.models import ResNet56, build_model


def test_manifest_matches_source_model(exported):
    manifest, model_path, graph_path = exported("resnet56")
    model, _ = build_model("resnet56")
    assert manifest.model == "resnet56"
    assert manifest.input_shape == (3, 32, 32)
    assert manifest.param_count == sum(p.numel() for p in model.parameters())
    assert manifest.param_count == 855770  # the reference resnet56 parameter count

    g = mpcq.parse_graph(open(graph_path).read())
    assert manifest.node_ids == tuple(n.id for n in g.nodes)

    weights = mpcq.load_archive(model_path)
    assert set(manifest.layer_map.values()) <= set(weights)
    module_paths = {name for name, _ in model.named_modules()}
    assert set(manifest.layer_map) <= module_paths

    digest = hashlib.sha256(open(model_path, "rb").read()).hexdigest()
    assert manifest.archive_sha256 == digest


def test_exported_graph_is_channel_consistent(exported):
    _, model_path, graph_path = exported("resnet56")
    g = mpcq.parse_graph(open(graph_path).read())
    mpcq.check_channels(g, mpcq.load_archive(model_path))


def test_reexport_is_bit_identical(exported, tmp_path):
    manifest, _, _ = exported("resnet56")
    again = zoo.export_model("resnet56", str(tmp_path / "m.mpct"),
                             str(tmp_path / "g.txt"))
    assert again.archive_sha256 == manifest.archive_sha256
    assert again.node_ids == manifest.node_ids


def test_seed_changes_the_checksum(exported, tmp_path):
    manifest, _, _ = exported("resnet56")
    other = zoo.export_model("resnet56", str(tmp_path / "m.mpct"),
                             str(tmp_path / "g.txt"), seed=1)
    assert other.archive_sha256 != manifest.archive_sha256


def test_unknown_model_lists_families():
    with pytest.raises(zoo.UnsupportedModelError) as exc:
        zoo.export_model("resnet34", "x.mpct", "x.txt")
    msg = str(exc.value)
    for family in zoo.SUPPORTED_MODELS:
        assert family in msg


def test_checkpoint_export_round_trips(tmp_path):
    torch.manual_seed(42)
    source = ResNet56().eval()
    state = str(tmp_path / "ckpt.pt")
    torch.save(source.state_dict(), state)

    mp, gp = str(tmp_path / "m.mpct"), str(tmp_path / "g.txt")
    manifest = zoo.export_model("resnet56", mp, gp, state_path=state)
    seeded = zoo.export_model("resnet56", str(tmp_path / "m2.mpct"),
                              str(tmp_path / "g2.txt"))
    assert manifest.archive_sha256 != seeded.archive_sha256

    g = mpcq.parse_graph(open(gp).read())
    weights = mpcq.load_archive(mp)
    x = np.random.default_rng(3).standard_normal((4, 3, 32, 32)).astype(np.float32)
    with torch.no_grad():
        ref = source(torch.from_numpy(x)).numpy()
    np.testing.assert_allclose(mpcq.final_output(g, weights, x), ref, atol=1e-5)


def test_quantizer_accepts_exported_model(exported, tmp_path):
    _, model_path, graph_path = exported("resnet56")
    out = str(tmp_path / "q.mpct")
    rc = mpcq.cli.main(["quantize", "--model", model_path, "--graph", graph_path,
                        "--out", out])
    assert rc == 0
    quantized = mpcq.load_archive(out)
    assert any(name.endswith(".codes") for name in quantized)
    assert any(name.endswith(".coeff") for name in quantized)

    rc = mpcq.cli.main(["eval", "--model", model_path, "--graph", graph_path,
                        "--probes", "2"])
    assert rc == 0


# command line


def test_cli_export_prints_manifest(tmp_path, capsys):
    argv = ["export", "--model", "resnet56",
            "--out-model", str(tmp_path / "m.mpct"),
            "--out-graph", str(tmp_path / "g.txt")]
    assert cli_main(argv) == 0
    out = capsys.readouterr().out
    assert "model=resnet56" in out
    assert "params=855770" in out
    sha = [l for l in out.splitlines() if l.startswith("sha256=")][0]
    assert len(sha.split("=")[1]) == 64

    assert cli_main(["export", "--model", "resnet56",
                     "--out-model", str(tmp_path / "m2.mpct"),
                     "--out-graph", str(tmp_path / "g2.txt")]) == 0
    assert sha in capsys.readouterr().out  # deterministic re-export


def test_cli_unknown_model_exits_2(tmp_path, capsys):
    rc = cli_main(["export", "--model", "alexnet",
                   "--out-model", str(tmp_path / "m.mpct"),
                   "--out-graph", str(tmp_path / "g.txt")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "error:" in err and "resnet18" in err and "vgg16" in err


def test_cli_usage_errors_exit_1(tmp_path, capsys):
    assert cli_main(["export", "--model", "resnet56"]) == 1  # missing outputs
    assert cli_main([]) == 1  # no command
    assert cli_main(["--help"]) == 0
    capsys.readouterr()


def test_cli_data_export_validation(tmp_path, capsys):
    base = ["--out-model", str(tmp_path / "m.mpct"),
            "--out-graph", str(tmp_path / "g.txt"),
            "--out-data", str(tmp_path / "d.mpct")]
    rc = cli_main(["export", "--model", "resnet56"] + base)
    assert rc == 2
    assert "data-dir" in capsys.readouterr().err

    rc = cli_main(["export", "--model", "resnet18"] + base
                  + ["--data-dir", str(tmp_path)])
    assert rc == 2
    assert "resnet56" in capsys.readouterr().err

    rc = cli_main(["export", "--model", "resnet56"] + base
                  + ["--data-dir", str(tmp_path / "nowhere")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
