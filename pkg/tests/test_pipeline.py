"""End-to-end pipeline and CLI behavior: archives in, reports out.

CLI tests call main(argv) in-process so exit codes and stdout are asserted
directly; files go through tmp_path.
"""

import numpy as np
import pytest

from conftest import TWO_CONV_DOC, two_conv_weights
from mpcq import (RunConfig, UniformQuant, compare_models, dequantize,
                  discover_pairs, gaussian_probes, load_archive,
                  materialize_weights, parse_graph, quantize_model,
                  save_archive)
from mpcq.cli import main


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.low_bits, cfg.high_bits) == (2, 6)
        assert (cfg.lambda1, cfg.lambda2) == (0.5, 0.0)
        assert cfg.jobs >= 1  # None resolves to cpu count

    @pytest.mark.parametrize("kwargs,fragment", [
        ({"low_bits": 0}, "low_bits"),
        ({"high_bits": 9}, "high_bits"),
        ({"low_bits": 6, "high_bits": 4}, "exceeds"),
        ({"lambda1": -0.1}, "non-negative"),
        ({"lambda2": -1.0}, "non-negative"),
        ({"probes": 0}, "probe count"),
        ({"jobs": 0}, "jobs"),
    ])
    def test_validation(self, kwargs, fragment):
        with pytest.raises(ValueError, match=fragment):
            RunConfig(**kwargs)


def exact_weights(rng):
    """Weights that quantize with zero error at the default 2/6 bits."""
    low = (rng.choice([-0.25, 0.25], (4, 3, 3, 3))).astype(np.float32)
    codes = rng.integers(0, 64, (2, 4, 1, 1)).astype(np.int32)
    codes.flat[0] = 63  # pin max|w| to the scale so requantization is exact
    high = dequantize(UniformQuant(codes, 6, 1.0))
    return {"conv1.w": low, "conv2.w": high}


EXACT_DOC = """version 1
input 3 6 6
node conv1 conv2d inputs=input weight=conv1.w padding=1
node act1 relu inputs=conv1
node conv2 conv2d inputs=act1 weight=conv2.w
output conv2
"""


class TestQuantizeModel:
    def test_lossless_model_roundtrips_bitwise(self, rng):
        g = parse_graph(EXACT_DOC)
        weights = exact_weights(rng)
        tensors, records = quantize_model(g, weights, RunConfig())
        assert np.array_equal(records[0].c if hasattr(records[0], "c")
                              else tensors["conv2.w.coeff"], np.ones(4))
        back = materialize_weights(g, tensors)
        assert np.array_equal(back["conv1.w"], weights["conv1.w"])
        assert np.array_equal(back["conv2.w"], weights["conv2.w"])
        probes = gaussian_probes(g.input_shape, 4, seed=0)
        rep = compare_models(g, weights, back, probes)
        assert rep.final_mse == 0.0

    def test_archive_structure(self, rng, two_conv_model):
        g, weights = two_conv_model
        tensors, records = quantize_model(g, weights, RunConfig())
        assert "conv1.w" not in tensors and "conv2.w" not in tensors
        assert set(k for k in tensors if k.startswith("conv1.w.")) == {
            "conv1.w.codes", "conv1.w.alpha", "conv1.w.delta", "conv1.w.bits"}
        assert set(k for k in tensors if k.startswith("conv2.w.")) == {
            "conv2.w.codes", "conv2.w.scale", "conv2.w.coeff", "conv2.w.bits"}
        assert tensors["conv1.w.bits"][0] == 2
        assert tensors["conv2.w.bits"][0] == 6
        assert tensors["conv2.w.coeff"].shape == (8,)
        assert len(records) == 1

    def test_pair_record_improves_objective(self, rng, two_conv_model):
        g, weights = two_conv_model
        _, records = quantize_model(g, weights, RunConfig())
        (r,) = records
        assert (r.low, r.high) == ("conv1", "conv2")
        assert r.objective_after <= r.objective_before + 1e-9
        assert r.gamma_sq >= 0.0 and r.theta_sq >= 0.0

    def test_naive_mode_unit_coefficients(self, rng, two_conv_model):
        g, weights = two_conv_model
        tensors, records = quantize_model(g, weights, RunConfig(),
                                          compensate=False)
        assert np.array_equal(tensors["conv2.w.coeff"], np.ones(8, np.float32))
        assert np.isnan(records[0].objective_after)

    def test_exempt_32_keeps_float(self, rng):
        doc = ("version 1\ninput 3 4 4\n"
               "node c conv2d inputs=input weight=w\noutput c\n"
               "exempt c bits=32\n")
        g = parse_graph(doc)
        w = rng.standard_normal((2, 3, 1, 1)).astype(np.float32)
        tensors, records = quantize_model(g, {"w": w}, RunConfig())
        assert records == []
        assert np.array_equal(tensors["w"], w)
        assert not any(k.startswith("w.") for k in tensors)

    def test_exempt_low_bits_uses_ternary_artifacts(self, rng):
        doc = ("version 1\ninput 3 4 4\n"
               "node c conv2d inputs=input weight=w\noutput c\n"
               "exempt c bits=2\n")
        g = parse_graph(doc)
        w = rng.standard_normal((2, 3, 1, 1)).astype(np.float32)
        tensors, _ = quantize_model(g, {"w": w}, RunConfig())
        assert "w.alpha" in tensors and "w.delta" in tensors
        back = materialize_weights(g, tensors)
        assert back["w"].shape == w.shape

    def test_non_weight_tensors_pass_through(self, rng):
        doc = ("version 1\ninput 3 4 4\n"
               "node c conv2d inputs=input weight=w bias=b\noutput c\n")
        g = parse_graph(doc)
        w = rng.standard_normal((2, 3, 1, 1)).astype(np.float32)
        b = rng.standard_normal(2).astype(np.float32)
        tensors, _ = quantize_model(g, {"w": w, "b": b}, RunConfig())
        assert np.array_equal(tensors["b"], b)

    def test_jobs_do_not_change_tensors(self, rng):
        doc = ["version 1", "input 2 6 6"]
        weights, prev = {}, "input"
        r = np.random.default_rng(5)
        for i in range(1, 7):
            weights[f"w{i}"] = r.standard_normal((2, 2, 3, 3)).astype(np.float32)
            doc.append(f"node c{i} conv2d inputs={prev} weight=w{i} padding=1")
            doc.append(f"node r{i} relu inputs=c{i}")
            prev = f"r{i}"
        doc.append("output r6")
        g = parse_graph("\n".join(doc))
        t1, _ = quantize_model(g, weights, RunConfig(jobs=1))
        t4, _ = quantize_model(g, weights, RunConfig(jobs=4))
        assert set(t1) == set(t4)
        for k in t1:
            assert np.array_equal(t1[k], t4[k]), k


@pytest.fixture
def cli_model(rng, tmp_path):
    weights = two_conv_weights(rng)
    model = tmp_path / "model.mpct"
    graph = tmp_path / "model.txt"
    save_archive(weights, model)
    graph.write_text(TWO_CONV_DOC)
    return str(model), str(graph), tmp_path


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


class TestCli:
    def test_quantize_writes_archive_and_report(self, cli_model, capsys):
        model, graph, tmp = cli_model
        out = str(tmp / "q.mpct")
        code, cap = run_cli(capsys, "quantize", "--model", model,
                            "--graph", graph, "--out", out)
        assert code == 0
        tensors = load_archive(out)
        assert "conv1.w.codes" in tensors
        report = (tmp / "q.mpct.report.csv").read_text()
        assert report.splitlines()[0] == ("entry,low,high,low_bits,high_bits,"
                                          "gamma_sq,theta_sq,objective_before,"
                                          "objective_after")
        assert report.splitlines()[1].startswith("pair,conv1,conv2,2,6,")
        assert cap.out == report

    def test_quantized_archive_evaluates(self, cli_model, capsys):
        model, graph, tmp = cli_model
        out = str(tmp / "q.mpct")
        assert run_cli(capsys, "quantize", "--model", model, "--graph", graph,
                       "--out", out)[0] == 0
        g = parse_graph(TWO_CONV_DOC)
        back = materialize_weights(g, load_archive(out))
        probes = gaussian_probes(g.input_shape, 2, seed=0)
        rep = compare_models(g, load_archive(model), back, probes)
        assert np.isfinite(rep.final_mse)

    def test_eval_emits_two_blocks(self, cli_model, capsys):
        model, graph, _ = cli_model
        code, cap = run_cli(capsys, "eval", "--model", model, "--graph", graph,
                            "--probes", "4")
        assert code == 0
        lines = cap.out.splitlines()
        assert lines[0].startswith("# naive: probes=4 final_mse=")
        assert lines[1].startswith("# compensated: probes=4 final_mse=")
        assert lines[2] == "block,metric,layer,value"
        naive_rows = [l for l in lines if l.startswith("naive,layer_mse")]
        comp_rows = [l for l in lines if l.startswith("compensated,layer_mse")]
        assert len(naive_rows) == len(comp_rows) == 3
        assert any(l.startswith("naive,final_mse,conv2,") for l in lines)

    def test_eval_with_labels_reports_top1(self, cli_model, capsys):
        model, graph, tmp = cli_model
        probes = gaussian_probes((3, 8, 8), 4, seed=9)
        data = tmp / "data.mpct"
        save_archive({"images": probes,
                      "labels": np.array([0, 1, 2, 3], np.int32)}, data)
        code, cap = run_cli(capsys, "eval", "--model", model, "--graph", graph,
                            "--data", str(data))
        assert code == 0
        assert "top1=" in cap.out.splitlines()[0]
        assert any(l.startswith("compensated,top1,,") for l in cap.out.splitlines())

    def test_sweep_row_count(self, cli_model, capsys):
        model, graph, _ = cli_model
        code, cap = run_cli(capsys, "sweep", "--model", model, "--graph", graph,
                            "--probes", "2",
                            "--lambda1-range", "0.1:0.6:0.1",
                            "--lambda2-range", "0:0.01:0.002")
        assert code == 0
        lines = cap.out.strip().splitlines()
        assert lines[0] == "lambda1,lambda2,recon_mse,top1"
        assert len(lines) == 1 + 6 * 6
        assert lines[1].startswith("0.1,0,")
        assert lines[1].endswith(",")  # no labels, empty top1 column

    def test_hist_reports_mean_shift(self, cli_model, capsys):
        model, graph, _ = cli_model
        code, cap = run_cli(capsys, "hist", "--model", model, "--graph", graph,
                            "--layer", "conv2", "--bins", "16")
        assert code == 0
        lines = cap.out.splitlines()
        assert lines[0] == "# layer=conv2"
        assert lines[5] == "bin_lo,bin_hi,plain,compensated"
        data_rows = lines[6:]
        assert len(data_rows) == 16
        plain_total = sum(int(r.split(",")[2]) for r in data_rows)
        assert plain_total == 6 * 8 * 3 * 3  # every weight lands in a bin

    def test_size_matches_library(self, cli_model, capsys):
        model, graph, _ = cli_model
        code, cap = run_cli(capsys, "size", "--model", model, "--graph", graph)
        assert code == 0
        g = parse_graph(TWO_CONV_DOC)
        weights = load_archive(model)
        from mpcq import size_report
        rep = size_report(g, discover_pairs(g, weights), weights)
        assert f"# total_bytes={rep.total_bytes:.10g}" in cap.out.splitlines()
        assert "layer,role,bits,params,code_bytes,overhead_bytes" in cap.out
        assert any(l.startswith("conv1,low,2,") for l in cap.out.splitlines())

    def test_deterministic_across_runs(self, cli_model, capsys):
        model, graph, tmp = cli_model
        out1, out2 = str(tmp / "a.mpct"), str(tmp / "b.mpct")
        _, cap1 = run_cli(capsys, "quantize", "--model", model, "--graph", graph,
                          "--out", out1, "--jobs", "3")
        _, cap2 = run_cli(capsys, "quantize", "--model", model, "--graph", graph,
                          "--out", out2, "--jobs", "1")
        assert cap1.out == cap2.out
        assert (tmp / "a.mpct").read_bytes() == (tmp / "b.mpct").read_bytes()
        _, ev1 = run_cli(capsys, "eval", "--model", model, "--graph", graph,
                         "--probes", "3", "--seed", "4")
        _, ev2 = run_cli(capsys, "eval", "--model", model, "--graph", graph,
                         "--probes", "3", "--seed", "4")
        assert ev1.out == ev2.out

    def test_seed_changes_probes_not_weights(self, cli_model, capsys):
        model, graph, tmp = cli_model
        outs = []
        for seed, name in ((0, "s0.mpct"), (1, "s1.mpct")):
            out = str(tmp / name)
            run_cli(capsys, "quantize", "--model", model, "--graph", graph,
                    "--out", out, "--seed", str(seed))
            outs.append((tmp / name).read_bytes())
        assert outs[0] == outs[1]  # quantization consumes no randomness

    def test_quantize_needs_no_probes(self, cli_model, capsys, monkeypatch):
        def boom(*a, **k):
            raise AssertionError("quantize path requested probe data")
        monkeypatch.setattr("mpcq.cli.gaussian_probes", boom)
        model, graph, tmp = cli_model
        code, _ = run_cli(capsys, "quantize", "--model", model, "--graph", graph,
                          "--out", str(tmp / "q.mpct"))
        assert code == 0
        with pytest.raises(AssertionError, match="probe data"):
            main(["eval", "--model", model, "--graph", graph])

    def test_exit_codes(self, cli_model, capsys, tmp_path):
        model, graph, tmp = cli_model
        out = str(tmp / "q.mpct")
        # missing file -> usage
        assert main(["quantize", "--model", str(tmp / "nope.mpct"),
                     "--graph", graph, "--out", out]) == 1
        # bad flag value -> usage
        assert main(["quantize", "--model", model, "--graph", graph,
                     "--out", out, "--low-bits", "9"]) == 1
        # malformed range -> usage
        assert main(["sweep", "--model", model, "--graph", graph,
                     "--lambda1-range", "1:2"]) == 1
        # corrupt archive -> data error
        bad = tmp_path / "bad.mpct"
        bad.write_bytes(b"not an archive at all")
        assert main(["quantize", "--model", str(bad), "--graph", graph,
                     "--out", out]) == 2
        # non-pair layer for hist -> data error
        assert main(["hist", "--model", model, "--graph", graph,
                     "--layer", "conv1"]) == 2
        # graph that parses but mismatches the archive -> data error
        lying = tmp / "lying.txt"
        lying.write_text(TWO_CONV_DOC.replace("input 3 8 8", "input 4 8 8"))
        assert main(["quantize", "--model", model, "--graph", str(lying),
                     "--out", out]) == 2
        capsys.readouterr()

    def test_help_and_missing_args(self, capsys):
        assert main(["--help"]) == 0
        assert main([]) == 1
        assert main(["quantize"]) == 1  # required flags absent
        capsys.readouterr()

    def test_size_out_mirrors_stdout(self, cli_model, capsys):
        model, graph, tmp = cli_model
        out = str(tmp / "size.csv")
        code, cap = run_cli(capsys, "size", "--model", model, "--graph", graph,
                            "--out", out)
        assert code == 0
        assert (tmp / "size.csv").read_text() == cap.out
