import numpy as np
import pytest

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    # surface one line per acceptance criterion even with captured output
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TWO_CONV_DOC = """version 1
input 3 8 8
node conv1 conv2d inputs=input weight=conv1.w padding=1
node act1 relu inputs=conv1
node conv2 conv2d inputs=act1 weight=conv2.w padding=1
output conv2
"""


def two_conv_weights(rng, ch=8, cin=3, cout=6, k=3):
    return {
        "conv1.w": rng.standard_normal((ch, cin, k, k)).astype(np.float32),
        "conv2.w": rng.standard_normal((cout, ch, k, k)).astype(np.float32),
    }


@pytest.fixture
def two_conv_model(rng):
    from mpcq import parse_graph

    return parse_graph(TWO_CONV_DOC), two_conv_weights(rng)


def resnet18_doc_and_weights():
    """Standard 18-layer residual classifier, zero weights (shapes only).

    Eight basic blocks in four stages, 1x1 shortcut projections where the
    channel count doubles, global average pool, 1000-way classifier.
    """
    lines = ["version 1", "input 3 224 224",
             "node conv1 conv2d inputs=input weight=conv1.w stride=2 padding=3",
             "node bn1 bn inputs=conv1 gamma=bn1.g beta=bn1.b mean=bn1.m var=bn1.v",
             "node relu1 relu inputs=bn1",
             "node pool1 maxpool inputs=relu1 kernel=3 stride=2 padding=1"]
    weights = {}

    def bn(prefix, ch):
        for suffix, fill in (("g", 1.0), ("b", 0.0), ("m", 0.0), ("v", 1.0)):
            weights[f"{prefix}.{suffix}"] = np.full(ch, fill, np.float32)

    weights["conv1.w"] = np.zeros((64, 3, 7, 7), np.float32)
    bn("bn1", 64)

    prev, prev_ch = "pool1", 64
    for stage, ch in enumerate([64, 128, 256, 512], 1):
        for block in (1, 2):
            name = f"s{stage}b{block}"
            stride = 2 if stage > 1 and block == 1 else 1
            skip = prev
            if stride != 1 or prev_ch != ch:
                weights[f"{name}.ds.w"] = np.zeros((ch, prev_ch, 1, 1), np.float32)
                bn(f"{name}.dsbn", ch)
                lines += [f"node {name}_ds conv2d inputs={prev} weight={name}.ds.w stride={stride}",
                          f"node {name}_dsbn bn inputs={name}_ds gamma={name}.dsbn.g "
                          f"beta={name}.dsbn.b mean={name}.dsbn.m var={name}.dsbn.v"]
                skip = f"{name}_dsbn"
            weights[f"{name}.c1.w"] = np.zeros((ch, prev_ch, 3, 3), np.float32)
            weights[f"{name}.c2.w"] = np.zeros((ch, ch, 3, 3), np.float32)
            bn(f"{name}.bn1", ch)
            bn(f"{name}.bn2", ch)
            lines += [
                f"node {name}_c1 conv2d inputs={prev} weight={name}.c1.w stride={stride} padding=1",
                f"node {name}_bn1 bn inputs={name}_c1 gamma={name}.bn1.g "
                f"beta={name}.bn1.b mean={name}.bn1.m var={name}.bn1.v",
                f"node {name}_r1 relu inputs={name}_bn1",
                f"node {name}_c2 conv2d inputs={name}_r1 weight={name}.c2.w padding=1",
                f"node {name}_bn2 bn inputs={name}_c2 gamma={name}.bn2.g "
                f"beta={name}.bn2.b mean={name}.bn2.m var={name}.bn2.v",
                f"node {name}_add add inputs={skip},{name}_bn2",
                f"node {name}_out relu inputs={name}_add",
            ]
            prev, prev_ch = f"{name}_out", ch

    lines += [f"node gap avgpool inputs={prev} kernel=0",
              "node flat flatten inputs=gap",
              "node fc linear inputs=flat weight=fc.w bias=fc.b",
              "output fc"]
    weights["fc.w"] = np.zeros((1000, 512), np.float32)
    weights["fc.b"] = np.zeros(1000, np.float32)
    return "\n".join(lines) + "\n", weights
