"""Builder for the text graph document.

One `node` line per operation, attributes as key=value tokens. Defaulted
attributes are omitted to keep documents small; the parser on the consuming
side fills them back in.
"""

from dataclasses import dataclass, field

# attrs whose values name archive tensors, in emission order
TENSOR_ATTRS = ("weight", "bias", "gamma", "beta", "mean", "var")


@dataclass
class GraphNode:
    id: str
    kind: str
    inputs: list[str]
    attrs: dict[str, str] = field(default_factory=dict)

    def line(self) -> str:
        parts = [f"node {self.id} {self.kind}", "inputs=" + ",".join(self.inputs)]
        parts.extend(f"{k}={v}" for k, v in self.attrs.items())
        return " ".join(parts)

    def tensor_names(self) -> list[str]:
        return [v for k, v in self.attrs.items() if k in TENSOR_ATTRS]


def render_document(input_shape: tuple[int, int, int], nodes: list[GraphNode],
                    output_id: str, header: str = "") -> str:
    lines = ["version 1"]
    if header:
        lines += [f"# {h}" for h in header.splitlines()]
    lines.append("input {} {} {}".format(*input_shape))
    lines.append("")
    lines.extend(n.line() for n in nodes)
    lines += ["", f"output {output_id}", ""]
    return "\n".join(lines)
