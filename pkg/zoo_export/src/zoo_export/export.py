"""Turn a zoo model into the two interchange files plus a manifest."""

from dataclasses import dataclass

import numpy as np
import torch

from .archive import save_archive, sha256_file
from .graphdoc import render_document
from .models import UnsupportedModelError, build_model
from .trace import trace_model

# normalization baked into exported CIFAR-10 evaluation batches
_CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
_CIFAR_STD = (0.2023, 0.1994, 0.2010)


class ExportError(RuntimeError):
    """Export produced inconsistent artifacts."""


@dataclass(frozen=True)
class ExportManifest:
    """What an export wrote and how to cross-check it.

    layer_map sends each parameterized source module path to its main
    archive tensor (conv/linear weight, batch-norm gamma); param_count is
    the source model's trainable scalar count; archive_sha256 fingerprints
    the weight archive so re-exports can be compared without the file.
    """

    model: str
    input_shape: tuple[int, int, int]
    node_ids: tuple[str, ...]
    layer_map: dict[str, str]
    param_count: int
    archive_sha256: str


def export_model(model_name: str, out_model: str, out_graph: str, *,
                 out_data: str | None = None, num_samples: int = 64,
                 data_dir: str | None = None, seed: int = 0,
                 pretrained: bool = False,
                 state_path: str | None = None) -> ExportManifest:
    """Export one model family to an archive + graph document pair.

    state_path loads a locally stored checkpoint (a plain state dict) into
    the freshly built model, for families whose weights cannot be fetched.
    """
    if out_data is not None:
        _check_data_request(model_name, num_samples, data_dir)
    model, input_shape = build_model(model_name, seed=seed, pretrained=pretrained)
    if state_path is not None:
        state = torch.load(state_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        model = model.eval()
    nodes, tensors, layer_map, output_id = trace_model(model, input_shape)

    referenced = {name for n in nodes for name in n.tensor_names()}
    missing = sorted(referenced - set(tensors))
    if missing:
        raise ExportError(f"graph references tensors missing from the archive: {missing}")

    param_count = sum(int(p.numel()) for p in model.parameters())
    # archive = parameters + batch-norm running stats (buffers, .m/.v)
    stored = sum(int(t.size) for name, t in tensors.items()
                 if not name.endswith((".m", ".v")))
    if stored != param_count:
        raise ExportError(
            f"archive holds {stored} parameter values, source model has {param_count}")

    doc = render_document(input_shape, nodes, output_id,
                          header=f"{model_name} exported from torch")
    with open(out_graph, "w", encoding="utf-8") as fh:
        fh.write(doc)
    save_archive(tensors, out_model)

    if out_data is not None:
        _export_eval_batches(model_name, out_data, num_samples, data_dir)

    return ExportManifest(
        model=model_name,
        input_shape=input_shape,
        node_ids=tuple(n.id for n in nodes),
        layer_map=dict(layer_map),
        param_count=param_count,
        archive_sha256=sha256_file(out_model),
    )


def _check_data_request(model_name: str, num_samples: int,
                        data_dir: str | None) -> None:
    if model_name != "resnet56":
        raise UnsupportedModelError(
            f"evaluation batches are only wired up for resnet56 (CIFAR-10); "
            f"{model_name} would need a local ImageNet copy")
    if data_dir is None:
        raise ValueError("exporting evaluation batches requires --data-dir "
                         "pointing at a local CIFAR-10 copy")
    if num_samples < 1:
        raise ValueError(f"num_samples must be positive, got {num_samples}")


def _export_eval_batches(model_name: str, out_data: str, num_samples: int,
                         data_dir: str | None) -> None:
    """Write preprocessed evaluation images + labels for the CIFAR model."""
    from torchvision import datasets, transforms
    tf = transforms.Compose([
        transforms.ToTensor(),
        transforms.Normalize(_CIFAR_MEAN, _CIFAR_STD),
    ])
    ds = datasets.CIFAR10(data_dir, train=False, download=False, transform=tf)
    count = min(num_samples, len(ds))
    images = torch.stack([ds[i][0] for i in range(count)]).numpy()
    labels = np.array([ds[i][1] for i in range(count)], dtype=np.int32)
    save_archive({"images": images.astype(np.float32), "labels": labels},
                 out_data)
