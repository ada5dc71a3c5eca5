"""Export pretrained vision models to the mpcq wire formats.

Builds a model from the supported zoo families, lifts its computation onto
the ten-op graph vocabulary, and writes the two interchange artifacts: a
binary tensor archive and a text graph document. Both writers are
implemented here directly from the format description so this package never
imports the quantization package; the files are the interface.
"""

from .archive import pack_archive, save_archive, sha256_file
from .export import ExportError, ExportManifest, export_model
from .graphdoc import GraphNode, render_document
from .models import SUPPORTED_MODELS, UnsupportedModelError, build_model
from .trace import UnsupportedLayerError, trace_model

__version__ = "0.1.0"

__all__ = [
    "ExportError", "ExportManifest", "GraphNode", "SUPPORTED_MODELS",
    "UnsupportedLayerError", "UnsupportedModelError", "build_model",
    "export_model", "pack_archive", "render_document", "save_archive",
    "sha256_file", "trace_model",
]
