"""Data-free mixed-precision weight quantization with channel compensation.

Quantizes a pretrained network layer-pair-wise (one layer very low bit,
the next high bit) and restores accuracy by rescaling the high-bit layer's
input channels with closed-form coefficients computed from weights alone.
"""

from .archive import load_archive, save_archive, scalar
from .compensation import (CompensationResult, LayerPair, PlacementCheck,
                           apply_compensation, empirical_reconstruction_loss,
                           objective_value, oracle_minimize,
                           placement_equivalence_check, solve_coefficients)
from .errors import (ArchiveError, BadMagicError, CapacityError,
                     ChannelMismatchError, CoverageError, CycleError,
                     DuplicateNameError, GraphError, GraphSyntaxError,
                     MissingTensorError, MpcqError, PairingError, ShapeError,
                     TruncatedArchiveError, UnknownOpError,
                     UnsupportedDtypeError, UnsupportedVersionError)
from .executor import execute_graph, final_output
from .graph import (INPUT_ID, ModelGraph, Node, PairDirective, check_channels,
                    parse_graph, serialize_graph)
from .kernels import available_backends, backend_name, set_backend
from .metrics import MetricReport, compare_models, gaussian_probes
from .ops import (BatchNormParams, add, avg_pool, batch_norm, concat, conv2d,
                  conv2d_batch, flatten, identity, linear, max_pool, relu,
                  relu6)
from .pipeline import (PairRecord, RunConfig, build_layer_pair,
                       materialize_weights, quantize_model)
from .plan import (LayerSize, PairAssignment, QuantPlan, SizeReport,
                   discover_pairs, size_report)
from .quantizers import (CompensatedQuant, TernaryQuant, UniformQuant,
                         absorb_scale_into_bn, dequantize, quant_error,
                         round_half_away, scale_input_channels,
                         ternary_quantize, uniform_quantize)

__version__ = "0.1.0"

__all__ = [
    "ArchiveError", "BadMagicError", "BatchNormParams", "CapacityError",
    "ChannelMismatchError", "CompensatedQuant", "CompensationResult",
    "CoverageError", "CycleError", "DuplicateNameError", "GraphError",
    "GraphSyntaxError", "INPUT_ID", "LayerPair", "LayerSize", "MetricReport",
    "MissingTensorError", "ModelGraph", "MpcqError", "Node", "PairAssignment",
    "PairDirective", "PairRecord", "PairingError", "PlacementCheck",
    "QuantPlan", "RunConfig", "ShapeError", "SizeReport", "TernaryQuant",
    "TruncatedArchiveError", "UniformQuant", "UnknownOpError",
    "UnsupportedDtypeError", "UnsupportedVersionError", "absorb_scale_into_bn",
    "add", "apply_compensation", "available_backends", "avg_pool",
    "backend_name", "batch_norm", "build_layer_pair", "check_channels",
    "compare_models", "concat", "conv2d", "conv2d_batch", "dequantize",
    "discover_pairs", "empirical_reconstruction_loss", "execute_graph",
    "final_output", "flatten", "gaussian_probes", "identity", "linear",
    "load_archive", "materialize_weights", "max_pool", "objective_value",
    "oracle_minimize", "parse_graph", "placement_equivalence_check",
    "quant_error", "quantize_model", "relu", "relu6", "round_half_away",
    "save_archive", "scalar", "scale_input_channels", "serialize_graph",
    "set_backend", "size_report", "solve_coefficients", "ternary_quantize",
    "uniform_quantize",
]
