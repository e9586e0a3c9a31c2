"""Balanced-binary-tree (BBT) and interleaved BBT polar codes of arbitrary length."""

__version__ = "0.1.0"

from .bp import BpConfig, BpDecoder, DecodeMetrics, bp_decode
from .codec import CodeSpec, encode, generator_matrix, load_spec, sc_decode, spec_from_order
from .tree import build_normal_graph, build_tree

__all__ = [
    "BpConfig",
    "BpDecoder",
    "CodeSpec",
    "DecodeMetrics",
    "bp_decode",
    "build_normal_graph",
    "build_tree",
    "encode",
    "generator_matrix",
    "load_spec",
    "sc_decode",
    "spec_from_order",
]
