"""Attention head analysis and rule-reference attention masking for small decoders.

The numeric kernels come from a compiled extension when it is built, with a
NumPy fallback (``aai.BACKEND`` names the one in use; set ``AAI_PURE_PYTHON=1``
to force the fallback).
"""

from ._backend import BACKEND
from .attention import attend, masked_softmax, scaled_dot_product, softmax
from .heads import (
    HeadClass,
    HeadPattern,
    HeadTable,
    SelectionMode,
    SelectionThresholds,
    analyze_model,
    binarize,
    classify_head,
    directional_scores,
    select_heads,
)
from .masks import HeadMaskPlan, ReweightParams, causal_mask, compose_final, median_of_scores, noref_mask, ref_mask
from .model import ModelConfig, ToyDecoder, greedy_decode, init_model, prefill
from .rules import ReferencePairSets, annotate_rules, build_pair_sets
from .trace import AttentionTrace, export_trace, import_trace

__version__ = "0.1.0"
