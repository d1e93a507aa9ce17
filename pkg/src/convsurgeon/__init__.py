"""Fault localization and repair for converted neural-network models.

The package operates on a neutral interchange format: each conversion
stage is captured as a model container, a deterministic reference
interpreter executes every stage identically, and the surrounding
modules diff, bisect, trace, and rewrite the graphs to find and fix
where a conversion went wrong.
"""

from .diffcore import (DiffReport, HyperDiffEntry, LayerAlignment,
                       ParamDiffEntry, StructDiffEntry, align_layers,
                       diff_hypers, diff_models, diff_params, diff_structure)
from .differential import (DiscrepancyReport, LabelRecord, compare_labels,
                           kendall_tau, load_corpus, pairwise_rates,
                           run_corpus, select_triage_subset)
from .errors import (BlobOutOfBounds, ConvSurgeonError, CorpusEmpty,
                     CyclicGraph, DanglingReference, DegenerateRanking,
                     InputShapeMismatch, IoFailure, MagicMismatch,
                     NoDiscrepancies, NonFiniteTensor, SchemaViolation,
                     ShapeMismatch, StageExecutionFailed, UnrepairableSuspect,
                     UnsupportedRank, ValidationFailed, VersionUnsupported)
from .interpreter import (ActivationTrace, execute, export_trace, load_trace,
                          topk_labels)
from .layout import canonicalize_layout
from .localize import (LayerDivergence, LocalizationReport, LocalizeConfig,
                       StageVerdict, Suspect, bisect_stages, localize,
                       rank_suspects, trace_divergence)
from .nmif import (ConversionChain, ModelGraph, NodeSpec, ValueInfo,
                   Violation, chain_from_paths, infer_shapes, load_chain,
                   load_model, save_model, structural_equal,
                   topological_order, validate_model)
from .ops import NCHW, NHWC, OP_SCHEMAS
from .repair import (InsertNode, RemoveNode, RepairOutcome, RepairSession,
                     ReplaceHyper, ReplaceParams, SubstituteNode, apply,
                     conversion_rate, invert, plan_from_diff, plan_repairs,
                     repair_session, verify)
from .tensors import DType, TensorData, read_nt, write_nt

__version__ = "0.1.0"
