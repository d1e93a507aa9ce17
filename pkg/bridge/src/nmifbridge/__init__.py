"""Export torch models, image corpora, and golden activations into the
neutral model interchange format consumed by the analysis tool. The
interchange files are the entire contract: nothing here imports the
analyzer and the analyzer never imports torch."""

from .activations import export_activations
from .corpus import PreprocessConfig, export_corpus
from .errors import BridgeError, DecodeFailure, UnsupportedOp
from .export import ExportManifest, export_model

__all__ = [
    "BridgeError",
    "DecodeFailure",
    "ExportManifest",
    "PreprocessConfig",
    "UnsupportedOp",
    "export_activations",
    "export_corpus",
    "export_model",
]
