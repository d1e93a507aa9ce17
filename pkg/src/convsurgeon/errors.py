"""Exception types shared across the toolkit."""

from __future__ import annotations


class ConvSurgeonError(Exception):
    """Base class for every error raised by this package."""


# ---------------------------------------------------------------------------
# Container / format errors
# ---------------------------------------------------------------------------


class MagicMismatch(ConvSurgeonError):
    """File does not start with the expected magic bytes / required manifest."""


class VersionUnsupported(ConvSurgeonError):
    """Container or tensor file declares a format version we do not read."""


class BlobOutOfBounds(ConvSurgeonError):
    """An initializer's (offset, byte_length) range exceeds the tensor blob."""


class NonFiniteTensor(ConvSurgeonError):
    """An F32 tensor held NaN/Inf and the loader was not told to allow it."""


class IoFailure(ConvSurgeonError):
    """Filesystem-level failure while reading or writing an artifact."""


class SchemaViolation(ConvSurgeonError):
    """A node fails the per-op attribute/arity schema."""

    def __init__(self, node_id: str, reason: str):
        super().__init__(f"node {node_id!r}: {reason}")
        self.node_id = node_id
        self.reason = reason


class CyclicGraph(ConvSurgeonError):
    """The node list admits no topological order."""


class DanglingReference(ConvSurgeonError):
    """A value name is consumed but never produced."""

    def __init__(self, name: str):
        super().__init__(f"undefined value {name!r}")
        self.name = name


class ValidationFailed(ConvSurgeonError):
    """An operation required a clean model but validation found violations."""

    def __init__(self, violations, context: str = ""):
        lines = "; ".join(str(v) for v in violations)
        prefix = f"{context}: " if context else ""
        super().__init__(f"{prefix}{len(violations)} violation(s): {lines}")
        self.violations = list(violations)


class UnsupportedRank(ConvSurgeonError):
    """A tensor's layout role is ambiguous, so it cannot be re-laid-out."""

    def __init__(self, name: str, detail: str = ""):
        msg = f"cannot infer layout role of {name!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.name = name


# ---------------------------------------------------------------------------
# Execution errors
# ---------------------------------------------------------------------------


class ShapeMismatch(ConvSurgeonError):
    """Operand shapes are inconsistent with an op's requirements."""

    def __init__(self, node_id: str, detail: str = ""):
        msg = f"shape mismatch at node {node_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.node_id = node_id
        self.detail = detail


# ---------------------------------------------------------------------------
# Differential-analysis errors
# ---------------------------------------------------------------------------


class CorpusEmpty(ConvSurgeonError):
    """The input corpus directory holds no tensor files."""


class InputShapeMismatch(ConvSurgeonError):
    """A corpus tensor does not match the graph input shape."""

    def __init__(self, input_id: str, detail: str = ""):
        msg = f"input {input_id!r} does not match the graph input"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.input_id = input_id


class DegenerateRanking(ConvSurgeonError):
    """Rank correlation is undefined because every rank is tied."""


class NoDiscrepancies(ConvSurgeonError):
    """A triage subset was requested but no input disagreed."""


# ---------------------------------------------------------------------------
# Localization / repair errors
# ---------------------------------------------------------------------------


class StageExecutionFailed(ConvSurgeonError):
    """Inference failed while running one stage of a conversion chain."""

    def __init__(self, stage_label: str, node_id: str, detail: str = ""):
        msg = f"stage {stage_label!r} failed at node {node_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.stage_label = stage_label
        self.node_id = node_id


class UnrepairableSuspect(ConvSurgeonError):
    """The suspect needs an edit outside the supported repair vocabulary."""
