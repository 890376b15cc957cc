"""Exception taxonomy shared by the builder, planner, executors and oracle.

The oracle deliberately raises the same classes as the executors so that
error outcomes can be compared one-to-one in equivalence tests.
"""
from __future__ import annotations


class JagqError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatchError(JagqError):
    """Operands do not share the jagged structure an operation requires."""


class KindError(JagqError):
    """Operation applied to an element kind it does not accept."""


class EmptySequenceError(JagqError):
    """A reduction that needs at least one element hit an empty list."""

    def __init__(self, op: str, event_index: int):
        self.op = op
        self.event_index = event_index
        super().__init__(f"{op} on empty list in event {event_index}")


class BuildError(JagqError):
    """Invalid expression construction (wrong argument, foreign handle, ...)."""


class AliasCycleError(BuildError):
    """Alias definitions resolve through themselves."""


class DuplicateAliasError(BuildError):
    """An alias name is already defined for this anchor shape."""


class UnknownFunctionError(BuildError):
    """Call to a backend function that was never declared."""


class FunctionRedeclarationError(BuildError):
    """A backend function was redeclared with a different signature."""


class UnboundParamError(JagqError):
    """A parameter reference escaped the filter/map that should bind it."""


class InferenceError(JagqError):
    """Shape or kind inference rejected the expression."""

    def __init__(self, message: str, node_id: int | None = None):
        self.node_id = node_id
        super().__init__(message if node_id is None else f"node {node_id}: {message}")


class SchemaError(JagqError):
    """Bad schema text or a dataset/schema mismatch."""


class PlanError(JagqError):
    """Planning failed."""


class NoBackendError(PlanError):
    """No registered backend accepts a node."""

    def __init__(self, node_label: str, reasons: list[tuple[str, str]]):
        self.node_label = node_label
        self.reasons = reasons
        detail = "; ".join(f"{b}: {r}" for b, r in reasons)
        super().__init__(f"no backend accepts node {node_label} ({detail})")


class UnsupportedNodeError(JagqError):
    """The query translator was handed a node it cannot express."""


class QuerySyntaxError(JagqError):
    """Query text does not match the grammar."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        super().__init__(message if position is None else f"{message} (at offset {position})")


class UnknownDatasetError(JagqError):
    """Dataset id is not registered with the service."""


class IngestError(JagqError):
    """Event file failed to parse or does not match the schema."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        parts = [message]
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        super().__init__(", ".join(parts))


class ExecutionError(JagqError):
    """An executor failed; carries the plan step and node ids involved."""

    def __init__(self, message: str, step: int | None = None, nodes: tuple[int, ...] = ()):
        self.step = step
        self.nodes = nodes
        prefix = "" if step is None else f"step {step} nodes {list(nodes)}: "
        super().__init__(prefix + message)
