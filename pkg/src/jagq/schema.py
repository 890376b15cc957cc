"""Dataset schemas and shape/kind inference over canonical DAGs.

Inference is the single authority on how expressions broadcast: every node
gets a :class:`DataShape` whose ``axes`` name the sequence each nesting
level runs over.  Executors follow these shapes mechanically, and a debug
cross-check compares what they produce against what was inferred.

Leaves missing from the schema are an error in strict mode; otherwise they
are assumed to be floating point and a warning is recorded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import InferenceError, SchemaError
from .expr import BUILTIN_FUNCTIONS, CanonicalDag, ExprNode, FunctionDecl
from .jagged import ElementKind, binary_result_kind

_KIND_NAMES = {"float": ElementKind.FLOAT, "int": ElementKind.INT, "bool": ElementKind.BOOL}


@dataclass(frozen=True)
class DatasetSchema:
    """Collections and their leaf kinds, as declared beside the dataset."""

    collections: dict[str, dict[str, ElementKind]]

    def leaf_kind(self, collection: str, leaf: str) -> ElementKind | None:
        return self.collections.get(collection, {}).get(leaf)


_COLLECTION_RE = re.compile(r"collection\s+(\w+)\s*\{([^}]*)\}", re.S)


def parse_schema_text(text: str) -> DatasetSchema:
    """Parse the schema file format::

        collection Electrons { pt: float; eta: float; phi: float }

    ``#`` starts a line comment.
    """
    stripped = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    collections: dict[str, dict[str, ElementKind]] = {}
    consumed = ""
    for match in _COLLECTION_RE.finditer(stripped):
        name, body = match.group(1), match.group(2)
        if name in collections:
            raise SchemaError(f"collection {name!r} declared twice")
        leaves: dict[str, ElementKind] = {}
        for entry in body.split(";"):
            entry = entry.strip()
            if not entry:
                continue
            if ":" not in entry:
                raise SchemaError(f"bad leaf declaration {entry!r} in collection {name}")
            leaf, kind_name = (part.strip() for part in entry.split(":", 1))
            kind = _KIND_NAMES.get(kind_name)
            if kind is None:
                raise SchemaError(f"unknown kind {kind_name!r} for leaf {name}.{leaf}")
            if leaf in leaves:
                raise SchemaError(f"leaf {name}.{leaf} declared twice")
            leaves[leaf] = kind
        if not leaves:
            raise SchemaError(f"collection {name!r} declares no leaves")
        collections[name] = leaves
        consumed += match.group(0)
    leftover = _COLLECTION_RE.sub("", stripped).strip()
    if leftover:
        raise SchemaError(f"unparsed schema text: {leftover[:40]!r}")
    if not collections:
        raise SchemaError("schema declares no collections")
    return DatasetSchema(collections)


def render_schema(schema: DatasetSchema) -> str:
    lines = []
    for name, leaves in schema.collections.items():
        body = "; ".join(f"{leaf}: {kind.value}" for leaf, kind in leaves.items())
        lines.append(f"collection {name} {{ {body} }}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DataShape:
    """Inferred type of one expression node.

    ``axes`` is ``None`` for a true scalar constant; otherwise one opaque
    axis tag per nesting level below events.  Collection accesses are
    tagged by node identity; filters and maps by what they select (predicate
    plus source axis), so parallel views of one selection stay aligned.
    ``record=True`` marks whole-record collections.
    """

    axes: tuple | None
    kind: ElementKind | None
    record: bool = False
    collection: str | None = None
    dataset: bool = False

    @property
    def depth(self) -> int:
        return 0 if self.axes is None else len(self.axes)

    @property
    def origin(self) -> str:
        return self.collection if self.collection is not None else "derived"


@dataclass
class InferenceResult:
    shapes: dict[int, DataShape]
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, node_id: int) -> DataShape:
        return self.shapes[node_id]


def _unify_axes(a: DataShape, b: DataShape, stack: list[int], node: ExprNode):
    ax_a, ax_b = a.axes, b.axes
    if ax_a is None:
        return ax_b
    if ax_b is None:
        return ax_a
    if ax_a == ax_b:
        return ax_a
    if len(ax_a) < len(ax_b) and ax_b[:len(ax_a)] == ax_a:
        return ax_b
    if len(ax_b) < len(ax_a) and ax_a[:len(ax_b)] == ax_b:
        return ax_a
    if len(ax_a) == 1 and len(ax_b) == 2 and ax_b[1] == ax_a[0]:
        return ax_b
    if len(ax_b) == 1 and len(ax_a) == 2 and ax_a[1] == ax_b[0]:
        return ax_a
    if len(ax_a) == 1 and len(ax_b) == 1:
        # innermost enclosing binder wins the inner position; an axis bound
        # several binders deep counts by its latest (innermost) binding
        pa = _last_index(stack, ax_a[0])
        pb = _last_index(stack, ax_b[0])
        if pa == pb:
            raise InferenceError(
                "cannot combine two unrelated sequences elementwise", node.node_id)
        return ax_a + ax_b if pa < pb else ax_b + ax_a
    raise InferenceError("operand nestings do not broadcast", node.node_id)


def _last_index(stack: list, axis) -> int:
    for position in range(len(stack) - 1, -1, -1):
        if stack[position] == axis:
            return position
    return -1


def infer(dag: CanonicalDag, schema: DatasetSchema, *,
          functions: dict[str, FunctionDecl] | None = None,
          strict: bool = False) -> InferenceResult:
    """Annotate every node with its :class:`DataShape`."""
    if functions is None:
        functions = {name: FunctionDecl(name, params, ret)
                     for name, (params, ret) in BUILTIN_FUNCTIONS.items()}
    shapes: dict[int, DataShape] = {}
    warnings: list[str] = []

    def walk(n: ExprNode, stack: list[int]) -> DataShape:
        hit = shapes.get(n.node_id)
        if hit is not None:
            return hit
        out = _infer_node(n, stack)
        shapes[n.node_id] = out
        return out

    def _infer_node(n: ExprNode, stack: list[int]) -> DataShape:
        kind = n.kind
        if kind == "source":
            return DataShape(axes=None, kind=None, dataset=True)
        if kind == "const":
            return DataShape(axes=None, kind=ElementKind.of_scalar(n.value))
        if kind == "param":
            if n.bind_src is None:
                raise InferenceError("unbound parameter", n.node_id)
            return walk(n.bind_src, stack)
        if kind == "attr":
            parent = walk(n.children[0], stack)
            if parent.dataset:
                if n.name not in schema.collections:
                    raise InferenceError(f"unknown collection {n.name!r}", n.node_id)
                return DataShape(axes=(n.node_id,), kind=None, record=True, collection=n.name)
            if parent.record:
                leaf_kind = schema.leaf_kind(parent.collection, n.name)
                if leaf_kind is None:
                    if strict:
                        raise InferenceError(
                            f"collection {parent.collection!r} has no leaf {n.name!r}",
                            n.node_id)
                    warnings.append(
                        f"leaf {parent.collection}.{n.name} is not in the schema; "
                        f"assuming float")
                    leaf_kind = ElementKind.FLOAT
                return DataShape(axes=parent.axes, kind=leaf_kind)
            raise InferenceError(f"cannot access field {n.name!r} of a primitive value",
                                 n.node_id)
        if kind == "binop":
            a = walk(n.children[0], stack)
            b = walk(n.children[1], stack)
            if a.record or b.record or a.dataset or b.dataset:
                raise InferenceError(f"operator {n.op!r} needs primitive operands", n.node_id)
            try:
                out_kind = binary_result_kind(n.op, a.kind, b.kind)
            except Exception as err:
                raise InferenceError(str(err), n.node_id) from None
            return DataShape(axes=_unify_axes(a, b, stack, n), kind=out_kind)
        if kind == "unop":
            a = walk(n.children[0], stack)
            if a.record or a.dataset or a.kind is ElementKind.BOOL:
                raise InferenceError(f"unary {n.op!r} needs a numeric operand", n.node_id)
            return DataShape(axes=a.axes, kind=ElementKind.FLOAT)
        if kind == "call":
            decl = functions.get(n.name)
            if decl is None:
                raise InferenceError(f"function {n.name!r} is not declared", n.node_id)
            shape: DataShape | None = None
            for i, child in enumerate(n.children):
                c = walk(child, stack)
                if c.record or c.dataset:
                    raise InferenceError(f"{n.name} argument {i} must be primitive", n.node_id)
                want = decl.param_kinds[i]
                if (want is ElementKind.BOOL) != (c.kind is ElementKind.BOOL):
                    raise InferenceError(
                        f"{n.name} argument {i} has kind {c.kind.name}, "
                        f"declared {want.name}", n.node_id)
                shape = c if shape is None else DataShape(
                    axes=_unify_axes(shape, c, stack, n), kind=c.kind)
            axes = None if shape is None else shape.axes
            return DataShape(axes=axes, kind=decl.ret_kind)
        if kind == "filter":
            seq = walk(n.children[0], stack)
            if seq.dataset or seq.axes is None:
                raise InferenceError("cannot filter a per-event scalar", n.node_id)
            if len(seq.axes) != 1:
                raise InferenceError("filters operate on depth-1 sequences", n.node_id)
            src = walk(n.bind_src, stack)
            if src.axes != seq.axes:
                raise InferenceError("filter parameter source is misaligned", n.node_id)
            body = walk(n.children[1], stack + [src.axes[0]])
            if body.kind is not ElementKind.BOOL:
                raise InferenceError("filter predicate must be boolean", n.node_id)
            # the axis names the selection, not the node: filters applying the
            # same predicate to parallel views of one sequence stay aligned
            tag = ("sel", n.children[1].node_id, n.param_id, src.axes[0])
            if body.axes is None or body.axes == () or body.axes == src.axes:
                axes: tuple = (tag,)
            elif len(body.axes) == 2 and body.axes[1] == src.axes[0]:
                axes = (body.axes[0], tag)
            else:
                raise InferenceError("filter predicate is misaligned with the sequence",
                                     n.node_id)
            return DataShape(axes=axes, kind=seq.kind, record=seq.record,
                             collection=seq.collection)
        if kind == "map":
            seq = walk(n.children[0], stack)
            if seq.dataset or seq.axes is None or len(seq.axes) != 1:
                raise InferenceError("map operates on depth-1 sequences", n.node_id)
            body = walk(n.children[1], stack + [seq.axes[0]])
            if body.record or body.dataset:
                raise InferenceError("map body must be primitive-valued", n.node_id)
            s_axis = seq.axes[0]
            tag = ("map", n.children[1].node_id, n.param_id, s_axis)
            if body.axes is None:
                axes: tuple = (tag,)
            elif s_axis in body.axes:
                axes = tuple(tag if a == s_axis else a for a in body.axes)
            elif len(body.axes) == 1:
                axes = (tag, body.axes[0])
            elif len(body.axes) == 0:
                axes = (tag,)
            else:
                raise InferenceError("map body nests too deeply", n.node_id)
            return DataShape(axes=axes, kind=body.kind)
        if kind == "agg":
            seq = walk(n.children[0], stack)
            if seq.dataset or seq.axes is None or len(seq.axes) == 0:
                raise InferenceError(f"{n.op} needs at least one nesting level", n.node_id)
            axes = seq.axes[:-1]
            if n.op == "Count":
                return DataShape(axes=axes, kind=ElementKind.INT)
            if n.op == "First":
                return DataShape(axes=axes, kind=seq.kind, record=seq.record,
                                 collection=seq.collection)
            if seq.record:
                raise InferenceError(f"{n.op} is not defined for record sequences", n.node_id)
            if n.op in ("Any", "All"):
                if seq.kind is not ElementKind.BOOL:
                    raise InferenceError(f"{n.op} requires boolean elements", n.node_id)
                return DataShape(axes=axes, kind=ElementKind.BOOL)
            if seq.kind is ElementKind.BOOL:
                raise InferenceError(f"{n.op} on boolean elements", n.node_id)
            return DataShape(axes=axes, kind=seq.kind)
        raise InferenceError(f"unknown node kind {kind!r}", n.node_id)

    walk(dag.root, [])
    seen: set[str] = set()
    deduped = [w for w in warnings if not (w in seen or seen.add(w))]
    return InferenceResult(shapes, deduped)
