"""Translate remote-capable subtrees into the textual query language.

A subtree is decomposed into a pipeline over one collection of one dataset:

    From(<dataset>) |> Get("Electrons") |> Where(p0 => ...)
                    |> Select(p0 => ...) |> Count()

Rendering is canonical: single spaces, minimal parentheses, parameters
named by lambda nesting depth (stage lambdas are all ``p0``), integral
numbers printed bare.  Equal queries are therefore byte-equal, which makes
the text a sound cache-key ingredient.

Subtrees that reference a collection in ways one pipeline cannot express
(crossed predicates, leaves of two differently filtered views, aggregates
other than Count/First) raise :class:`UnsupportedNodeError`; the planner
uses the same check to keep such nodes on the local backend.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import UnsupportedNodeError
from ..expr import ExprNode

_ELEMENT = ("elem",)

_PRECEDENCE = {"|": 1, "&": 2, "<": 3, ">": 3, "<=": 3, ">=": 3, "==": 3, "!=": 3,
               "+": 4, "-": 4, "*": 5, "/": 5}
_OP_TEXT = {"|": "||", "&": "&&"}
_UNARY_TEXT = {"abs": "Abs", "sqrt": "Sqrt", "sin": "Sin", "cos": "Cos"}


@dataclass
class _Pipe:
    dataset: str | None = None
    collection: str | None = None
    wheres: tuple[str, ...] = ()
    projection: tuple = _ELEMENT
    aggs: tuple[str, ...] = ()

    def spine(self):
        return (self.dataset, self.collection, self.wheres)

    def merged_spine(self, other: "_Pipe", node: ExprNode) -> "_Pipe":
        if self.aggs or other.aggs:
            raise UnsupportedNodeError(
                f"cannot continue a query past an aggregate (node {node.node_id})")
        if self.dataset is None:
            return other
        if other.dataset is None:
            return self
        if self.spine() != other.spine():
            raise UnsupportedNodeError(
                f"operands of node {node.node_id} draw on differently filtered "
                f"sequences; one query cannot carry both")
        return self


def translate(node: ExprNode, shapes=None) -> str:
    """Render one remote-capable subtree as canonical query text."""
    pipe = _decompose(node)
    if pipe.dataset is None:
        raise UnsupportedNodeError("constant expressions are not remote queries")
    stages = [f"From({pipe.dataset})"]
    if pipe.collection is not None:
        stages.append(f'Get("{pipe.collection}")')
    stages.extend(f"Where(p0 => {w})" for w in pipe.wheres)
    if pipe.projection != _ELEMENT:
        stages.append(f"Select(p0 => {_render(pipe.projection, 0, 0)})")
    stages.extend(f"{agg}()" for agg in pipe.aggs)
    return " |> ".join(stages)


def remotely_expressible(node: ExprNode) -> bool:
    """Planner-side twin of :func:`translate`: can this node be shipped?"""
    try:
        _decompose(node)
    except UnsupportedNodeError:
        return False
    return True


def _decompose(node: ExprNode) -> _Pipe:
    kind = node.kind
    if kind == "source":
        return _Pipe(dataset=node.name)
    if kind == "const":
        return _Pipe(projection=("const", node.value))
    if kind == "param":
        if node.bind_src is None:
            raise UnsupportedNodeError("unbound parameter")
        return _decompose(node.bind_src)
    if kind == "attr":
        parent = _decompose(node.children[0])
        if parent.aggs:
            raise UnsupportedNodeError("cannot read a leaf after an aggregate")
        if parent.dataset is not None and parent.collection is None:
            return _Pipe(dataset=parent.dataset, collection=node.name)
        if parent.projection != _ELEMENT:
            raise UnsupportedNodeError(f"leaf {node.name!r} read from a non-record value")
        return _Pipe(parent.dataset, parent.collection, parent.wheres,
                     ("leaf", _ELEMENT, node.name), parent.aggs)
    if kind in ("binop", "unop", "call"):
        merged = _Pipe()
        projections = []
        for child in node.children:
            p = _decompose(child)
            merged = merged.merged_spine(p, node)
            projections.append(p.projection)
        if kind == "binop":
            projection = ("bin", node.op, projections[0], projections[1])
        elif kind == "unop":
            projection = ("un", node.op, projections[0])
        else:
            projection = ("callfn", node.name, tuple(projections))
        if any(p == _ELEMENT for p in projections):
            raise UnsupportedNodeError("whole records cannot appear in expressions")
        return _Pipe(merged.dataset, merged.collection, merged.wheres, projection)
    if kind == "filter":
        base = _decompose(node.bind_src)
        if base.aggs or base.projection != _ELEMENT:
            raise UnsupportedNodeError("filter parameter source must be a record sequence")
        seq = _decompose(node.children[0])
        if seq.aggs or seq.spine() != base.spine():
            raise UnsupportedNodeError("filtered sequence is misaligned with its parameter")
        body = _render_body(node.children[1], node.param_id)
        wheres = base.wheres + (body,)
        return _Pipe(base.dataset, base.collection, wheres, seq.projection)
    if kind == "map":
        base = _decompose(node.children[0])
        if base.aggs:
            raise UnsupportedNodeError("cannot project past an aggregate")
        body = _body_projection(node.children[1], node.param_id, base.projection)
        return _Pipe(base.dataset, base.collection, base.wheres, body)
    if kind == "agg":
        if node.op not in ("Count", "First"):
            raise UnsupportedNodeError(f"{node.op} has no query-language stage")
        base = _decompose(node.children[0])
        if base.aggs:
            raise UnsupportedNodeError("cannot stack aggregates in one query")
        if base.dataset is None:
            raise UnsupportedNodeError("aggregate of a constant")
        return _Pipe(base.dataset, base.collection, base.wheres, base.projection,
                     (node.op,))
    raise UnsupportedNodeError(f"node kind {kind!r} has no query-language form")


def _render_body(body: ExprNode, param_id: int) -> str:
    return _render(_body_projection(body, param_id, _ELEMENT), 0, 0)


def _body_projection(body: ExprNode, param_id: int, base: tuple) -> tuple:
    def walk(n: ExprNode) -> tuple:
        if n.kind == "param":
            if n.param_id != param_id:
                raise UnsupportedNodeError(
                    "predicate reaches a parameter of an enclosing expression")
            return base
        if n.kind == "const":
            return ("const", n.value)
        if n.kind == "attr":
            inner = walk(n.children[0])
            if inner != _ELEMENT:
                raise UnsupportedNodeError(f"leaf {n.name!r} read from a non-record value")
            return ("leaf", inner, n.name)
        if n.kind == "binop":
            return ("bin", n.op, walk(n.children[0]), walk(n.children[1]))
        if n.kind == "unop":
            return ("un", n.op, walk(n.children[0]))
        if n.kind == "call":
            return ("callfn", n.name, tuple(walk(c) for c in n.children))
        raise UnsupportedNodeError(
            f"lambda bodies must be elementwise; found {n.kind!r}")

    out = walk(body)
    if out == _ELEMENT:
        raise UnsupportedNodeError("a lambda must compute something from its element")
    return out


def render_number(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _render(expr: tuple, depth: int, context_prec: int) -> str:
    tag = expr[0]
    if tag == "elem":
        return f"p{depth}"
    if tag == "const":
        return render_number(expr[1])
    if tag == "leaf":
        return f"{_render(expr[1], depth, 7)}.{expr[2]}"
    if tag == "un":
        op, inner = expr[1], expr[2]
        if op == "neg":
            text = "-" + _render(inner, depth, 7)
            return f"({text})" if context_prec >= 7 else text
        return f"{_UNARY_TEXT[op]}({_render(inner, depth, 0)})"
    if tag == "callfn":
        args = ", ".join(_render(a, depth, 0) for a in expr[2])
        return f"{expr[1]}({args})"
    if tag == "bin":
        op = expr[1]
        prec = _PRECEDENCE[op]
        left_prec = prec if op in ("+", "-", "*", "/", "&", "|") else prec + 1
        text = (f"{_render(expr[2], depth, left_prec)} {_OP_TEXT.get(op, op)} "
                f"{_render(expr[3], depth, prec + 1)}")
        return f"({text})" if prec < context_prec else text
    raise UnsupportedNodeError(f"cannot render {tag!r}")
