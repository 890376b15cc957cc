"""Expression recording: immutable DAG nodes and the handles users compose.

Nothing here touches data.  Operations on :class:`ExprHandle` only append
nodes to the graph; evaluation happens later, when a planner hands the
canonical DAG to executors.

Node kinds:

    source    root of a dataset
    attr      leaf or collection access (``x.pt``, ``df.Electrons``)
    binop     ``+ - * / < > <= >= == != & |``
    unop      ``neg abs sqrt sin cos``
    filter    keep sequence elements where a predicate holds
    map       per-element evaluation of a body over a sequence
    agg       ``Count First Sum Min Max Any All`` over the innermost lists
    call      declared backend function application
    const     scalar literal
    param     the element placeholder bound by an enclosing filter/map

Filters built from a boolean expression over the sequence itself
(``eles[eles.pt > 5]``) are rewritten into the parameter form, so the
inline and function spellings of a cut produce the same DAG.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable

from .errors import (AliasCycleError, BuildError, DuplicateAliasError,
                     FunctionRedeclarationError, UnboundParamError,
                     UnknownFunctionError)
from .jagged import ElementKind

BINARY_OPS = {"+", "-", "*", "/", "<", ">", "<=", ">=", "==", "!=", "&", "|"}
UNARY_OPS = {"neg", "abs", "sqrt", "sin", "cos"}
AGGREGATE_OPS = {"Count", "First", "Sum", "Min", "Max", "Any", "All"}

#: functions every backend ships without an explicit declaration
BUILTIN_FUNCTIONS = {
    "DeltaR": ((ElementKind.FLOAT,) * 4, ElementKind.FLOAT),
    "Atan2": ((ElementKind.FLOAT,) * 2, ElementKind.FLOAT),
}


class ExprNode:
    """One immutable DAG node.  Identity is the node, not its content."""

    __slots__ = ("node_id", "kind", "op", "name", "value", "param_id",
                 "children", "bind_src")

    def __init__(self, node_id, kind, *, op=None, name=None, value=None,
                 param_id=None, children=(), bind_src=None):
        self.node_id = node_id
        self.kind = kind
        self.op = op
        self.name = name
        self.value = value
        self.param_id = param_id
        self.children = tuple(children)
        self.bind_src = bind_src

    def operands(self) -> tuple["ExprNode", ...]:
        """Nodes whose values this node consumes (for planning/topology)."""
        if self.kind == "param":
            return (self.bind_src,) if self.bind_src is not None else ()
        return self.children

    def label(self) -> str:
        if self.kind == "source":
            return f"source({self.name})"
        if self.kind == "attr":
            return f".{self.name}"
        if self.kind == "binop":
            return self.op
        if self.kind == "unop":
            return self.op
        if self.kind == "filter":
            return "[filter]"
        if self.kind == "map":
            return "map"
        if self.kind == "agg":
            return self.op
        if self.kind == "call":
            return f"{self.name}()"
        if self.kind == "const":
            return repr(self.value)
        return f"p{self.param_id}"

    def __repr__(self) -> str:
        return f"<n{self.node_id} {self.label()}>"


def _const_key(value):
    return (type(value).__name__, repr(value))


class _NodeSpace:
    """Interning table: structurally identical nodes come back shared."""

    def __init__(self):
        self._next_id = 0
        self._next_param = 0
        self._interned: dict[tuple, ExprNode] = {}

    def fresh_param_id(self) -> int:
        pid = self._next_param
        self._next_param += 1
        return pid

    def node(self, kind, *, op=None, name=None, value=None, param_id=None,
             children=(), bind_src=None) -> ExprNode:
        key = (kind, op, name, _const_key(value) if kind == "const" else None,
               param_id, tuple(c.node_id for c in children),
               bind_src.node_id if bind_src is not None else None)
        found = self._interned.get(key)
        if found is not None:
            return found
        made = ExprNode(self._next_id, kind, op=op, name=name, value=value,
                        param_id=param_id, children=children, bind_src=bind_src)
        self._next_id += 1
        self._interned[key] = made
        return made

    def constant(self, value) -> ExprNode:
        if isinstance(value, (bool, int, float)):
            if isinstance(value, float) and not math.isfinite(value):
                raise BuildError("constants must be finite")
            return self.node("const", value=value)
        raise BuildError(f"cannot embed {type(value).__name__} as a constant")

    def substitute(self, root: ExprNode, mapping: dict[ExprNode, ExprNode]) -> ExprNode:
        """Replace nodes per ``mapping``; binders whose bodies change get
        fresh parameters so no parameter ends up with two binders."""
        memo: dict[int, ExprNode] = {}

        def walk(n: ExprNode) -> ExprNode:
            if n in mapping:
                return mapping[n]
            hit = memo.get(n.node_id)
            if hit is not None:
                return hit
            children = tuple(walk(c) for c in n.children)
            src = walk(n.bind_src) if n.bind_src is not None else None
            if children == n.children and src is n.bind_src:
                memo[n.node_id] = n
                return n
            if n.kind in ("filter", "map"):
                out = self._rebind(n, children, src)
            else:
                out = self.node(n.kind, op=n.op, name=n.name, value=n.value,
                                param_id=n.param_id, children=children, bind_src=src)
            memo[n.node_id] = out
            return out

        return walk(root)

    def _rebind(self, n: ExprNode, children, src) -> ExprNode:
        seq, body = children
        old_param = self.node("param", param_id=n.param_id, bind_src=n.bind_src)
        new_pid = self.fresh_param_id()
        new_param = self.node("param", param_id=new_pid, bind_src=src)
        body = self.substitute(body, {old_param: new_param})
        return self.node(n.kind, param_id=new_pid, children=(seq, body), bind_src=src)


class FunctionDecl:
    __slots__ = ("name", "param_kinds", "ret_kind")

    def __init__(self, name: str, param_kinds, ret_kind: ElementKind):
        self.name = name
        self.param_kinds = tuple(param_kinds)
        self.ret_kind = ret_kind

    def same_signature(self, other: "FunctionDecl") -> bool:
        return self.param_kinds == other.param_kinds and self.ret_kind == other.ret_kind


class Session:
    """Owns one expression graph: node interning, aliases, declared functions."""

    def __init__(self):
        self.space = _NodeSpace()
        self.functions: dict[str, FunctionDecl] = {
            name: FunctionDecl(name, params, ret)
            for name, (params, ret) in BUILTIN_FUNCTIONS.items()
        }
        self.aliases: dict[tuple[str, str], tuple[ExprNode, ExprNode]] = {}
        self._alias_stack: list[tuple[str, str]] = []
        self._origins: dict[int, str | None] = {}

    # -- roots and declarations ------------------------------------------

    def source(self, dataset_id: str) -> "ExprHandle":
        return self._wrap(self.space.node("source", name=dataset_id))

    def declare_function(self, name: str, param_kinds: Iterable[ElementKind],
                         ret_kind: ElementKind) -> Callable:
        """Declare a backend function up front; returns a call builder."""
        decl = FunctionDecl(name, param_kinds, ret_kind)
        existing = self.functions.get(name)
        if existing is not None and not existing.same_signature(decl):
            raise FunctionRedeclarationError(
                f"function {name!r} already declared with a different signature")
        self.functions[name] = decl

        def build(*args):
            return self.call(name, *args)

        build.__name__ = name
        return build

    def call(self, name: str, *args) -> "ExprHandle":
        decl = self.functions.get(name)
        if decl is None:
            raise UnknownFunctionError(f"function {name!r} was not declared")
        if len(args) != len(decl.param_kinds):
            raise BuildError(f"{name} expects {len(decl.param_kinds)} arguments, "
                             f"got {len(args)}")
        nodes = tuple(self._as_node(a) for a in args)
        return self._wrap(self.space.node("call", name=name, children=nodes))

    def define_alias(self, anchor: "ExprHandle", name: str, body) -> None:
        """Attach a computed column to the anchor's collection shape.

        A callable body is late bound: it runs once per reference, with the
        referencing expression as its argument, so aliases may use aliases
        defined afterwards.  Expression and constant bodies are stored as
        substitution templates.
        """
        origin = self.origin_of(anchor.node)
        if origin is None:
            raise BuildError("alias anchor must be a collection-shaped expression")
        key = (origin, name)
        if key in self.aliases:
            raise DuplicateAliasError(f"{name!r} is already defined on {origin or 'the dataset'}")
        if callable(body) and not isinstance(body, ExprHandle):
            self.aliases[key] = ("deferred", body)
        elif isinstance(body, ExprHandle):
            self._check_session(body)
            formal = self.space.node("param", param_id=self.space.fresh_param_id())
            template = self.space.substitute(body.node, {anchor.node: formal})
            self.aliases[key] = ("template", (formal, template))
        else:
            self.aliases[key] = ("const", self.space.constant(body))

    # -- node building ----------------------------------------------------

    def _wrap(self, node: ExprNode) -> "ExprHandle":
        return ExprHandle(self, node)

    def _as_node(self, value) -> ExprNode:
        if isinstance(value, ExprHandle):
            self._check_session(value)
            return value.node
        return self.space.constant(value)

    def _check_session(self, handle: "ExprHandle") -> None:
        if handle.session is not self:
            raise BuildError("cannot mix expressions from different sessions")

    def attribute(self, parent: "ExprHandle", name: str) -> "ExprHandle":
        self._check_session(parent)
        origin = self.origin_of(parent.node)
        if origin is not None and (origin, name) in self.aliases:
            return self._wrap(self._instantiate_alias((origin, name), parent.node))
        return self._wrap(self.space.node("attr", name=name, children=(parent.node,)))

    def _instantiate_alias(self, key, anchor_node: ExprNode) -> ExprNode:
        if key in self._alias_stack:
            chain = " -> ".join(n for _, n in self._alias_stack + [key])
            raise AliasCycleError(f"alias definitions form a cycle: {chain}")
        tag, payload = self.aliases[key]
        self._alias_stack.append(key)
        try:
            if tag == "deferred":
                result = payload(self._wrap(anchor_node))
                if not isinstance(result, ExprHandle):
                    raise BuildError(f"alias {key[1]!r} must build an expression")
                return result.node
            if tag == "template":
                formal, template = payload
                return self.space.substitute(template, {formal: anchor_node})
            return payload  # constant
        finally:
            self._alias_stack.pop()

    def binary(self, op: str, left, right) -> "ExprHandle":
        if op not in BINARY_OPS:
            raise BuildError(f"unknown operator {op!r}")
        l, r = self._as_node(left), self._as_node(right)
        return self._wrap(self.space.node("binop", op=op, children=(l, r)))

    def unary(self, op: str, operand: "ExprHandle") -> "ExprHandle":
        if op not in UNARY_OPS:
            raise BuildError(f"unknown unary operator {op!r}")
        return self._wrap(self.space.node("unop", op=op, children=(self._as_node(operand),)))

    def filter(self, seq: "ExprHandle", predicate) -> "ExprHandle":
        self._check_session(seq)
        pid = self.space.fresh_param_id()
        param = self.space.node("param", param_id=pid, bind_src=seq.node)
        if isinstance(predicate, ExprHandle):
            self._check_session(predicate)
            body = self.space.substitute(predicate.node, {seq.node: param})
        elif callable(predicate):
            result = predicate(self._wrap(param))
            if not isinstance(result, ExprHandle):
                raise BuildError("filter predicate must build an expression")
            body = result.node
        else:
            body = self.space.constant(predicate)
        node = self.space.node("filter", param_id=pid, children=(seq.node, body),
                               bind_src=seq.node)
        return self._wrap(node)

    def map(self, seq: "ExprHandle", fn: Callable) -> "ExprHandle":
        self._check_session(seq)
        if not callable(fn):
            raise BuildError("map body must be callable")
        pid = self.space.fresh_param_id()
        param = self.space.node("param", param_id=pid, bind_src=seq.node)
        result = fn(self._wrap(param))
        if isinstance(result, ExprHandle):
            body = result.node
        elif isinstance(result, (bool, int, float)):
            body = self.space.constant(result)
        else:
            raise BuildError("map body must build an expression")
        node = self.space.node("map", param_id=pid, children=(seq.node, body),
                               bind_src=seq.node)
        return self._wrap(node)

    def aggregate(self, seq: "ExprHandle", op: str) -> "ExprHandle":
        self._check_session(seq)
        if op not in AGGREGATE_OPS:
            raise BuildError(f"unknown aggregate {op!r}")
        return self._wrap(self.space.node("agg", op=op, children=(seq.node,)))

    # -- origin tracking (which collection an expression descends from) ---

    def origin_of(self, node: ExprNode) -> str | None:
        hit = self._origins.get(node.node_id, "missing")
        if hit != "missing":
            return hit
        out: str | None
        if node.kind == "source":
            out = ""
        elif node.kind == "attr":
            parent = node.children[0]
            out = node.name if parent.kind == "source" else None
        elif node.kind == "filter":
            out = self.origin_of(node.children[0])
        elif node.kind == "agg" and node.op == "First":
            out = self.origin_of(node.children[0])
        elif node.kind == "param":
            out = self.origin_of(node.bind_src) if node.bind_src is not None else None
        else:
            out = None
        self._origins[node.node_id] = out
        return out


class ExprHandle:
    """What users compose.  Wraps one DAG node plus its session."""

    __slots__ = ("session", "node")

    def __init__(self, session: Session, node: ExprNode):
        object.__setattr__(self, "session", session)
        object.__setattr__(self, "node", node)

    def __setattr__(self, name, value):
        raise BuildError("expression handles are immutable; use h[name] = ... for aliases")

    # attribute / item access

    def __getattr__(self, name: str):
        if name.startswith("_"):
            raise AttributeError(name)
        if name in AGGREGATE_OPS:
            return lambda: self.session.aggregate(self, name)
        if name == "map":
            return lambda fn: self.session.map(self, fn)
        return self.session.attribute(self, name)

    def __getitem__(self, item):
        if isinstance(item, str):
            return self.session.attribute(self, item)
        if isinstance(item, (ExprHandle, bool)) or callable(item):
            return self.session.filter(self, item)
        raise BuildError(f"cannot index an expression with {type(item).__name__}")

    def __setitem__(self, name, body):
        if not isinstance(name, str):
            raise BuildError("alias names must be strings")
        self.session.define_alias(self, name, body)

    def __call__(self, *args):
        node = self.node
        if (node.kind == "attr" and node.children[0].kind == "source"
                and len(args) == 1 and isinstance(args[0], str)):
            # collection accessor sugar: df.Electrons("Electrons")
            return self.session.attribute(ExprHandle(self.session, node.children[0]), args[0])
        raise BuildError("expressions are not callable")

    # operators

    def _bin(self, op, other, flipped=False):
        if flipped:
            return self.session.binary(op, other, self)
        return self.session.binary(op, self, other)

    def __add__(self, o): return self._bin("+", o)
    def __radd__(self, o): return self._bin("+", o, True)
    def __sub__(self, o): return self._bin("-", o)
    def __rsub__(self, o): return self._bin("-", o, True)
    def __mul__(self, o): return self._bin("*", o)
    def __rmul__(self, o): return self._bin("*", o, True)
    def __truediv__(self, o): return self._bin("/", o)
    def __rtruediv__(self, o): return self._bin("/", o, True)
    def __lt__(self, o): return self._bin("<", o)
    def __gt__(self, o): return self._bin(">", o)
    def __le__(self, o): return self._bin("<=", o)
    def __ge__(self, o): return self._bin(">=", o)
    def __eq__(self, o): return self._bin("==", o)
    def __ne__(self, o): return self._bin("!=", o)
    def __and__(self, o): return self._bin("&", o)
    def __rand__(self, o): return self._bin("&", o, True)
    def __or__(self, o): return self._bin("|", o)
    def __ror__(self, o): return self._bin("|", o, True)
    def __neg__(self): return self.session.unary("neg", self)
    def __abs__(self): return self.session.unary("abs", self)

    __hash__ = None

    def __bool__(self):
        raise BuildError("expression truthiness is undefined; combine cuts with & and |")

    def __repr__(self):
        return f"ExprHandle({self.node!r})"


def sqrt(x: ExprHandle) -> ExprHandle:
    return x.session.unary("sqrt", x)


def sin(x: ExprHandle) -> ExprHandle:
    return x.session.unary("sin", x)


def cos(x: ExprHandle) -> ExprHandle:
    return x.session.unary("cos", x)


def atan2(y, x) -> ExprHandle:
    handle = y if isinstance(y, ExprHandle) else x
    if not isinstance(handle, ExprHandle):
        raise BuildError("atan2 needs at least one expression argument")
    return handle.session.call("Atan2", y, x)


# ---------------------------------------------------------------------------
# canonical form


class CanonicalDag:
    """Alias-substituted, parameter-resolved DAG with deterministic ids.

    Node ids are postorder positions of a structural depth-first walk, so
    the same user program always canonicalizes to the same byte-identical
    text, whatever session produced it.
    """

    def __init__(self, root: ExprNode, nodes: list[ExprNode]):
        self.root = root
        self.nodes = nodes
        self.by_id = {n.node_id: n for n in nodes}
        consumers: dict[int, list[int]] = {n.node_id: [] for n in nodes}
        for n in nodes:
            for op in n.operands():
                consumers[op.node_id].append(n.node_id)
        self.consumers = consumers

    def text(self) -> str:
        lines = []
        for n in self.nodes:
            parts = [f"n{n.node_id}", n.kind]
            if n.op is not None:
                parts.append(f"op={n.op}")
            if n.name is not None:
                parts.append(f"name={n.name}")
            if n.kind == "const":
                parts.append(f"value={type(n.value).__name__}:{n.value!r}")
            if n.param_id is not None:
                parts.append(f"param={n.param_id}")
            if n.children:
                parts.append("children=(" + ",".join(f"n{c.node_id}" for c in n.children) + ")")
            if n.bind_src is not None:
                parts.append(f"src=n{n.bind_src.node_id}")
            lines.append(" ".join(parts))
        lines.append(f"root=n{self.root.node_id}")
        return "\n".join(lines)


def _elementwise_over(body: ExprNode, param: ExprNode) -> bool:
    """True when ``body`` reads the parameter and nothing but the parameter,
    constants and functions of them, so a map over it can be inlined."""
    memo: dict[int, bool] = {}

    def ok(n: ExprNode) -> bool:
        hit = memo.get(n.node_id)
        if hit is not None:
            return hit
        if n is param or n.kind == "const":
            out = True
        elif n.kind == "attr":
            out = ok(n.children[0])
        elif n.kind in ("binop", "unop", "call"):
            out = all(ok(c) for c in n.children)
        else:
            out = False
        memo[n.node_id] = out
        return out

    def uses_param(n: ExprNode) -> bool:
        if n is param:
            return True
        return any(uses_param(c) for c in n.children)

    return ok(body) and uses_param(body)


def canonicalize(root) -> CanonicalDag:
    """Normalize and renumber an expression DAG.

    Normalizations applied (all behavior-preserving):

    * identity maps and constant-true filters dissolve into their sequence;
    * maps whose body is elementwise over the parameter are inlined, so the
      attribute and map spellings of the same projection coincide;
    * leaf access distributes through filters and ``First``, so boundary
      payloads are always plain jagged arrays rather than whole records.
    """
    if isinstance(root, ExprHandle):
        root = root.node
    space = _NodeSpace()
    # keep fresh parameter ids clear of the incoming graph's ids
    space._next_param = _max_param_id(root) + 1
    norm_memo: dict[int, ExprNode] = {}

    def norm(n: ExprNode) -> ExprNode:
        hit = norm_memo.get(n.node_id)
        if hit is not None:
            return hit
        children = tuple(norm(c) for c in n.children)
        src = norm(n.bind_src) if n.bind_src is not None else None
        out = rebuild(n, children, src)
        norm_memo[n.node_id] = out
        return out

    def rebuild(n: ExprNode, children, src) -> ExprNode:
        if n.kind == "map":
            seq, body = children
            param = space.node("param", param_id=n.param_id, bind_src=src)
            if body is param:
                return seq
            if _elementwise_over(body, param):
                return norm_again(space.substitute(body, {param: seq}))
            return space.node("map", param_id=n.param_id, children=(seq, body), bind_src=src)
        if n.kind == "filter":
            seq, body = children
            if body.kind == "const" and body.value is True:
                return seq
            return space.node("filter", param_id=n.param_id, children=(seq, body), bind_src=src)
        if n.kind == "attr":
            parent = children[0]
            if parent.kind == "filter":
                inner = rebuild(n, (parent.children[0],), None)
                return space.node("filter", param_id=parent.param_id,
                                  children=(inner, parent.children[1]),
                                  bind_src=parent.bind_src)
            if parent.kind == "agg" and parent.op == "First":
                inner = rebuild(n, (parent.children[0],), None)
                return space.node("agg", op="First", children=(inner,))
        return space.node(n.kind, op=n.op, name=n.name, value=n.value,
                          param_id=n.param_id, children=children, bind_src=src)

    again_memo: dict[int, ExprNode] = {}

    def norm_again(n: ExprNode) -> ExprNode:
        # inlined map bodies may expose new attr-through-filter chances
        hit = again_memo.get(n.node_id)
        if hit is not None:
            return hit
        children = tuple(norm_again(c) for c in n.children)
        src = norm_again(n.bind_src) if n.bind_src is not None else None
        out = rebuild(n, children, src)
        again_memo[n.node_id] = out
        return out

    normalized = norm(root)

    order: list[ExprNode] = []
    seen: set[int] = set()

    def visit(n: ExprNode) -> None:
        if n.node_id in seen:
            return
        seen.add(n.node_id)
        for c in n.children:
            visit(c)
        if n.bind_src is not None:
            visit(n.bind_src)
        order.append(n)

    visit(normalized)

    binder_params = [n.param_id for n in order if n.kind in ("filter", "map")]
    param_rename = {pid: i for i, pid in enumerate(dict.fromkeys(binder_params))}
    _check_bound(normalized)

    final: dict[int, ExprNode] = {}
    nodes: list[ExprNode] = []
    for cid, n in enumerate(order):
        children = tuple(final[c.node_id] for c in n.children)
        src = final[n.bind_src.node_id] if n.bind_src is not None else None
        pid = param_rename.get(n.param_id) if n.param_id is not None else None
        made = ExprNode(cid, n.kind, op=n.op, name=n.name, value=n.value,
                        param_id=pid, children=children, bind_src=src)
        final[n.node_id] = made
        nodes.append(made)
    return CanonicalDag(final[normalized.node_id], nodes)


def _max_param_id(root: ExprNode) -> int:
    seen: set[int] = set()
    best = -1

    def visit(n: ExprNode) -> None:
        nonlocal best
        if n.node_id in seen:
            return
        seen.add(n.node_id)
        if n.param_id is not None:
            best = max(best, n.param_id)
        for c in n.children:
            visit(c)
        if n.bind_src is not None:
            visit(n.bind_src)

    visit(root)
    return best


def _check_bound(root: ExprNode) -> None:
    def visit(n: ExprNode, bound: frozenset) -> None:
        if n.kind == "param":
            if n.param_id not in bound:
                raise UnboundParamError(
                    f"parameter p{n.param_id} is not bound by any enclosing filter/map")
            return
        if n.kind in ("filter", "map"):
            seq, body = n.children
            visit(seq, bound)
            visit(body, bound | {n.param_id})
            return
        for c in n.children:
            visit(c, bound)

    visit(root, frozenset())
