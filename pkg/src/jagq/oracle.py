"""Brute-force reference evaluator: explicit per-event loops, scalar math.

This module is the ground truth the engine is tested against.  It walks the
canonical DAG one event at a time, binding filter/map parameters to actual
elements and looping in plain Python.  It shares the error taxonomy with the
executors but none of their evaluation code: no jagged kernels, no numpy.

Results come back as nested Python lists (dicts for records), one entry per
event; tests convert engine output with ``to_lists()`` to compare.

The oracle is only defined for expressions the engine accepts; programs the
engine rejects for axis mismatches may fail here with a different error.
"""
from __future__ import annotations

import math

from .errors import EmptySequenceError, KindError, ShapeMismatchError
from .expr import CanonicalDag, ExprNode


def _oracle_delta_r(eta1, phi1, eta2, phi2):
    dphi = math.pi - math.fmod(math.pi - (phi1 - phi2), 2.0 * math.pi)
    if dphi > math.pi:
        dphi -= 2.0 * math.pi
    return math.sqrt((eta1 - eta2) ** 2 + dphi ** 2)


#: scalar implementations used by the oracle only
ORACLE_FUNCTIONS = {
    "DeltaR": _oracle_delta_r,
    "Atan2": math.atan2,
}

_DATASET = object()  # marker for the source node's per-event value


def oracle_eval(dag: CanonicalDag, events: list[dict], functions=None) -> list:
    """Evaluate the DAG root independently for every event."""
    fns = dict(ORACLE_FUNCTIONS)
    if functions:
        fns.update(functions)
    out = []
    for index, event in enumerate(events):
        ctx = _EventContext(dag, event, index, fns)
        out.append(ctx.eval(dag.root, {}))
    return out


class _EventContext:
    def __init__(self, dag, event, event_index, functions):
        self.dag = dag
        self.event = event
        self.event_index = event_index
        self.functions = functions

    # -- evaluation ---------------------------------------------------------

    def eval(self, node: ExprNode, env: dict):
        kind = node.kind
        if kind == "const":
            return node.value
        if kind == "source":
            return _DATASET
        if kind == "param":
            if node.param_id in env:
                return env[node.param_id]
            return self.eval(node.bind_src, env)
        if kind == "attr":
            parent = self.eval(node.children[0], env)
            if parent is _DATASET:
                return [dict(rec) for rec in self.event.get(node.name, [])]
            return _attr_apply(parent, node.name)
        if kind == "binop":
            a = self.eval(node.children[0], env)
            b = self.eval(node.children[1], env)
            return _bmap(lambda x, y: _scalar_op(node.op, x, y), a, b)
        if kind == "unop":
            a = self.eval(node.children[0], env)
            return _umap(node.op, a)
        if kind == "call":
            fn = self.functions[node.name]
            args = [self.eval(c, env) for c in node.children]
            return _bmap_n(fn, args)
        if kind == "agg":
            value = self.eval(node.children[0], env)
            levels = self.depth_of(node.children[0], frozenset(env))
            return self._reduce(node.op, value, levels)
        if kind == "filter":
            return self._filter(node, env)
        if kind == "map":
            seq = self.eval(node.children[0], env)
            return [self.eval(node.children[1], {**env, node.param_id: elem})
                    for elem in seq]
        raise ShapeMismatchError(f"oracle cannot evaluate node kind {kind!r}")

    def _filter(self, node: ExprNode, env: dict):
        seq = self.eval(node.children[0], env)
        src = self.eval(node.bind_src, env)
        if len(seq) != len(src):
            raise ShapeMismatchError("filter parameter source is misaligned")
        body = node.children[1]
        crossed = self.depth_of(body, frozenset(env) | {node.param_id}) >= 1
        verdicts = [self.eval(body, {**env, node.param_id: elem}) for elem in src]
        if not crossed:
            return [elem for elem, keep in zip(seq, verdicts) if keep]
        if verdicts:
            width = len(verdicts[0])
        else:
            width = self._free_width(body, env, node.param_id)
        return [[elem for elem, keep in zip(seq, verdicts) if keep[w]]
                for w in range(width)]

    def _reduce(self, op: str, value, levels: int):
        if levels <= 0:
            raise ShapeMismatchError(f"{op} needs at least one nesting level")
        if levels > 1:
            return [self._reduce(op, inner, levels - 1) for inner in value]
        if op == "Count":
            return len(value)
        if op == "First":
            if not value:
                raise EmptySequenceError("first", self.event_index)
            return value[0]
        if op in ("Min", "Max"):
            if not value:
                raise EmptySequenceError(op.lower(), self.event_index)
            return min(value) if op == "Min" else max(value)
        if op == "Sum":
            total = 0
            for item in value:
                total = total + item
            return total
        if op == "Any":
            return _bool_reduce(value, any)
        if op == "All":
            return _bool_reduce(value, all)
        raise KindError(f"unknown aggregate {op!r}")

    # -- static structure helpers --------------------------------------------

    def depth_of(self, node: ExprNode, bound: frozenset) -> int:
        """Nesting depth of a node's per-event value when every parameter in
        ``bound`` is held to a single element."""
        kind = node.kind
        if kind in ("const",):
            return 0
        if kind == "param":
            if node.param_id in bound:
                return 0
            return self.depth_of(node.bind_src, bound)
        if kind == "source":
            return 0
        if kind == "attr":
            parent = node.children[0]
            if parent.kind == "source":
                return 1
            return self.depth_of(parent, bound)
        if kind in ("binop", "call"):
            return max(self.depth_of(c, bound) for c in node.children)
        if kind == "unop":
            return self.depth_of(node.children[0], bound)
        if kind == "filter":
            body_depth = self.depth_of(node.children[1], bound | {node.param_id})
            return 1 + body_depth
        if kind == "map":
            return 1 + self.depth_of(node.children[1], bound | {node.param_id})
        if kind == "agg":
            return self.depth_of(node.children[0], bound) - 1
        raise ShapeMismatchError(f"oracle cannot size node kind {kind!r}")

    def _contains_param(self, node: ExprNode, pid: int) -> bool:
        if node.kind == "param":
            return node.param_id == pid or (
                node.bind_src is not None and self._contains_param(node.bind_src, pid))
        return any(self._contains_param(c, pid) for c in node.children) or (
            node.bind_src is not None and self._contains_param(node.bind_src, pid))

    def _free_width(self, body: ExprNode, env: dict, pid: int) -> int:
        """Length of the free sequence a crossed predicate runs over, needed
        when the filtered sequence itself is empty this event."""
        candidates: list[ExprNode] = []

        def scan(n: ExprNode) -> None:
            if not self._contains_param(n, pid) and \
                    self.depth_of(n, frozenset(env) | {pid}) == 1:
                candidates.append(n)
                return
            for c in n.children:
                scan(c)

        scan(body)
        if not candidates:
            raise ShapeMismatchError("crossed filter has no free sequence")
        return len(self.eval(candidates[0], env))


def _attr_apply(value, name: str):
    if isinstance(value, list):
        return [_attr_apply(v, name) for v in value]
    if isinstance(value, dict):
        if name not in value:
            raise ShapeMismatchError(f"record has no field {name!r}")
        return value[name]
    raise ShapeMismatchError(f"cannot read field {name!r} of {type(value).__name__}")


def _bool_reduce(value, fn):
    for item in value:
        if not isinstance(item, bool):
            raise KindError("any/all need boolean elements")
    return fn(value)


def _bmap(fn, a, b):
    a_list, b_list = isinstance(a, list), isinstance(b, list)
    if a_list and b_list:
        if len(a) != len(b):
            raise ShapeMismatchError("elementwise operands have different lengths")
        return [_bmap(fn, x, y) for x, y in zip(a, b)]
    if a_list:
        return [_bmap(fn, x, b) for x in a]
    if b_list:
        return [_bmap(fn, a, y) for y in b]
    return fn(a, b)


def _bmap_n(fn, args):
    lists = [x for x in args if isinstance(x, list)]
    if not lists:
        return fn(*args)
    length = len(lists[0])
    if any(len(x) != length for x in lists):
        raise ShapeMismatchError("elementwise operands have different lengths")
    return [_bmap_n(fn, [x[i] if isinstance(x, list) else x for x in args])
            for i in range(length)]


def _scalar_op(op, a, b):
    if op in ("&", "|") and not (isinstance(a, bool) and isinstance(b, bool)):
        raise KindError("logic on non-boolean operands")
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        try:
            return a / b
        except ZeroDivisionError:
            if a == 0:
                return math.nan
            return math.inf if a > 0 else -math.inf
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "&":
        return a and b
    if op == "|":
        return a or b
    raise KindError(f"unknown operator {op!r}")


def _umap(op, a):
    if isinstance(a, list):
        return [_umap(op, x) for x in a]
    if isinstance(a, bool):
        raise KindError(f"unary {op!r} on a boolean")
    if op == "neg":
        return -float(a)
    if op == "abs":
        return abs(float(a))
    if op == "sqrt":
        return math.sqrt(a)
    if op == "sin":
        return math.sin(a)
    if op == "cos":
        return math.cos(a)
    raise KindError(f"unknown unary {op!r}")
