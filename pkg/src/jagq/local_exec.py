"""Node-at-a-time interpreter over the jagged kernels.

Each DAG node maps directly onto one kernel; there is no fusion, which
keeps this executor simple enough to trust.  Values for nodes handed over
from other backends arrive pre-bound, so evaluation never descends below a
materialization boundary.
"""
from __future__ import annotations

import math

import numpy as np

from . import jagged
from .errors import ExecutionError
from .expr import CanonicalDag, ExprNode
from .jagged import ElementKind, JaggedArray, cross_indices, cross_nest
from .records import RecordArray, Scalar
from .schema import DataShape, InferenceResult


def delta_r(eta1, phi1, eta2, phi2):
    """Angular separation sqrt(deta^2 + dphi^2), dphi wrapped into (-pi, pi]."""
    eta1 = np.asarray(eta1, dtype=np.float64)
    deta = eta1 - np.asarray(eta2, dtype=np.float64)
    dphi = np.pi - np.mod(np.pi - (np.asarray(phi1, dtype=np.float64)
                                   - np.asarray(phi2, dtype=np.float64)), 2.0 * np.pi)
    return np.sqrt(deta * deta + dphi * dphi)


#: vectorized implementations of the functions this backend provides
LOCAL_FUNCTIONS = {
    "DeltaR": delta_r,
    "Atan2": np.arctan2,
}

_AGG_TO_KERNEL = {"Count": "count", "First": "first", "Sum": "sum",
                  "Min": "min", "Max": "max", "Any": "any", "All": "all"}


def evaluate_root(dag: CanonicalDag, shapes: InferenceResult, store,
                  functions=None, bindings: dict | None = None):
    """Evaluate a whole DAG in one go (used by the query service)."""
    ev = _Evaluator(dag, shapes, store, dict(LOCAL_FUNCTIONS if functions is None
                                             else functions), bindings or {})
    return ev.value(dag.root)


class LocalExecutor:
    """The local array plug-in: evaluates plan steps with in-memory kernels."""

    backend_id = "local"

    def __init__(self, store=None, functions=None):
        self.store = store
        self.functions = dict(LOCAL_FUNCTIONS if functions is None else functions)

    def run_step(self, dag: CanonicalDag, shapes: InferenceResult, step, inputs: dict,
                 dataset_id: str | None = None) -> dict:
        ev = _Evaluator(dag, shapes, self.store, self.functions, inputs)
        return {nid: ev.value(dag.by_id[nid]) for nid in step.output_ids}


class _Evaluator:
    def __init__(self, dag, shapes, store, functions, bindings: dict):
        self.dag = dag
        self.shapes = shapes
        self.store = store
        self.functions = functions
        self.memo = dict(bindings)

    def value(self, node: ExprNode):
        hit = self.memo.get(node.node_id)
        if hit is not None:
            return hit
        out = self._eval(node)
        if __debug__:
            self._check_shape(node, out)
        self.memo[node.node_id] = out
        return out

    def _shape(self, node: ExprNode) -> DataShape:
        return self.shapes[node.node_id]

    def _check_shape(self, node, value) -> None:
        shape = self._shape(node)
        if isinstance(value, Scalar):
            assert shape.axes is None
        elif isinstance(value, RecordArray):
            assert shape.record and value.depth == shape.depth
        elif isinstance(value, JaggedArray):
            assert not shape.record and value.depth == shape.depth
            assert shape.kind is None or value.kind is shape.kind

    # -- node dispatch -----------------------------------------------------

    def _eval(self, node: ExprNode):
        kind = node.kind
        if kind == "const":
            return Scalar(ElementKind.of_scalar(node.value), node.value)
        if kind == "source":
            if self.store is None:
                raise ExecutionError(
                    "this backend cannot read the dataset; the planner should not "
                    "have routed a source here", nodes=(node.node_id,))
            return self.store
        if kind == "param":
            return self.value(node.bind_src)
        if kind == "attr":
            parent = self.value(node.children[0])
            if isinstance(parent, RecordArray):
                return parent.column(node.name)
            if hasattr(parent, "collection"):  # event store duck type
                return parent.collection(node.name)
            raise ExecutionError(f"cannot read field {node.name!r} of a primitive",
                                 nodes=(node.node_id,))
        if kind == "binop":
            return self._elementwise(node)
        if kind == "unop":
            child = self.value(node.children[0])
            if isinstance(child, Scalar):
                return Scalar(ElementKind.FLOAT, _scalar_unary(node.op, child.value))
            return jagged.elementwise_unary(node.op, child)
        if kind == "call":
            return self._call(node)
        if kind == "filter":
            return self._filter(node)
        if kind == "map":
            return self._map(node)
        if kind == "agg":
            seq = self.value(node.children[0])
            op = _AGG_TO_KERNEL[node.op]
            if isinstance(seq, RecordArray):
                return seq.reduced(op)
            return jagged.reduce_innermost(op, seq)
        raise ExecutionError(f"unexpected node kind {kind!r}", nodes=(node.node_id,))

    # -- elementwise broadcasting -------------------------------------------

    def _conform(self, node: ExprNode, children: list[ExprNode]):
        """Broadcast child values onto ``node``'s inferred axes.

        Returns (offset_levels, flat value arrays).  Offsets come from any
        child that already has the full axes; a pure cross of two
        depth-1 sequences derives them with ``cross_nest``.
        """
        target = self._shape(node).axes
        values = [self.value(c) for c in children]
        axes = [self._shape(c).axes for c in children]
        if target is None:
            return None, values
        base = None
        for v, a in zip(values, axes):
            if a == target and not isinstance(v, Scalar):
                base = v
                break
        if base is None:
            if len(target) != 2:
                raise ExecutionError("cannot reconstruct broadcast structure",
                                     nodes=(node.node_id,))
            outer = self._axis_value(target[0], values, axes)
            inner = self._axis_value(target[1], values, axes)
            levels = cross_nest(outer.offset_levels[0], inner.offset_levels[0])
            flat_len = int(levels[-1][-1])
        else:
            levels = base.offset_levels
            flat_len = len(base.values)
        flats = []
        for v, a in zip(values, axes):
            flats.append(self._lift(v, a, target, levels, flat_len, node))
        return levels, flats

    def _axis_value(self, axis: int, values, axes):
        for v, a in zip(values, axes):
            if a == (axis,) and not isinstance(v, Scalar):
                return v
        raise ExecutionError(f"no operand carries axis {axis}")

    def _lift(self, value, have, target, levels, flat_len, node):
        if isinstance(value, Scalar):
            return np.full(flat_len, value.value, dtype=value.kind.dtype)
        if have == target:
            return value.values
        if len(have) < len(target) and tuple(target[:len(have)]) == tuple(have):
            reps = self._expansion_counts(levels, len(have))
            return np.repeat(value.values, reps)
        if len(have) == 1 and len(target) == 2 and target[1] == have[0]:
            outer_off = levels[0]
            _, idx_inner = cross_indices(outer_off, value.offset_levels[0])
            return value.values[idx_inner]
        raise ExecutionError("operand axes do not broadcast", nodes=(node.node_id,))

    @staticmethod
    def _expansion_counts(levels, have_depth: int) -> np.ndarray:
        """How many innermost elements sit under each item at ``have_depth``."""
        off = levels[-1]
        for level in reversed(levels[have_depth:-1]):
            off = off[level]
        return np.diff(off)

    def _elementwise(self, node: ExprNode):
        left, right = node.children
        lv, rv = self.value(left), self.value(right)
        if isinstance(lv, Scalar) and isinstance(rv, Scalar):
            kind = jagged.binary_result_kind(node.op, lv.kind, rv.kind)
            return Scalar(kind, _scalar_binary(node.op, lv.value, rv.value))
        levels, (lf, rf) = self._conform(node, [left, right])
        la = _wrap(levels, lf, _kind_of(lv))
        ra = _wrap(levels, rf, _kind_of(rv))
        return jagged.elementwise_binary(node.op, la, ra)

    def _call(self, node: ExprNode):
        fn = self.functions.get(node.name)
        if fn is None:
            raise ExecutionError(f"no local implementation for function {node.name!r}",
                                 nodes=(node.node_id,))
        shape = self._shape(node)
        values = [self.value(c) for c in node.children]
        if all(isinstance(v, Scalar) for v in values):
            out = fn(*[np.asarray(v.value) for v in values])
            return Scalar(shape.kind, shape.kind.dtype.type(out).item())
        levels, flats = self._conform(node, list(node.children))
        args = [_wrap(levels, f, _kind_of(v)) for f, v in zip(flats, values)]
        return jagged.elementwise_call(fn, args, shape.kind)

    # -- structural nodes ----------------------------------------------------

    def _filter(self, node: ExprNode):
        seq_node, body_node = node.children
        seqv = self.value(seq_node)
        bodyv = self.value(body_node)
        seq_shape = self._shape(seq_node)
        body_shape = self._shape(body_node)
        out_shape = self._shape(node)

        if len(out_shape.axes) == len(seq_shape.axes):
            mask = self._as_mask(bodyv, body_shape, seqv)
            if isinstance(seqv, RecordArray):
                return seqv.masked(mask)
            return jagged.mask_innermost(seqv, mask)

        # crossed predicate: one list of candidates per element of the outer axis
        levels = bodyv.offset_levels
        _, idx_inner = cross_indices(levels[0], seqv.offset_levels[0])
        if isinstance(seqv, RecordArray):
            lifted = seqv.gathered(levels, idx_inner)
            return lifted.masked(bodyv)
        lifted = JaggedArray(levels, seqv.values[idx_inner], seqv.kind, validate=__debug__)
        return jagged.mask_innermost(lifted, bodyv)

    def _as_mask(self, bodyv, body_shape: DataShape, seqv) -> JaggedArray:
        levels = seqv.offset_levels
        total = int(levels[-1][-1])
        if isinstance(bodyv, Scalar):
            return JaggedArray(levels, np.full(total, bool(bodyv.value)), validate=__debug__)
        if body_shape.axes == ():
            per_event = self._expansion_counts(levels, 0)
            return JaggedArray(levels, np.repeat(bodyv.values, per_event), validate=__debug__)
        return JaggedArray(levels, bodyv.values, ElementKind.BOOL, validate=__debug__)

    def _map(self, node: ExprNode):
        seq_node, body_node = node.children
        seqv = self.value(seq_node)
        body_shape = self._shape(body_node)
        seq_axis = self._shape(seq_node).axes[0]
        if body_shape.axes is None or body_shape.axes == ():
            bodyv = self.value(body_node)
            levels = seqv.offset_levels
            total = int(levels[-1][-1])
            if isinstance(bodyv, Scalar):
                flat = np.full(total, bodyv.value, dtype=bodyv.kind.dtype)
                return JaggedArray(levels, flat, bodyv.kind, validate=__debug__)
            reps = self._expansion_counts(levels, 0)
            return JaggedArray(levels, np.repeat(bodyv.values, reps),
                               bodyv.kind, validate=__debug__)
        bodyv = self.value(body_node)
        if seq_axis in body_shape.axes:
            return bodyv  # already grouped along the mapped sequence
        levels = cross_nest(seqv.offset_levels[0], bodyv.offset_levels[0])
        _, idx_inner = cross_indices(seqv.offset_levels[0], bodyv.offset_levels[0])
        return JaggedArray(levels, bodyv.values[idx_inner], bodyv.kind, validate=__debug__)


def _kind_of(value) -> ElementKind:
    return value.kind


def _wrap(levels, flat, kind: ElementKind):
    arr = np.asarray(flat)
    if arr.dtype != kind.dtype:
        arr = arr.astype(kind.dtype)
    return JaggedArray(levels, arr, kind, validate=__debug__)


def _scalar_binary(op, a, b):
    if op == "/":
        try:
            return a / b
        except ZeroDivisionError:
            return math.inf if a > 0 else (-math.inf if a < 0 else math.nan)
    table = {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
             "<": lambda: a < b, ">": lambda: a > b, "<=": lambda: a <= b,
             ">=": lambda: a >= b, "==": lambda: a == b, "!=": lambda: a != b,
             "&": lambda: a and b, "|": lambda: a or b}
    return table[op]()


def _scalar_unary(op, a):
    table = {"neg": lambda: -float(a), "abs": lambda: abs(float(a)),
             "sqrt": lambda: math.sqrt(a), "sin": lambda: math.sin(a),
             "cos": lambda: math.cos(a)}
    return table[op]()
