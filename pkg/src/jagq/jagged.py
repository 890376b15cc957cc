"""Immutable jagged arrays and the columnar kernels every executor shares.

A jagged array stores per-event variable-length data as a stack of offset
levels over one flat value buffer:

    depth 0   one value per event, no offsets
    depth 1   offsets[0] has n_events+1 entries and slices ``values``
    depth 2   offsets[0] slices the list of inner lists described by
              offsets[1], which slices ``values``

Every offset level is nondecreasing, starts at 0, and its last entry equals
the number of items at the next level down (``len(values)`` for the
innermost level).  Values are float64, int64 or bool, one kind per array.

Arrays are immutable after construction and kernels are pure functions, so
values can be shared freely between concurrent tasks.  A module-level
counter tracks kernel invocations; tests use it to prove that expression
building is lazy.
"""
from __future__ import annotations

import enum
import threading
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySequenceError, KindError, ShapeMismatchError


class ElementKind(enum.Enum):
    FLOAT = "float"
    INT = "int"
    BOOL = "bool"

    @property
    def dtype(self):
        return _DTYPES[self]

    @classmethod
    def from_dtype(cls, dtype) -> "ElementKind":
        dtype = np.dtype(dtype)
        if dtype.kind == "f":
            return cls.FLOAT
        if dtype.kind in "iu":
            return cls.INT
        if dtype.kind == "b":
            return cls.BOOL
        raise KindError(f"unsupported dtype {dtype}")

    @classmethod
    def of_scalar(cls, value) -> "ElementKind":
        if isinstance(value, (bool, np.bool_)):
            return cls.BOOL
        if isinstance(value, (int, np.integer)):
            return cls.INT
        if isinstance(value, (float, np.floating)):
            return cls.FLOAT
        raise KindError(f"unsupported scalar {value!r}")


_DTYPES = {
    ElementKind.FLOAT: np.dtype(np.float64),
    ElementKind.INT: np.dtype(np.int64),
    ElementKind.BOOL: np.dtype(np.bool_),
}

_counter_lock = threading.Lock()
_kernel_calls = 0


def _count_kernel() -> None:
    global _kernel_calls
    with _counter_lock:
        _kernel_calls += 1


def kernel_invocations() -> int:
    """Number of kernel calls since the last reset."""
    return _kernel_calls


def reset_kernel_counter() -> None:
    global _kernel_calls
    with _counter_lock:
        _kernel_calls = 0


def offsets_from_counts(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=out[1:])
    return out


def _as_offsets(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1 or len(arr) == 0:
        raise ShapeMismatchError("offset level must be a nonempty 1-d sequence")
    return arr


class JaggedArray:
    """Offsets-plus-values representation of nested per-event lists."""

    __slots__ = ("offset_levels", "values", "kind")

    def __init__(self, offset_levels: Sequence, values, kind: ElementKind | None = None,
                 *, validate: bool = True):
        levels = tuple(_as_offsets(level) for level in offset_levels)
        if kind is None:
            kind = ElementKind.from_dtype(np.asarray(values).dtype)
        vals = np.asarray(values, dtype=kind.dtype)
        if vals.ndim != 1:
            raise ShapeMismatchError("values must be flat")
        if validate:
            for i, level in enumerate(levels):
                if level[0] != 0:
                    raise ShapeMismatchError(f"offset level {i} does not start at 0")
                if np.any(np.diff(level) < 0):
                    raise ShapeMismatchError(f"offset level {i} is not nondecreasing")
                below = len(levels[i + 1]) - 1 if i + 1 < len(levels) else len(vals)
                if level[-1] != below:
                    raise ShapeMismatchError(
                        f"offset level {i} ends at {level[-1]} but the next level has {below} items")
        self.offset_levels = levels
        self.values = vals
        self.kind = kind

    @property
    def depth(self) -> int:
        return len(self.offset_levels)

    @property
    def n_events(self) -> int:
        if self.depth == 0:
            return len(self.values)
        return len(self.offset_levels[0]) - 1

    def innermost_counts(self) -> np.ndarray:
        if self.depth == 0:
            raise ShapeMismatchError("depth-0 array has no lists")
        return np.diff(self.offset_levels[-1])

    def same_shape(self, other: "JaggedArray") -> bool:
        if self.depth != other.depth or len(self.values) != len(other.values):
            return False
        return all(np.array_equal(a, b)
                   for a, b in zip(self.offset_levels, other.offset_levels))

    def with_values(self, values, kind: ElementKind) -> "JaggedArray":
        return JaggedArray(self.offset_levels, values, kind, validate=__debug__)

    @classmethod
    def from_lists(cls, data: Iterable, kind: ElementKind | None = None,
                   depth: int | None = None) -> "JaggedArray":
        data = list(data)
        if depth is None:
            depth = _nesting_depth(data)
        levels: list[np.ndarray] = []
        layer = data
        for _ in range(depth):
            counts = [len(x) for x in layer]
            levels.append(offsets_from_counts(counts))
            layer = [item for x in layer for item in x]
        if kind is None:
            kind = ElementKind.of_scalar(layer[0]) if layer else ElementKind.FLOAT
        return cls(levels, np.asarray(layer, dtype=kind.dtype), kind)

    def to_lists(self):
        out = list(self.values.tolist())
        for level in reversed(self.offset_levels):
            out = [out[level[i]:level[i + 1]] for i in range(len(level) - 1)]
        return out

    def __repr__(self) -> str:
        return (f"JaggedArray(depth={self.depth}, n_events={self.n_events}, "
                f"kind={self.kind.name}, values={len(self.values)})")


def _nesting_depth(data) -> int:
    # depth counts nesting levels below the per-event level
    depth = 0
    layer = data
    while True:
        nested = next((x for x in layer if isinstance(x, list)), None)
        if nested is None:
            return depth
        depth += 1
        layer = nested


_COMPARISONS = {"<", ">", "<=", ">=", "==", "!="}
_ARITH = {"+", "-", "*", "/"}
_LOGIC = {"&", "|"}

_BINOP_FN = {
    "+": np.add, "-": np.subtract, "*": np.multiply, "/": np.true_divide,
    "<": np.less, ">": np.greater, "<=": np.less_equal, ">=": np.greater_equal,
    "==": np.equal, "!=": np.not_equal, "&": np.logical_and, "|": np.logical_or,
}

_UNARY_FN = {
    "neg": np.negative, "abs": np.abs, "sqrt": np.sqrt,
    "sin": np.sin, "cos": np.cos,
}


def binary_result_kind(op: str, a: ElementKind, b: ElementKind) -> ElementKind:
    """Kind rules shared by kernels and inference."""
    op = {"and": "&", "or": "|"}.get(op, op)
    if op in _LOGIC:
        if a is not ElementKind.BOOL or b is not ElementKind.BOOL:
            raise KindError(f"{op!r} requires boolean operands, got {a.name}/{b.name}")
        return ElementKind.BOOL
    if op in _COMPARISONS:
        if (a is ElementKind.BOOL) != (b is ElementKind.BOOL):
            raise KindError(f"cannot compare {a.name} with {b.name}")
        if a is ElementKind.BOOL and op not in ("==", "!="):
            raise KindError(f"{op!r} is not defined for booleans")
        return ElementKind.BOOL
    if op in _ARITH:
        if ElementKind.BOOL in (a, b):
            raise KindError(f"arithmetic {op!r} on boolean operands")
        if op == "/":
            return ElementKind.FLOAT
        if a is ElementKind.INT and b is ElementKind.INT:
            return ElementKind.INT
        return ElementKind.FLOAT
    raise KindError(f"unknown binary op {op!r}")


def elementwise_binary(op: str, a: JaggedArray, b) -> JaggedArray:
    """Apply a binary op over aligned arrays; scalars broadcast everywhere.

    Division by zero follows IEEE semantics (inf/nan, no error).
    """
    op = {"and": "&", "or": "|"}.get(op, op)
    _count_kernel()
    if isinstance(b, JaggedArray):
        if not a.same_shape(b):
            raise ShapeMismatchError(f"operands of {op!r} have different jagged shapes")
        b_kind, b_vals = b.kind, b.values
    else:
        b_kind = ElementKind.of_scalar(b)
        b_vals = b
    kind = binary_result_kind(op, a.kind, b_kind)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _BINOP_FN[op](a.values, b_vals)
    return a.with_values(np.asarray(out, dtype=kind.dtype), kind)


def elementwise_unary(op: str, a: JaggedArray) -> JaggedArray:
    if op not in _UNARY_FN:
        raise KindError(f"unknown unary op {op!r}")
    if a.kind is ElementKind.BOOL:
        raise KindError(f"unary {op!r} on boolean operands")
    _count_kernel()
    out = _UNARY_FN[op](a.values.astype(np.float64))
    return a.with_values(out, ElementKind.FLOAT)


def elementwise_call(fn, args: Sequence[JaggedArray], ret_kind: ElementKind) -> JaggedArray:
    """Apply a registered backend function over aligned arrays."""
    base = args[0]
    for other in args[1:]:
        if not base.same_shape(other):
            raise ShapeMismatchError("function arguments have different jagged shapes")
    _count_kernel()
    out = fn(*[a.values for a in args])
    return base.with_values(np.asarray(out, dtype=ret_kind.dtype), ret_kind)


def mask_innermost(a: JaggedArray, mask: JaggedArray) -> JaggedArray:
    """Keep innermost elements where ``mask`` is true.

    Outer levels are preserved: events (and outer lists) never disappear,
    their innermost lists just shrink.
    """
    if mask.kind is not ElementKind.BOOL:
        raise KindError("mask must be boolean")
    if a.depth == 0:
        raise ShapeMismatchError("cannot mask a depth-0 array")
    if not a.same_shape(mask):
        raise ShapeMismatchError("mask shape differs from operand shape")
    _count_kernel()
    keep = mask.values
    n_lists = len(a.offset_levels[-1]) - 1
    owner = np.repeat(np.arange(n_lists, dtype=np.int64), a.innermost_counts())
    new_counts = np.bincount(owner[keep], minlength=n_lists).astype(np.int64)
    levels = a.offset_levels[:-1] + (offsets_from_counts(new_counts),)
    return JaggedArray(levels, a.values[keep], a.kind, validate=__debug__)


_REDUCE_OPS = {"count", "first", "sum", "min", "max", "any", "all"}


def _event_of_list(a: JaggedArray, list_index: int) -> int:
    """Map an innermost list index back to its event index."""
    idx = list_index
    for level in reversed(a.offset_levels[:-1]):
        idx = int(np.searchsorted(level, idx, side="right")) - 1
    return idx


def reduce_innermost(op: str, a: JaggedArray) -> JaggedArray:
    """Reduce each innermost list to one value, dropping one nesting level."""
    if op not in _REDUCE_OPS:
        raise KindError(f"unknown reduction {op!r}")
    if a.depth < 1:
        raise ShapeMismatchError(f"{op!r} needs at least one nesting level")
    _count_kernel()
    counts = a.innermost_counts()
    offsets = a.offset_levels[-1]
    starts = offsets[:-1]
    levels = a.offset_levels[:-1]
    n_lists = len(counts)
    owner = np.repeat(np.arange(n_lists, dtype=np.int64), counts)

    if op == "count":
        return JaggedArray(levels, counts.astype(np.int64), ElementKind.INT, validate=__debug__)

    if op in ("first", "min", "max"):
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            raise EmptySequenceError(op, _event_of_list(a, int(empty[0])))
        if op == "first":
            return JaggedArray(levels, a.values[starts], a.kind, validate=__debug__)
        if a.kind is ElementKind.BOOL:
            raise KindError(f"{op!r} on boolean operands")
        fn = np.minimum if op == "min" else np.maximum
        out = fn.reduceat(a.values, starts)
        return JaggedArray(levels, out, a.kind, validate=__debug__)

    if op == "sum":
        if a.kind is ElementKind.BOOL:
            raise KindError("sum on boolean operands")
        out = np.bincount(owner, weights=a.values.astype(np.float64), minlength=n_lists)
        return JaggedArray(levels, out.astype(a.kind.dtype), a.kind, validate=__debug__)

    # any / all
    if a.kind is not ElementKind.BOOL:
        raise KindError(f"{op!r} requires boolean operands")
    trues = np.bincount(owner[a.values], minlength=n_lists)
    out = trues > 0 if op == "any" else trues == counts
    return JaggedArray(levels, out, ElementKind.BOOL, validate=__debug__)


def cross_nest(outer, inner) -> tuple[np.ndarray, np.ndarray]:
    """Offsets of the depth-2 array pairing every outer element with every
    inner element of the same event.

    Event ``e`` holds ``len(outer[e])`` lists, each of ``len(inner[e])``
    elements.  Accepts depth-1 arrays or raw offset vectors.
    """
    off_o = _first_offsets(outer)
    off_i = _first_offsets(inner)
    if len(off_o) != len(off_i):
        raise ShapeMismatchError("cross_nest operands cover different event counts")
    _count_kernel()
    c_o = np.diff(off_o)
    c_i = np.diff(off_i)
    level0 = offsets_from_counts(c_o)
    level1 = offsets_from_counts(np.repeat(c_i, c_o))
    return level0, level1


def cross_indices(off_outer: np.ndarray, off_inner: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat gather indices realizing the ``cross_nest`` pairing.

    Pairs are ordered outer-major within each event.
    """
    off_o = _as_offsets(off_outer)
    off_i = _as_offsets(off_inner)
    c_o = np.diff(off_o)
    c_i = np.diff(off_i)
    pairs = c_o * c_i
    total = int(pairs.sum())
    if total == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy()
    k = np.arange(total, dtype=np.int64) - np.repeat(offsets_from_counts(pairs)[:-1], pairs)
    c_i_pair = np.repeat(c_i, pairs)
    idx_inner = np.repeat(off_i[:-1], pairs) + k % c_i_pair
    idx_outer = np.repeat(off_o[:-1], pairs) + k // c_i_pair
    return idx_outer, idx_inner


def _first_offsets(x) -> np.ndarray:
    if hasattr(x, "offset_levels"):
        if len(x.offset_levels) != 1:
            raise ShapeMismatchError("cross_nest expects depth-1 operands")
        return x.offset_levels[0]
    return _as_offsets(x)
