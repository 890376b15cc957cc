"""Record batches: named leaf columns sharing one jagged structure.

A ``RecordArray`` is how executors carry a particle collection around: the
offsets describe the per-event lists once, and every leaf (pt, eta, ...)
is a flat column over the same structure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jagged
from .errors import ExecutionError, ShapeMismatchError
from .jagged import ElementKind, JaggedArray


@dataclass(frozen=True)
class Scalar:
    """A true scalar constant (the same value for every element)."""

    kind: ElementKind
    value: object


class RecordArray:
    """Jagged lists of records, stored column-wise over shared offsets."""

    __slots__ = ("offset_levels", "columns", "kinds", "collection")

    def __init__(self, offset_levels, columns: dict[str, np.ndarray],
                 kinds: dict[str, ElementKind], collection: str | None = None):
        self.offset_levels = tuple(np.asarray(l, dtype=np.int64) for l in offset_levels)
        self.columns = dict(columns)
        self.kinds = dict(kinds)
        self.collection = collection

    @property
    def depth(self) -> int:
        return len(self.offset_levels)

    @property
    def n_events(self) -> int:
        if self.depth == 0:
            first = next(iter(self.columns.values()), None)
            return 0 if first is None else len(first)
        return len(self.offset_levels[0]) - 1

    def column(self, name: str) -> JaggedArray:
        if name not in self.columns:
            raise ExecutionError(f"collection {self.collection!r} has no leaf {name!r}")
        return JaggedArray(self.offset_levels, self.columns[name],
                           self.kinds[name], validate=False)

    def field_names(self) -> list[str]:
        return list(self.columns)

    def _template(self) -> JaggedArray:
        name = next(iter(self.columns))
        return self.column(name)

    def masked(self, mask: JaggedArray) -> "RecordArray":
        """Apply an aligned boolean mask to the innermost lists."""
        new_levels = None
        columns, kinds = {}, {}
        for name in self.columns:
            out = jagged.mask_innermost(self.column(name), mask)
            new_levels = out.offset_levels
            columns[name] = out.values
            kinds[name] = out.kind
        if new_levels is None:
            raise ShapeMismatchError("record array has no columns")
        return RecordArray(new_levels, columns, kinds, self.collection)

    def reduced(self, op: str) -> "RecordArray | JaggedArray":
        """Innermost reduction; only ``count`` and ``first`` make sense here."""
        if op == "count":
            return jagged.reduce_innermost("count", self._template())
        if op != "first":
            raise ExecutionError(f"{op!r} is not defined for record sequences")
        new_levels = None
        columns, kinds = {}, {}
        for name in self.columns:
            out = jagged.reduce_innermost("first", self.column(name))
            new_levels = out.offset_levels
            columns[name] = out.values
            kinds[name] = out.kind
        return RecordArray(new_levels, columns, kinds, self.collection)

    def gathered(self, offset_levels, indices: np.ndarray) -> "RecordArray":
        """Rebuild the records over new offsets via a flat gather."""
        columns = {name: col[indices] for name, col in self.columns.items()}
        return RecordArray(offset_levels, columns, self.kinds, self.collection)

    def to_records(self):
        """Nested lists of per-record dicts, mirroring the event-file layout."""
        names = list(self.columns)
        flat = [dict(zip(names, row)) for row in zip(*(self.columns[n].tolist() for n in names))]
        out = flat
        for level in reversed(self.offset_levels):
            out = [out[level[i]:level[i + 1]] for i in range(len(level) - 1)]
        return out

    @classmethod
    def from_records(cls, records: Sequence[Sequence[dict]], kinds: dict[str, ElementKind],
                     collection: str | None = None) -> "RecordArray":
        offsets = jagged.offsets_from_counts([len(r) for r in records])
        flat = [rec for event in records for rec in event]
        columns = {name: np.asarray([rec[name] for rec in flat], dtype=kind.dtype)
                   for name, kind in kinds.items()}
        return cls((offsets,), columns, kinds, collection)

    def __repr__(self) -> str:
        return (f"RecordArray({self.collection or 'derived'}, depth={self.depth}, "
                f"fields={list(self.columns)})")
