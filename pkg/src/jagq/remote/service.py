"""Simulated remote query service and the planner plug-in that talks to it.

The service owns datasets (event file + schema per dataset id), evaluates
queries expressed in the query grammar, and caches result frames on disk
under a content-addressed key:

    key   = sha256(dataset id + "\\n" + canonical query text)
    path  = <cache>/<key[:2]>/<key>.jqr     (result frame bytes)
            <cache>/<key[:2]>/<key>.meta    (dataset id + query text, json)

Cache writes go through a temp file and ``os.replace``, so concurrent
identical misses may both evaluate but converge to one stored entry.  A
cache hit returns the stored bytes without evaluating; the evaluation
counter makes that observable.

Requests and responses cross a byte boundary even in-process (see
``wire``), so swapping in a network transport would not change callers.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from .. import local_exec
from ..errors import (EmptySequenceError, ExecutionError, JagqError,
                      QuerySyntaxError, UnknownDatasetError,
                      UnknownFunctionError)
from ..expr import CanonicalDag, ExprNode, Session, canonicalize
from ..jagged import JaggedArray
from ..records import RecordArray
from ..schema import InferenceResult, infer
from . import wire
from .parser import parse_query
from .translate import translate


def cache_key(dataset_id: str, query_text: str) -> str:
    payload = dataset_id.encode("utf-8") + b"\n" + query_text.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


@dataclass
class RemoteResult:
    """Decoded response: named jagged columns sharing one event count."""

    n_events: int
    columns: list[tuple[str, JaggedArray]]


class RemoteDataService:
    """In-process stand-in for a networked query service."""

    def __init__(self, cache_dir, registry):
        self.cache_dir = Path(cache_dir)
        self.registry = registry
        self._lock = threading.Lock()
        self._evaluations = 0
        self.functions = dict(local_exec.LOCAL_FUNCTIONS)

    @property
    def evaluations(self) -> int:
        """How many queries were actually evaluated (cache misses)."""
        return self._evaluations

    def supported_functions(self) -> set[str]:
        return set(self.functions)

    # -- wire boundary ------------------------------------------------------

    def submit_bytes(self, request: bytes) -> bytes:
        try:
            dataset_id, query_text = wire.decode_request(request)
        except JagqError as err:
            return wire.encode_error("request", str(err))
        return self._handle(dataset_id, query_text)

    def submit(self, dataset_id: str, query_text: str) -> tuple[RemoteResult, bytes]:
        """Convenience client: returns the decoded result and the raw frame."""
        response = self.submit_bytes(wire.encode_request(dataset_id, query_text))
        error = wire.decode_error(response)
        if error is not None:
            raise _error_from_frame(*error)
        n_events, columns = wire.decode_result(response)
        return RemoteResult(n_events, columns), response

    # -- service internals ----------------------------------------------------

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.jqr"

    def _handle(self, dataset_id: str, query_text: str) -> bytes:
        key = cache_key(dataset_id, query_text)
        path = self._cache_path(key)
        if path.exists():
            return path.read_bytes()
        try:
            frame = self._evaluate(dataset_id, query_text)
        except EmptySequenceError as err:
            return wire.encode_error("empty-sequence", f"{err.op}|{err.event_index}")
        except QuerySyntaxError as err:
            return wire.encode_error("syntax", str(err))
        except UnknownDatasetError as err:
            return wire.encode_error("dataset", str(err))
        except UnknownFunctionError as err:
            return wire.encode_error("function", str(err))
        except JagqError as err:
            return wire.encode_error("evaluation", str(err))
        self._store(key, path, dataset_id, query_text, frame)
        return frame

    def _evaluate(self, dataset_id: str, query_text: str) -> bytes:
        store = self.registry.store(dataset_id)
        schema = self.registry.schema(dataset_id)
        session = Session()
        root = parse_query(query_text, session)
        dag = canonicalize(root)
        shapes = infer(dag, schema, functions=session.functions)
        with self._lock:
            self._evaluations += 1
        value = local_exec.evaluate_root(dag, shapes, store, self.functions)
        if isinstance(value, RecordArray):
            columns = [(name, value.column(name)) for name in value.field_names()]
        elif isinstance(value, JaggedArray):
            columns = [("value", value)]
        else:
            raise ExecutionError("query does not produce a column")
        return wire.encode_result(store.n_events, columns)

    def _store(self, key: str, path: Path, dataset_id: str, query_text: str,
               frame: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = json.dumps({"dataset": dataset_id, "query": query_text},
                          sort_keys=True) + "\n"
        for target, payload in ((path, frame),
                                (path.with_suffix(".meta"), meta.encode("utf-8"))):
            tmp = target.with_name(f".{target.name}.{uuid.uuid4().hex}.tmp")
            tmp.write_bytes(payload)
            os.replace(tmp, target)


def _error_from_frame(category: str, message: str) -> JagqError:
    if category == "empty-sequence":
        op, _, index = message.partition("|")
        return EmptySequenceError(op, int(index))
    if category == "syntax":
        return QuerySyntaxError(message)
    if category == "dataset":
        return UnknownDatasetError(message)
    if category == "function":
        return UnknownFunctionError(message)
    return ExecutionError(message)


class RemoteExecutor:
    """Planner plug-in: translate each requested output, submit, decode."""

    backend_id = "remote"

    def __init__(self, service: RemoteDataService):
        self.service = service

    def run_step(self, dag: CanonicalDag, shapes: InferenceResult, step, inputs: dict,
                 dataset_id: str | None = None) -> dict:
        out = {}
        for nid in step.output_ids:
            node = dag.by_id[nid]
            query = translate(node)
            result, _ = self.service.submit(dataset_id or "", query)
            out[nid] = _as_value(result, node, shapes)
        return out


def _as_value(result: RemoteResult, node: ExprNode, shapes: InferenceResult):
    shape = shapes[node.node_id]
    if shape.record:
        first = result.columns[0][1]
        columns, kinds = {}, {}
        for name, arr in result.columns:
            columns[name] = arr.values
            kinds[name] = arr.kind
        return RecordArray(first.offset_levels, columns, kinds, shape.collection)
    _, arr = result.columns[0]
    if shape.kind is not None and arr.kind is not shape.kind:
        # wire kinds may drift (integral float literals travel as ints)
        arr = JaggedArray(arr.offset_levels, arr.values.astype(shape.kind.dtype),
                          shape.kind, validate=__debug__)
    return arr
