"""High-level entry point wiring sessions, planning and execution together."""
from __future__ import annotations

import os
from pathlib import Path

from .dataio import DatasetRegistry
from .errors import PlanError
from .expr import ExprHandle, Session, canonicalize
from .local_exec import LOCAL_FUNCTIONS, LocalExecutor
from .planner import (LocalBackend, Plan, RemoteBackend, dataset_of, execute,
                      make_plan, plan_dump)
from .remote.parser import parse_query
from .remote.service import RemoteDataService, RemoteExecutor
from .schema import infer

DEFAULT_CACHE_DIR = ".jq-cache"
CACHE_ENV_VAR = "JQ_CACHE_DIR"

MODES = ("split", "all-local")


def resolve_cache_dir(cache_dir=None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else Path(DEFAULT_CACHE_DIR)


class AnalysisEngine:
    """Plans and runs expressions against registered datasets.

    ``mode`` picks the backend stack: ``split`` prefers the remote query
    service and finishes locally, ``all-local`` reads the event file into
    memory and interprets everything with the local plug-in.
    """

    def __init__(self, registry: DatasetRegistry, *, cache_dir=None,
                 mode: str = "split", remote_cross_reference: bool = False,
                 strict: bool = False, local_functions=None):
        if mode not in MODES:
            raise PlanError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.registry = registry
        self.mode = mode
        self.remote_cross_reference = remote_cross_reference
        self.strict = strict
        self.local_functions = dict(LOCAL_FUNCTIONS if local_functions is None
                                    else local_functions)
        self.service = RemoteDataService(resolve_cache_dir(cache_dir), registry)

    def new_session(self) -> Session:
        return Session()

    def backends(self, mode: str | None = None) -> list:
        mode = mode or self.mode
        if mode == "all-local":
            return [LocalBackend(can_read_source=True,
                                 functions=set(self.local_functions))]
        return [RemoteBackend(self.remote_cross_reference,
                              self.service.supported_functions()),
                LocalBackend(can_read_source=False,
                             functions=set(self.local_functions))]

    def plan(self, root, mode: str | None = None):
        functions = root.session.functions if isinstance(root, ExprHandle) else None
        dag = canonicalize(root)
        dataset_id = dataset_of(dag)
        schema = self.registry.schema(dataset_id)
        shapes = infer(dag, schema, functions=functions, strict=self.strict)
        plan = make_plan(dag, shapes, self.backends(mode))
        return dag, shapes, plan

    def explain(self, root, mode: str | None = None) -> str:
        dag, _, plan = self.plan(root, mode)
        return plan_dump(plan, dag)

    def materialize(self, root, mode: str | None = None, parallel: bool = False):
        """Trigger execution of a recorded expression; returns its value."""
        dag, shapes, plan = self.plan(root, mode)
        executors = self._executors(plan, mode)
        results = execute(plan, dag, shapes, executors, parallel=parallel)
        return results[plan.root_id]

    def _executors(self, plan: Plan, mode: str | None):
        mode = mode or self.mode
        store = None
        if mode == "all-local":
            store = self.registry.store(plan.dataset_id)
        return {
            "local": LocalExecutor(store=store, functions=self.local_functions),
            "remote": RemoteExecutor(self.service),
        }

    def parse(self, query_text: str, dataset_id: str | None = None,
              session: Session | None = None) -> ExprHandle:
        """Parse query-grammar text; optionally repoint it at ``dataset_id``."""
        session = session or Session()
        root = parse_query(query_text, session)
        if dataset_id is not None:
            old = _source_node(root.node)
            if old.name != dataset_id:
                new = session.space.node("source", name=dataset_id)
                root = ExprHandle(session, session.space.substitute(root.node, {old: new}))
        return root

    def run_query_text(self, query_text: str, dataset_id: str | None = None,
                       mode: str | None = None):
        return self.materialize(self.parse(query_text, dataset_id), mode=mode)


def _source_node(node):
    seen = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if n.node_id in seen:
            continue
        seen.add(n.node_id)
        if n.kind == "source":
            return n
        stack.extend(n.children)
        if n.bind_src is not None:
            stack.append(n.bind_src)
    raise PlanError("query references no dataset")
