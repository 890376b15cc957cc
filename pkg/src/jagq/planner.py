"""Backend assignment, materialization boundaries, and plan execution.

Assignment walks the DAG bottom-up (operands before consumers).  Each node
prefers the backend its operands landed on when that backend accepts it;
otherwise the first accepting backend in priority order takes it.  The
remote backend only takes nodes whose whole support is already remote, so
remote subgraphs always reach down to the data source and results flow one
way, remote to local, exactly one materialized jagged array per boundary
node.

Constant nodes are free values: they are placed with their first consumer,
never form boundaries, and executors may fold them wherever they appear.

With ``remote_cross_reference`` off the remote backend refuses filters,
maps and aggregates, reproducing the behavior of a delivery service whose
translator cannot carry a filtered collection's leaves across stages; the
planner then splits the work exactly at the cut/projection boundary.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import ExecutionError, JagqError, NoBackendError, PlanError
from .expr import CanonicalDag, ExprNode
from .remote.translate import remotely_expressible
from .schema import InferenceResult


class RemoteBackend:
    def __init__(self, remote_cross_reference: bool = False,
                 functions: set[str] | None = None):
        self.backend_id = "remote"
        self.remote_cross_reference = remote_cross_reference
        self.functions = functions

    def accepts(self, node: ExprNode, assignment: dict) -> tuple[bool, str]:
        for op in node.operands():
            if op.kind != "const" and assignment.get(op.node_id) != self.backend_id:
                return False, "consumes a value produced on another backend"
        kind = node.kind
        if kind in ("source", "const"):
            return True, ""
        if kind == "call" and self.functions is not None \
                and node.name not in self.functions:
            return False, f"function {node.name!r} is not implemented remotely"
        if kind in ("filter", "map", "agg") and not self.remote_cross_reference:
            return False, ("filter/aggregate pushdown is disabled "
                           "(remote_cross_reference=off)")
        if not remotely_expressible(node):
            return False, "not expressible as a single query chain"
        return True, ""


class LocalBackend:
    def __init__(self, can_read_source: bool = False,
                 functions: set[str] | None = None):
        self.backend_id = "local"
        self.can_read_source = can_read_source
        self.functions = functions

    def accepts(self, node: ExprNode, assignment: dict) -> tuple[bool, str]:
        if not self.can_read_source:
            if node.kind == "source" or any(op.kind == "source" for op in node.operands()):
                return False, "cannot read datasets directly"
        if node.kind == "call" and self.functions is not None \
                and node.name not in self.functions:
            return False, f"function {node.name!r} is not implemented locally"
        return True, ""


@dataclass(frozen=True)
class PlanStep:
    index: int
    backend_id: str
    node_ids: tuple[int, ...]
    input_ids: tuple[int, ...]
    output_ids: tuple[int, ...]


@dataclass
class Plan:
    dataset_id: str
    steps: list[PlanStep]
    boundaries: list[tuple[int, int]]
    root_id: int
    assignment: dict[int, str] = field(default_factory=dict)


def assign(dag: CanonicalDag, shapes: InferenceResult, backends: list) -> dict[int, str]:
    """Greedy bottom-up backend assignment with operand stickiness."""
    assignment: dict[int, str] = {}
    for node in dag.nodes:
        if node.kind == "const":
            continue
        operand_backends = []
        for op in node.operands():
            if op.kind != "const":
                bk = assignment[op.node_id]
                if bk not in operand_backends:
                    operand_backends.append(bk)
        ordered = ([b for b in backends if b.backend_id in operand_backends]
                   + [b for b in backends if b.backend_id not in operand_backends])
        reasons = []
        for backend in ordered:
            ok, why = backend.accepts(node, assignment)
            if ok:
                assignment[node.node_id] = backend.backend_id
                break
            reasons.append((backend.backend_id, why))
        else:
            raise NoBackendError(f"n{node.node_id} {node.label()}", reasons)
    # constants follow their first consumer; a constant root runs locally
    fallback = backends[-1].backend_id
    for node in dag.nodes:
        if node.kind != "const":
            continue
        consumers = dag.consumers[node.node_id]
        assignment[node.node_id] = assignment[min(consumers)] if consumers else fallback
    return assignment


def cut_boundaries(dag: CanonicalDag, assignment: dict[int, str],
                   dataset_id: str) -> Plan:
    """Group same-backend nodes into steps and record crossing edges."""
    backend_order: list[str] = []
    edges: set[tuple[str, str]] = set()
    for node in dag.nodes:
        bk = assignment[node.node_id]
        if bk not in backend_order:
            backend_order.append(bk)
        if node.kind == "const":
            continue
        for op in node.operands():
            if op.kind == "const":
                continue
            src_bk = assignment[op.node_id]
            if src_bk != bk:
                edges.add((src_bk, bk))
    ordered = _toposort_backends(backend_order, edges)

    boundaries: list[tuple[int, int]] = []
    for node in dag.nodes:
        if node.kind == "const":
            continue
        for op in node.operands():
            if op.kind != "const" and assignment[op.node_id] != assignment[node.node_id]:
                boundaries.append((op.node_id, node.node_id))
    boundaries.sort()

    crossing_sources = {u for u, _ in boundaries}
    steps = []
    for index, backend_id in enumerate(ordered, start=1):
        node_ids = tuple(sorted(n.node_id for n in dag.nodes
                                if assignment[n.node_id] == backend_id))
        member = set(node_ids)
        inputs = tuple(sorted({u for u, v in boundaries if v in member}))
        outputs = tuple(sorted({nid for nid in node_ids
                                if nid in crossing_sources or nid == dag.root.node_id}))
        steps.append(PlanStep(index, backend_id, node_ids, inputs, outputs))
    return Plan(dataset_id, steps, boundaries, dag.root.node_id, assignment)


def _toposort_backends(backends: list[str], edges: set[tuple[str, str]]) -> list[str]:
    remaining = list(backends)
    out: list[str] = []
    while remaining:
        ready = [b for b in remaining
                 if not any(u != b and v == b and u in remaining for u, v in edges)]
        if not ready:
            raise PlanError("internal: backend assignment formed a cycle")
        out.append(ready[0])
        remaining.remove(ready[0])
    return out


def make_plan(dag: CanonicalDag, shapes: InferenceResult, backends: list) -> Plan:
    dataset_id = dataset_of(dag)
    assignment = assign(dag, shapes, backends)
    return cut_boundaries(dag, assignment, dataset_id)


def dataset_of(dag: CanonicalDag) -> str:
    sources = {n.name for n in dag.nodes if n.kind == "source"}
    if len(sources) != 1:
        raise PlanError(f"a plan needs exactly one dataset, found {len(sources)}")
    return next(iter(sources))


def execute(plan: Plan, dag: CanonicalDag, shapes: InferenceResult,
            executors: dict[str, object], parallel: bool = False) -> dict[int, object]:
    """Run the plan's steps; independent steps may run concurrently without
    changing results (kernels are pure, steps exchange immutable arrays)."""
    for step in plan.steps:
        if step.backend_id not in executors:
            raise PlanError(f"no executor registered for backend {step.backend_id!r}")
    bindings: dict[int, object] = {}

    def run(step: PlanStep) -> dict:
        inputs = {nid: bindings[nid] for nid in step.input_ids}
        try:
            return executors[step.backend_id].run_step(
                dag, shapes, step, inputs, plan.dataset_id)
        except JagqError as err:
            raise ExecutionError(str(err), step=step.index,
                                 nodes=step.node_ids) from err

    if not parallel:
        for step in plan.steps:
            bindings.update(run(step))
    else:
        pending = list(plan.steps)
        with ThreadPoolExecutor(max_workers=max(1, len(plan.steps))) as pool:
            while pending:
                ready = [s for s in pending
                         if all(nid in bindings for nid in s.input_ids)]
                if not ready:
                    raise PlanError("internal: plan steps deadlocked")
                futures = {pool.submit(run, s): s for s in ready}
                for future, step in futures.items():
                    bindings.update(future.result())
                    pending.remove(step)
    if plan.root_id not in bindings:
        raise PlanError("internal: plan produced no value for the root")
    return {plan.root_id: bindings[plan.root_id]}


def plan_dump(plan: Plan, dag: CanonicalDag,
              boundary_sizes: dict[int, int] | None = None) -> str:
    """Human-readable rendering of steps, assignments and boundaries."""
    lines = [f"plan dataset={plan.dataset_id} steps={len(plan.steps)}"]
    for step in plan.steps:
        names = " ".join(f"n{nid}" for nid in step.node_ids)
        lines.append(f"step {step.index} backend={step.backend_id} nodes=[{names}]")
        if step.input_ids:
            lines.append("  inputs: " + " ".join(f"n{nid}" for nid in step.input_ids))
        if step.output_ids:
            lines.append("  outputs: " + " ".join(f"n{nid}" for nid in step.output_ids))
    lines.append(f"boundaries ({len(plan.boundaries)}):")
    for u, v in plan.boundaries:
        size = ""
        if boundary_sizes and u in boundary_sizes:
            size = f" ({boundary_sizes[u]} values)"
        lines.append(f"  n{u} {dag.by_id[u].label()} -> n{v} {dag.by_id[v].label()}{size}")
    lines.append("assignments:")
    for node in dag.nodes:
        lines.append(f"  n{node.node_id} {node.label()} -> {plan.assignment[node.node_id]}")
    return "\n".join(lines)
