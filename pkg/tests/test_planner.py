import pytest

from jagq import (DEFAULT_SCHEMA, ElementKind, LocalBackend, RemoteBackend,
                  Session, canonicalize, infer, make_plan, plan_dump)
from jagq.errors import NoBackendError
from jagq.planner import assign, dataset_of

from helpers import electron_pt_pipeline


def plan_for(handle, *, cross=False, backends=None):
    session = handle.session
    dag = canonicalize(handle)
    shapes = infer(dag, DEFAULT_SCHEMA, functions=session.functions)
    if backends is None:
        backends = [RemoteBackend(cross), LocalBackend()]
    return dag, shapes, make_plan(dag, shapes, backends)


def by_label(dag, label):
    return [n for n in dag.nodes if n.label() == label]


class TestAssignment:
    def test_restricted_split_matches_prototype(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root, cross=False)
        a = plan.assignment
        conjunction, = by_label(dag, "&")
        assert a[conjunction.node_id] == "remote"
        for leaf in by_label(dag, ".pt") + by_label(dag, ".eta"):
            assert a[leaf.node_id] == "remote"
        filter_node, = by_label(dag, "[filter]")
        divide, = by_label(dag, "/")
        assert a[filter_node.node_id] == "local"
        assert a[divide.node_id] == "local"
        assert [s.backend_id for s in plan.steps] == ["remote", "local"]

    def test_cross_reference_goes_all_remote(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root, cross=True)
        assert [s.backend_id for s in plan.steps] == ["remote"]
        assert all(b == "remote" for b in plan.assignment.values())

    def test_single_source_node_goes_remote(self):
        df = Session().source("localds://x")
        dag, _, plan = plan_for(df)
        assert plan.assignment[dag.root.node_id] == "remote"
        assert len(plan.steps) == 1

    def test_constants_follow_consumers(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root)
        thousand, = [n for n in dag.nodes if n.kind == "const" and n.value == 1000.0]
        fifty_k, = [n for n in dag.nodes if n.kind == "const" and n.value == 50000.0]
        assert plan.assignment[thousand.node_id] == "local"
        assert plan.assignment[fifty_k.node_id] == "remote"

    def test_no_backend_error_names_backends(self):
        session = Session()
        df = session.source("localds://x")
        ghost = session.declare_function("Ghost", [ElementKind.FLOAT],
                                         ElementKind.FLOAT)
        root = ghost(df.Electrons.pt)
        dag = canonicalize(root)
        shapes = infer(dag, DEFAULT_SCHEMA, functions=session.functions)
        backends = [RemoteBackend(functions={"DeltaR"}),
                    LocalBackend(functions={"DeltaR"})]
        with pytest.raises(NoBackendError) as err:
            assign(dag, shapes, backends)
        message = str(err.value)
        assert "remote" in message and "local" in message and "Ghost" in message


class TestBoundaries:
    def test_listing_style_plan_ships_two_arrays(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root)
        assert len(plan.boundaries) == 2
        sources = {dag.by_id[u].label() for u, _ in plan.boundaries}
        assert sources == {".pt", "&"}

    def test_single_backend_has_no_boundaries(self):
        _, root = electron_pt_pipeline("localds://x")
        _, _, plan = plan_for(root, cross=True)
        assert plan.boundaries == []

    def test_boundary_count_equals_color_changing_edges(self):
        session, roots = _matching_roots()
        dag, _, plan = plan_for(roots["resolution"])
        recount = 0
        for node in dag.nodes:
            if node.kind == "const":
                continue
            for op in node.operands():
                if op.kind == "const":
                    continue
                if plan.assignment[op.node_id] != plan.assignment[node.node_id]:
                    recount += 1
        assert recount == len(plan.boundaries)

    def test_every_node_in_exactly_one_step(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root)
        seen: list[int] = []
        for step in plan.steps:
            seen.extend(step.node_ids)
        assert sorted(seen) == [n.node_id for n in dag.nodes]

    def test_dataset_of(self):
        _, root = electron_pt_pipeline("localds://abc")
        assert dataset_of(canonicalize(root)) == "localds://abc"


def _matching_roots():
    from helpers import matching_pipeline
    return matching_pipeline("localds://x")


class TestDump:
    def test_dump_mentions_every_node_and_backend(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root)
        text = plan_dump(plan, dag)
        assert "step 1 backend=remote" in text
        assert "step 2 backend=local" in text
        for node in dag.nodes:
            assert f"n{node.node_id} {node.label()}" in text

    def test_dump_boundary_sizes(self):
        _, root = electron_pt_pipeline("localds://x")
        dag, _, plan = plan_for(root)
        sized = plan_dump(plan, dag, boundary_sizes={u: 7 for u, _ in plan.boundaries})
        assert "(7 values)" in sized


class TestExecutionEquivalence:
    def test_split_equals_all_local_and_parallel(self, engine):
        from conftest import DATASET_ID
        _, root = electron_pt_pipeline(DATASET_ID)
        split = engine.materialize(root, mode="split")
        local = engine.materialize(root, mode="all-local")
        parallel = engine.materialize(root, mode="split", parallel=True)
        assert split.to_lists() == local.to_lists() == parallel.to_lists()

    def test_replay_is_deterministic(self, engine):
        from conftest import DATASET_ID
        _, root = electron_pt_pipeline(DATASET_ID)
        first = engine.materialize(root)
        second = engine.materialize(root)
        assert first.to_lists() == second.to_lists()
