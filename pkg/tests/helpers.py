"""Shared test utilities: nested comparison, error outcomes, pipeline
builders, and the random expression generator for equivalence sweeps."""
from __future__ import annotations

import math

import numpy as np

from jagq import (ElementKind, JaggedArray, RecordArray, Scalar, Session,
                  canonicalize, kernel_invocations, oracle_eval, parse_query,
                  reset_kernel_counter, translate)
from jagq.errors import EmptySequenceError, JagqError

REL_TOL = 1e-12


def close(a, b, rel=REL_TOL) -> bool:
    """Recursive equality: exact for bools/ints/records, relative for floats."""
    if isinstance(a, list) or isinstance(b, list):
        return (isinstance(a, list) and isinstance(b, list) and len(a) == len(b)
                and all(close(x, y, rel) for x, y in zip(a, b)))
    if isinstance(a, dict) or isinstance(b, dict):
        return (isinstance(a, dict) and isinstance(b, dict)
                and a.keys() == b.keys()
                and all(close(a[k], b[k], rel) for k in a))
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b or a == b and isinstance(a, bool) == isinstance(b, bool)
    if isinstance(a, float) or isinstance(b, float):
        if math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= rel * max(1.0, abs(a), abs(b))
    return a == b


def as_nested(value):
    """Engine result to plain nested python, mirroring the oracle's output."""
    if isinstance(value, JaggedArray):
        return value.to_lists()
    if isinstance(value, RecordArray):
        return value.to_records()
    if isinstance(value, Scalar):
        return value.value
    return value


def outcome(fn):
    """('value', v) or ('empty', op, event) or ('error', type name)."""
    try:
        return ("value", fn())
    except JagqError as err:
        cause = err
        while cause is not None:
            if isinstance(cause, EmptySequenceError):
                return ("empty", cause.op, cause.event_index)
            cause = cause.__cause__
        return ("error", type(err).__name__)


def same_outcome(a, b) -> bool:
    if a[0] != b[0]:
        return False
    if a[0] == "value":
        return close(a[1], b[1])
    return a[1:] == b[1:]


# ---------------------------------------------------------------------------
# reference pipelines


def electron_pt_pipeline(dataset_id: str):
    """Central high-pt electron pt in GeV (single-collection cut chain)."""
    session = Session()
    df = session.source(dataset_id)
    eles = df.Electrons
    good = eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)]
    return session, good.pt / 1000.0


def matching_pipeline(dataset_id: str):
    """Electron / truth-electron association within dR < 0.1."""
    session = Session()
    df = session.source(dataset_id)
    delta_r = session.declare_function("DeltaR", [ElementKind.FLOAT] * 4,
                                       ElementKind.FLOAT)
    mc_part = df.TruthParticles
    mc_ele = mc_part[(mc_part.pdgId == 11) | (mc_part.pdgId == -11)]
    eles = df.Electrons
    eles["ptgev"] = lambda e: e.pt / 1000.0
    mc_part["ptgev"] = lambda t: t.pt / 1000.0

    def good(p):
        return (p.ptgev > 20.0) & (abs(p.eta) < 1.4)

    good_eles = eles[good]
    good_mc = mc_ele[good]

    def very_near(picks, p):
        return picks[lambda ps: delta_r(ps.eta, ps.phi, p.eta, p.phi) < 0.1]

    good_eles["all"] = lambda sp: very_near(good_mc, sp)
    good_eles["has_match"] = lambda e: e.all.Count() > 0
    matched = good_eles[good_eles.has_match]
    matched["mc"] = lambda e: e.all.First()
    return session, {
        "matched": matched,
        "reco": matched.ptgev,
        "truth": matched.mc.ptgev,
        "resolution": matched.mc.ptgev - matched.ptgev,
    }


# ---------------------------------------------------------------------------
# random well-shaped expressions (every node kind appears across a sweep)

_NUMERIC = {
    "Electrons": [lambda e: e.pt / 1000.0, lambda e: e.eta, lambda e: e.phi,
                  lambda e: abs(e.eta), lambda e: e.pt / 1000.0 + abs(e.eta)],
    "Jets": [lambda j: j.pt / 1000.0, lambda j: j.eta, lambda j: -j.phi],
    "TruthParticles": [lambda t: t.pt / 1000.0, lambda t: abs(t.eta),
                       lambda t: t.pdgId * 1.0],
}

_BOOLEAN = {
    "Electrons": [lambda e: e.pt / 1000.0 > 25.0, lambda e: abs(e.eta) < 1.8,
                  lambda e: (e.pt / 1000.0 > 15.0) & (abs(e.eta) < 2.2),
                  lambda e: (e.phi > 0.0) | (e.pt / 1000.0 > 40.0)],
    "Jets": [lambda j: j.isGood, lambda j: (j.pt / 1000.0 > 60.0) | j.isGood,
             lambda j: abs(j.eta) < 3.0],
    "TruthParticles": [lambda t: (t.pdgId == 11) | (t.pdgId == -11),
                       lambda t: t.pdgId != 22, lambda t: t.pt / 1000.0 > 10.0],
}

_PLAIN_AGGS = ("Count", "Sum", "Min", "Max", "First")


def _collection(df, rng):
    name = rng.choice(("Electrons", "Jets", "TruthParticles"))
    coll = getattr(df, name)
    for _ in range(int(rng.integers(0, 3))):
        coll = coll[_BOOLEAN[name][int(rng.integers(0, len(_BOOLEAN[name])))]]
    return name, coll


def _numeric_leaf(name, coll, rng):
    builder = _NUMERIC[name][int(rng.integers(0, len(_NUMERIC[name])))]
    if rng.random() < 0.3:
        return coll.map(builder)
    return builder(coll)


def random_expression(session: Session, df, rng):
    """One well-shaped random expression; result depth <= 2."""
    delta_r = session.declare_function("DeltaR", [ElementKind.FLOAT] * 4,
                                       ElementKind.FLOAT)
    form = rng.choice(("leaf", "agg", "bool-agg", "per-event", "grid", "match"))
    if form == "leaf":
        name, coll = _collection(df, rng)
        return _numeric_leaf(name, coll, rng)
    if form == "agg":
        name, coll = _collection(df, rng)
        op = _PLAIN_AGGS[int(rng.integers(0, len(_PLAIN_AGGS)))]
        return getattr(_numeric_leaf(name, coll, rng), op)()
    if form == "bool-agg":
        name, coll = _collection(df, rng)
        pred = _BOOLEAN[name][int(rng.integers(0, len(_BOOLEAN[name])))]
        op = rng.choice(("Any", "All"))
        return getattr(coll.map(pred), op)()
    if form == "per-event":
        _, c1 = _collection(df, rng)
        _, c2 = _collection(df, rng)
        return c1.Count() * 2 + c2.Count()
    if form == "grid":
        outer_name, outer = _collection(df, rng)
        inner_name, inner = _collection(df, rng)
        grid = outer.map(lambda o: inner.map(
            lambda i: delta_r(o.eta, o.phi, i.eta, i.phi)))
        reduction = rng.choice(("none", "Count", "Sum"))
        return grid if reduction == "none" else getattr(grid, reduction)()
    # match: crossed filter with capture, guarded First
    src_name, src = _collection(df, rng)
    pick_name, pick = _collection(df, rng)
    cut = float(rng.choice((0.4, 1.0, 2.0)))

    def near(p):
        return pick[lambda q: delta_r(q.eta, q.phi, p.eta, p.phi) < cut]

    with_match = src[lambda e: near(e).Count() > 0]
    choice = rng.choice(("count", "first-pt"))
    if choice == "count":
        return src.map(lambda e: near(e).Count())
    return with_match.map(lambda e: near(e).First().pt / 1000.0)


ALL_NODE_KINDS = {"source", "attr", "binop", "unop", "filter", "map", "agg",
                  "call", "const", "param"}


def equivalence_sweep(engine, events, dataset_id, n=100, seed=4242):
    """Build ``n`` random expressions lazily, then check that split
    execution, all-local execution and the oracle agree on every outcome,
    and that every remote-capable subtree's query text is a translate/parse
    fixed point.  Returns the node kinds exercised."""
    rng = np.random.default_rng(seed)
    reset_kernel_counter()
    roots = []
    for _ in range(n):
        session = Session()
        df = session.source(dataset_id)
        roots.append(random_expression(session, df, rng))
    assert kernel_invocations() == 0, "expression building must not evaluate kernels"

    kinds_seen: set[str] = set()
    for i, root in enumerate(roots):
        dag = canonicalize(root)
        kinds_seen |= {node.kind for node in dag.nodes}
        want = outcome(lambda: oracle_eval(dag, events))
        got_split = outcome(lambda: as_nested(engine.materialize(root, mode="split")))
        got_local = outcome(lambda: as_nested(engine.materialize(root, mode="all-local")))
        assert same_outcome(got_split, want), f"expression {i}: split != oracle"
        assert same_outcome(got_local, want), f"expression {i}: all-local != oracle"

        plan_dag, _, plan = engine.plan(root, mode="split")
        for step in plan.steps:
            if step.backend_id != "remote":
                continue
            for nid in step.output_ids:
                text = translate(plan_dag.by_id[nid])
                again = translate(parse_query(text).node)
                assert again == text, f"expression {i}: query text not a fixed point"
    assert kinds_seen >= ALL_NODE_KINDS, f"missing kinds: {ALL_NODE_KINDS - kinds_seen}"
    return kinds_seen
