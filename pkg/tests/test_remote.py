import threading

import numpy as np
import pytest

from jagq import (ElementKind, JaggedArray, Session, cache_key, canonicalize,
                  parse_query, translate)
from jagq.errors import (QuerySyntaxError, UnknownDatasetError, UnsupportedNodeError)
from jagq.remote import wire

from conftest import DATASET_ID
from helpers import electron_pt_pipeline

LISTING_QUERY = ('From(localds://x) |> Get("Electrons") '
                 '|> Where(p0 => p0.pt > 50000 && Abs(p0.eta) < 1.5) '
                 '|> Select(p0 => p0.pt / 1000)')


class TestTranslate:
    def test_full_pipeline(self):
        _, root = electron_pt_pipeline("localds://x")
        assert translate(canonicalize(root).root) == LISTING_QUERY

    def test_bare_collection_fetch(self):
        df = Session().source("localds://x")
        out = translate(canonicalize(df.Electrons.pt).root)
        assert out == 'From(localds://x) |> Get("Electrons") |> Select(p0 => p0.pt)'

    def test_record_fetch_has_no_select(self):
        df = Session().source("localds://x")
        out = translate(canonicalize(df.Electrons).root)
        assert out == 'From(localds://x) |> Get("Electrons")'

    def test_count_stage(self):
        df = Session().source("localds://x")
        out = translate(canonicalize(df.Electrons.Count()).root)
        assert out == 'From(localds://x) |> Get("Electrons") |> Count()'

    def test_stacked_filters_in_order(self):
        df = Session().source("localds://x")
        eles = df.Electrons
        root = eles[eles.pt > 5.0][lambda e: e.eta < 1.0].pt
        out = translate(canonicalize(root).root)
        assert out == ('From(localds://x) |> Get("Electrons") '
                       '|> Where(p0 => p0.pt > 5) |> Where(p0 => p0.eta < 1) '
                       '|> Select(p0 => p0.pt)')

    def test_crossed_subtree_rejected(self):
        session = Session()
        df = session.source("localds://x")
        dr = session.declare_function("DeltaR", [ElementKind.FLOAT] * 4,
                                      ElementKind.FLOAT)
        eles, truth = df.Electrons, df.TruthParticles
        near = truth[lambda t: dr(t.eta, t.phi, eles.eta, eles.phi) < 0.1]
        with pytest.raises(UnsupportedNodeError):
            translate(canonicalize(near).root)

    def test_differently_filtered_leaves_rejected(self):
        df = Session().source("localds://x")
        eles = df.Electrons
        mixed = eles.pt + eles[eles.pt > 5.0].pt
        with pytest.raises(UnsupportedNodeError):
            translate(canonicalize(mixed).root)

    def test_alpha_renamed_subtrees_share_query_text(self):
        def build(name):
            df = Session().source("localds://x")
            eles = df.Electrons
            return eles[lambda p: getattr(p, "pt") > 5.0].pt if name == "p" else \
                eles[lambda q: getattr(q, "pt") > 5.0].pt

        first = translate(canonicalize(build("p")).root)
        second = translate(canonicalize(build("q")).root)
        assert first == second

    def test_first_stage_round_trip(self):
        df = Session().source("localds://x")
        text = translate(canonicalize(df.Electrons.First()).root)
        assert text == 'From(localds://x) |> Get("Electrons") |> First()'
        assert translate(parse_query(text).node) == text

    def test_round_trip_fixed_point(self):
        _, root = electron_pt_pipeline("localds://x")
        text = translate(canonicalize(root).root)
        assert translate(parse_query(text).node) == text

    def test_round_trip_generated_queries(self):
        rng = np.random.default_rng(17)
        leaves = ("pt", "eta", "phi")
        for _ in range(100):
            session = Session()
            df = session.source("localds://gen")
            coll = df.Electrons
            for _ in range(int(rng.integers(0, 3))):
                leaf = leaves[int(rng.integers(0, 3))]
                cut = round(float(rng.uniform(-2, 2)), 3)
                coll = coll[getattr(coll, leaf) > cut] if rng.random() < 0.5 \
                    else coll[lambda e, l=leaf, c=cut: abs(getattr(e, l)) < c]
            choice = rng.random()
            if choice < 0.4:
                root = getattr(coll, leaves[int(rng.integers(0, 3))]) / 1000.0
            elif choice < 0.7:
                root = coll.Count()
            else:
                root = coll
            text = translate(canonicalize(root).root)
            again = translate(parse_query(text).node)
            assert again == text


class TestParser:
    def test_keyword_case_sensitive(self):
        with pytest.raises(QuerySyntaxError):
            parse_query('From(x) |> where(p0 => p0.pt > 1)')

    def test_empty_where_rejected(self):
        with pytest.raises(QuerySyntaxError):
            parse_query('From(x) |> Get("E") |> Where()')

    def test_error_carries_position(self):
        with pytest.raises(QuerySyntaxError) as err:
            parse_query('From(x) |> Get("E") |> Where(p0 => p0.pt >)')
        assert err.value.position is not None

    def test_unknown_function(self):
        with pytest.raises(QuerySyntaxError):
            parse_query('From(x) |> Get("E") |> Select(p0 => Bogus(p0.pt))')

    def test_select_many_rejected(self):
        with pytest.raises(QuerySyntaxError):
            parse_query('From(x) |> Get("E") |> SelectMany(p0 => p0.pt)')

    def test_must_start_with_from(self):
        with pytest.raises(QuerySyntaxError):
            parse_query('Get("E")')

    def test_numbers(self):
        root = parse_query('From(x) |> Get("E") |> Select(p0 => p0.pt * -2 + 0.5)')
        consts = [n for n in canonicalize(root).nodes if n.kind == "const"]
        values = {(type(n.value).__name__, n.value) for n in consts}
        assert ("int", -2) in values and ("float", 0.5) in values


class TestWire:
    def test_result_round_trip(self):
        columns = [
            ("pt", JaggedArray([np.array([0, 2, 2, 3])],
                               np.array([1.5, -2.5, 3.25]))),
            ("n", JaggedArray([], np.array([3, 0, 9]), ElementKind.INT)),
            ("ok", JaggedArray([np.array([0, 1, 3, 3])],
                               np.array([True, False, True]))),
        ]
        frame = wire.encode_result(3, columns)
        n_events, decoded = wire.decode_result(frame)
        assert n_events == 3
        for (name, arr), (name2, arr2) in zip(columns, decoded):
            assert name == name2 and arr2.kind is arr.kind
            assert arr2.to_lists() == arr.to_lists()

    def test_encoding_deterministic(self):
        arr = JaggedArray([np.array([0, 5])], np.arange(5, dtype=np.float64))
        assert wire.encode_result(1, [("v", arr)]) == wire.encode_result(1, [("v", arr)])

    def test_bool_packing_odd_lengths(self):
        for n in (0, 1, 7, 8, 9, 17):
            flags = np.arange(n) % 3 == 0
            arr = JaggedArray([np.array([0, n])], flags, ElementKind.BOOL)
            _, cols = wire.decode_result(wire.encode_result(1, [("b", arr)]))
            assert cols[0][1].to_lists() == arr.to_lists()

    def test_request_round_trip(self):
        frame = wire.encode_request("localds://a b", 'From(x) |> Get("E")')
        assert wire.decode_request(frame) == ("localds://a b", 'From(x) |> Get("E")')

    def test_error_frames(self):
        frame = wire.encode_error("syntax", "bad at 3")
        assert wire.decode_error(frame) == ("syntax", "bad at 3")
        assert wire.decode_error(b"JQR1whatever") is None

    def test_truncated_frame_rejected(self):
        arr = JaggedArray([np.array([0, 2])], np.array([1.0, 2.0]))
        frame = wire.encode_result(1, [("v", arr)])
        with pytest.raises(wire.WireError):
            wire.decode_result(frame[:-3])


class TestService:
    def test_cache_hit_skips_evaluation_and_is_byte_identical(self, engine):
        query = LISTING_QUERY.replace("localds://x", DATASET_ID)
        first, frame1 = engine.service.submit(DATASET_ID, query)
        evals = engine.service.evaluations
        second, frame2 = engine.service.submit(DATASET_ID, query)
        assert engine.service.evaluations == evals
        assert frame1 == frame2
        assert second.columns[0][1].to_lists() == first.columns[0][1].to_lists()

    def test_cache_key_depends_on_dataset_and_query(self):
        q = 'From(x) |> Get("E")'
        assert cache_key("ds1", q) != cache_key("ds2", q)
        assert cache_key("ds1", q) != cache_key("ds1", q.replace("E", "F"))
        assert cache_key("ds1", q) == cache_key("ds1", q)

    def test_changing_a_constant_changes_the_key(self):
        base = LISTING_QUERY
        assert cache_key("ds", base) != cache_key("ds", base.replace("50000", "50001"))

    def test_cache_files_on_disk(self, engine, tmp_path):
        query = f'From({DATASET_ID}) |> Get("Jets") |> Count()'
        engine.service.submit(DATASET_ID, query)
        key = cache_key(DATASET_ID, query)
        stored = engine.service.cache_dir / key[:2] / f"{key}.jqr"
        meta = stored.with_suffix(".meta")
        assert stored.exists() and meta.exists()
        assert DATASET_ID in meta.read_text()

    def test_unknown_dataset(self, engine):
        with pytest.raises(UnknownDatasetError):
            engine.service.submit("localds://missing", 'From(x) |> Get("E")')

    def test_syntax_error_over_the_wire(self, engine):
        with pytest.raises(QuerySyntaxError):
            engine.service.submit(DATASET_ID, 'From(x) |> nope')

    def test_empty_sequence_error_crosses_the_wire(self, engine):
        from jagq.errors import EmptySequenceError
        query = f'From({DATASET_ID}) |> Get("Electrons") |> Select(p0 => p0.pt) |> First()'
        with pytest.raises(EmptySequenceError) as err:
            engine.service.submit(DATASET_ID, query)
        assert err.value.op == "first" and err.value.event_index >= 0

    def test_malformed_request_frame_returns_error_frame(self, engine):
        response = engine.service.submit_bytes(b"garbage")
        assert wire.decode_error(response) is not None

    def test_concurrent_identical_misses_converge(self, engine):
        query = f'From({DATASET_ID}) |> Get("Electrons") |> Select(p0 => p0.eta)'
        frames = []
        errors = []

        def work():
            try:
                _, frame = engine.service.submit(DATASET_ID, query)
                frames.append(frame)
            except Exception as err:  # pragma: no cover
                errors.append(err)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert all(f == frames[0] for f in frames)
        key = cache_key(DATASET_ID, query)
        assert (engine.service.cache_dir / key[:2] / f"{key}.jqr").read_bytes() == frames[0]

    def test_empty_dataset(self, tmp_path):
        from jagq import AnalysisEngine, DatasetRegistry, generate_sample
        generate_sample(1, 0, events_path=tmp_path / "empty.events",
                        schema_path=tmp_path / "empty.schema")
        registry = DatasetRegistry()
        registry.register("localds://empty", tmp_path / "empty.events",
                          tmp_path / "empty.schema")
        engine = AnalysisEngine(registry, cache_dir=tmp_path / "cache")
        result, _ = engine.service.submit(
            "localds://empty", 'From(localds://empty) |> Get("Electrons") |> Select(p0 => p0.pt)')
        assert result.n_events == 0
        assert result.columns[0][1].to_lists() == []
        _, root = electron_pt_pipeline("localds://empty")
        for mode in ("split", "all-local"):
            value = engine.materialize(root, mode=mode)
            assert value.to_lists() == [] and value.n_events == 0
