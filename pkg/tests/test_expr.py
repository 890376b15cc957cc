import pytest

from jagq import ElementKind, Session, canonicalize, kernel_invocations, reset_kernel_counter
from jagq.errors import (AliasCycleError, BuildError, DuplicateAliasError,
                         FunctionRedeclarationError, UnknownFunctionError)


@pytest.fixture()
def df():
    return Session().source("localds://x")


def text_of(handle):
    return canonicalize(handle).text()


class TestRecording:
    def test_attribute_chain(self, df):
        node = df.Electrons.pt.node
        assert node.kind == "attr" and node.name == "pt"
        assert node.children[0].name == "Electrons"

    def test_string_indexing_equals_attribute(self, df):
        assert df.Jets["pt"].node is df.Jets.pt.node

    def test_collection_accessor_sugar(self, df):
        assert df.Electrons("Electrons").node is df.Electrons.node

    def test_building_never_evaluates_kernels(self, df):
        reset_kernel_counter()
        eles = df.Electrons
        good = eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)]
        _ = good.pt / 1000.0
        _ = df.Jets.map(lambda j: j.pt / 1000.0).Sum()
        assert kernel_invocations() == 0

    def test_filter_function_and_inline_forms_agree(self, df):
        jets = df.Jets

        def good_jet(j):
            return (j.pt > 35.0) & (abs(j.eta) < 2.5) & j.isGood

        inline = jets[(jets.pt > 35.0) & (abs(jets.eta) < 2.5) & jets.isGood]
        assert text_of(jets[good_jet]) == text_of(inline)

    def test_alpha_equivalent_lambdas_identical(self):
        first = Session().source("localds://x")
        second = Session().source("localds://x")
        a = first.Jets[lambda j: j.pt > 30.0]
        b = second.Jets[lambda q: q.pt > 30.0]
        assert text_of(a) == text_of(b)

    def test_constant_true_filter_is_noop(self, df):
        assert text_of(df.Electrons[True]) == text_of(df.Electrons)

    def test_map_identity_dissolves(self, df):
        assert text_of(df.Electrons.map(lambda e: e)) == text_of(df.Electrons)

    def test_map_and_attr_form_coincide(self, df):
        assert text_of(df.Jets.map(lambda j: j.pt / 1000.0)) == \
            text_of(df.Jets.pt / 1000.0)

    def test_canonicalize_idempotent(self, df):
        eles = df.Electrons
        root = eles[(eles.pt > 1.0) | (eles.eta < 0.5)].pt
        dag = canonicalize(root)
        assert canonicalize(dag.root).text() == dag.text()

    def test_canonical_deterministic_across_sessions(self):
        def build():
            df = Session().source("localds://x")
            eles = df.Electrons
            return (eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)]).pt / 1000.0
        assert text_of(build()) == text_of(build())

    def test_truthiness_rejected(self, df):
        with pytest.raises(BuildError):
            bool(df.Electrons.pt > 5.0)

    def test_tuple_indexing_rejected(self, df):
        with pytest.raises(BuildError):
            df.Electrons[("pt", "eta")]

    def test_map_must_return_expression(self, df):
        with pytest.raises(BuildError):
            df.Electrons.map(lambda e: (e.pt, e.eta))

    def test_cross_session_mixing_rejected(self, df):
        other = Session().source("localds://y")
        with pytest.raises(BuildError):
            df.Electrons.pt + other.Electrons.pt

    def test_handles_immutable(self, df):
        with pytest.raises(BuildError):
            df.Electrons.node = None


class TestAliases:
    def test_defined_before_filter_used_after(self, df):
        jets = df.Jets
        jets["ptgev"] = lambda j: j.pt / 1000.0
        alias_form = jets[jets.ptgev > 30.0].ptgev
        inline = jets[(jets.pt / 1000.0) > 30.0].pt / 1000.0
        assert text_of(alias_form) == text_of(inline)

    def test_expression_body(self, df):
        jets = df.Jets
        df.Jets["ptgev2"] = jets.pt / 1000.0
        assert text_of(jets.ptgev2) == text_of(jets.pt / 1000.0)

    def test_constant_alias(self, df):
        df.Jets["weight"] = 2.0
        node = df.Jets.weight.node
        assert node.kind == "const" and node.value == 2.0

    def test_dataset_level_alias(self, df):
        jets = df.Jets
        df["good_jets"] = lambda d: d.Jets[lambda j: j.isGood]
        assert text_of(df.good_jets) == text_of(jets[lambda j: j.isGood])

    def test_duplicate_rejected(self, df):
        df.Jets["x"] = 1.0
        with pytest.raises(DuplicateAliasError):
            df.Jets["x"] = 2.0

    def test_cycle_rejected(self, df):
        eles = df.Electrons
        eles["a"] = lambda e: e.b + 1.0
        eles["b"] = lambda e: e.a * 2.0
        with pytest.raises(AliasCycleError):
            _ = eles.a

    def test_alias_on_primitive_anchor_rejected(self, df):
        with pytest.raises(BuildError):
            df.Electrons.pt["x"] = 1.0

    def test_count_guard_alias(self, df):
        eles = df.Electrons
        eles["n_like"] = lambda e: e.pt > 0.0
        filtered = eles[eles.n_like]
        assert filtered.node.kind == "filter"


class TestFunctions:
    def test_declared_function_builds_calls(self, df):
        session = df.session
        dr = session.declare_function("DR2", [ElementKind.FLOAT] * 4,
                                      ElementKind.FLOAT)
        e = df.Electrons
        call = dr(e.eta, e.phi, 0.0, 0.0)
        assert call.node.kind == "call" and call.node.name == "DR2"

    def test_call_before_declaration_fails(self, df):
        with pytest.raises(UnknownFunctionError):
            df.session.call("Nope", df.Electrons.pt)

    def test_redeclaration_different_signature(self, df):
        session = df.session
        session.declare_function("F", [ElementKind.FLOAT], ElementKind.FLOAT)
        session.declare_function("F", [ElementKind.FLOAT], ElementKind.FLOAT)
        with pytest.raises(FunctionRedeclarationError):
            session.declare_function("F", [ElementKind.FLOAT] * 2, ElementKind.FLOAT)

    def test_arity_checked(self, df):
        with pytest.raises(BuildError):
            df.session.call("DeltaR", df.Electrons.eta)


class TestNormalization:
    def test_attr_pushes_through_filter(self, df):
        eles = df.Electrons
        root = eles[eles.pt > 5.0].pt
        dag = canonicalize(root)
        assert dag.root.kind == "filter"
        assert dag.root.children[0].kind == "attr"
        assert dag.root.children[0].name == "pt"

    def test_attr_pushes_through_first(self, df):
        root = df.Electrons.First().pt
        dag = canonicalize(root)
        assert dag.root.kind == "agg" and dag.root.op == "First"
        assert dag.root.children[0].name == "pt"

    def test_unbound_param_rejected(self, df):
        from jagq.errors import UnboundParamError
        space = df.session.space
        stray = space.node("param", param_id=999, bind_src=df.Electrons.node)
        with pytest.raises(UnboundParamError):
            canonicalize(stray)
