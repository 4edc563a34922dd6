"""Transition-system tests: grammar parsing, action (de)serialization,
the worked derivation sequences, legality rules, enumeration, and the
triple round trip LF -> actions -> AST -> LF.
"""

import random

import pytest

from lambdaehr.errors import (
    DataError,
    IllegalAction,
    IncompleteDerivation,
    NotDerivable,
)
from lambdaehr.forge import random_lf
from lambdaehr.grammar import (
    Action,
    ApplyConstr,
    AstNode,
    GenToken,
    REDUCE,
    TransitionSystem,
    action_to_line,
    default_grammar,
    line_to_action,
    parse_actions,
    parse_asdl,
    serialize_actions,
)
from lambdaehr.lf import (
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    Var,
    iter_nodes,
    parse_lf,
    print_lf,
    validate,
)
from lambdaehr.registry import default_registry


def harvest_system(lfs, **kwargs) -> TransitionSystem:
    """A system whose token vocabularies cover every value in `lfs`."""
    cuis, literals, binders = set(), set(), set()
    for lf in lfs:
        for node in iter_nodes(lf):
            if isinstance(node, ConceptRef):
                cuis.add(node.cui)
            elif isinstance(node, Literal):
                literals.add(f"'{node.value}'")
            elif isinstance(node, Lambda):
                binders.add(node.var)
    return TransitionSystem(
        var_names=tuple(sorted(binders or {"x"})),
        cui_tokens=cuis or {"@concept"},
        literal_tokens=literals or {"'@measurement'"},
        **kwargs,
    )


class TestAsdlParsing:
    def test_shipped_grammar_shape(self):
        g = default_grammar()
        assert g.root_type == "form"
        assert set(g.types) == {"form", "arg"}
        assert set(g.constructors) == {
            "Lambda", "Apply", "VarArg", "ConceptArg", "LitArg",
            "TimeArg", "SubForm", "PhArg",
        }
        lam = g.constructors["Lambda"]
        assert [(f.type, f.name, f.seq) for f in lam.fields] == [
            ("var", "binder", False),
            ("form", "body", True),
        ]
        assert g.constructors["PhArg"].fields == ()
        assert g.primitives == {"var", "pred_name", "cui", "literal", "tf"}

    def test_comments_and_whitespace_ignored(self):
        g = parse_asdl(
            "# heading\n"
            "thing = Leaf(word value)  # trailing\n"
            "      | Pair(thing* items)\n"
        )
        assert g.root_type == "thing"
        assert g.constructors["Pair"].fields[0].seq

    def test_duplicate_constructor_rejected(self):
        with pytest.raises(DataError):
            parse_asdl("a = X(word w)\nb = X(word w)")

    def test_duplicate_type_rejected(self):
        with pytest.raises(DataError):
            parse_asdl("a = X(word w)\na = Y(word w)")

    def test_bad_field_syntax_rejected(self):
        with pytest.raises(DataError):
            parse_asdl("a = X(word)")

    def test_empty_grammar_rejected(self):
        with pytest.raises(DataError):
            parse_asdl("# nothing here\n")

    def test_unknown_primitive_rejected_by_system(self):
        g = parse_asdl("form = Lambda(mystery binder, form* body)")
        with pytest.raises(DataError):
            TransitionSystem(grammar=g)


class TestActionSerialization:
    def test_lines(self):
        assert action_to_line(ApplyConstr("Lambda")) == "APPLY Lambda"
        assert action_to_line(REDUCE) == "REDUCE"
        assert action_to_line(GenToken("has_concept")) == "GEN has_concept"

    def test_tokens_keep_spaces_and_quotes(self):
        line = action_to_line(GenToken("'in the past 3 years'"))
        assert line == "GEN 'in the past 3 years'"
        assert line_to_action(line) == GenToken("'in the past 3 years'")

    def test_round_trip(self):
        actions = [
            ApplyConstr("Apply"),
            GenToken("count"),
            ApplyConstr("SubForm"),
            REDUCE,
        ]
        text = serialize_actions(actions)
        assert parse_actions(text) == actions

    def test_bad_line_rejected(self):
        with pytest.raises(DataError):
            line_to_action("POP")
        with pytest.raises(DataError):
            line_to_action("REDUCE now")


SIMPLE_LF = "λx.has_concept(x, C2242979)"
SIMPLE_ACTIONS = [
    ApplyConstr("Lambda"),
    GenToken("x"),
    ApplyConstr("Apply"),
    GenToken("has_concept"),
    ApplyConstr("VarArg"),
    GenToken("x"),
    ApplyConstr("ConceptArg"),
    GenToken("C2242979"),
    REDUCE,
    REDUCE,
]

DELTA_LF = "delta(λx.has_concept(x, C0005903) ∧ less_than(x, '38C'))"
DELTA_ACTIONS = [
    ApplyConstr("Apply"),
    GenToken("delta"),
    ApplyConstr("SubForm"),
    ApplyConstr("Lambda"),
    GenToken("x"),
    ApplyConstr("Apply"),
    GenToken("has_concept"),
    ApplyConstr("VarArg"),
    GenToken("x"),
    ApplyConstr("ConceptArg"),
    GenToken("C0005903"),
    REDUCE,
    ApplyConstr("Apply"),
    GenToken("less_than"),
    ApplyConstr("VarArg"),
    GenToken("x"),
    ApplyConstr("LitArg"),
    GenToken("'38C'"),
    REDUCE,
    REDUCE,
    REDUCE,
]


@pytest.fixture(scope="module")
def ts():
    return TransitionSystem(
        cui_tokens={"C2242979", "C0005903"},
        literal_tokens={"'38C'"},
    )


class TestWorkedDerivations:
    def test_simple_sequence_exact(self, ts):
        lf = parse_lf(SIMPLE_LF)
        assert ts.lf_to_actions(lf) == SIMPLE_ACTIONS

    def test_delta_sequence_exact(self, ts):
        lf = parse_lf(DELTA_LF)
        assert ts.lf_to_actions(lf) == DELTA_ACTIONS

    def test_delta_replay_is_byte_exact(self, ts):
        ast = ts.actions_to_ast(DELTA_ACTIONS)
        assert print_lf(ts.ast_to_lf(ast)) == DELTA_LF

    def test_time_frame_derivation(self, ts):
        lf = parse_lf("λx.has_concept(x, C2242979, visit)")
        actions = ts.lf_to_actions(lf)
        assert actions[-3:] == [GenToken("visit"), REDUCE, REDUCE]
        assert ApplyConstr("TimeArg") in actions
        assert print_lf(ts.ast_to_lf(ts.actions_to_ast(actions))) == (
            "λx.has_concept(x, C2242979, visit)"
        )

    def test_ast_structure(self, ts):
        ast = ts.actions_to_ast(SIMPLE_ACTIONS)
        assert isinstance(ast, AstNode)
        assert ast.constructor == "Lambda"
        assert ast["binder"] == "x"
        (apply_node,) = ast["body"]
        assert apply_node.constructor == "Apply"
        assert apply_node["pred"] == "has_concept"
        assert [a.constructor for a in apply_node["args"]] == [
            "VarArg", "ConceptArg",
        ]

    def test_single_constructor_wrapped_form(self, ts):
        lf = parse_lf("count(λx.has_concept(x, C2242979))")
        ast = ts.actions_to_ast(ts.lf_to_actions(lf))
        assert ast.constructor == "Apply"
        assert ast["pred"] == "count"


class TestIllegalActions:
    def test_empty_sequence_incomplete(self, ts):
        with pytest.raises(IncompleteDerivation):
            ts.actions_to_ast([])

    def test_truncated_sequence_incomplete(self, ts):
        with pytest.raises(IncompleteDerivation):
            ts.actions_to_ast(SIMPLE_ACTIONS[:-1])

    def test_gen_before_apply_is_illegal_at_zero(self, ts):
        with pytest.raises(IllegalAction) as info:
            ts.actions_to_ast([GenToken("x")])
        assert info.value.index == 0

    def test_illegal_index_points_at_offender(self, ts):
        actions = SIMPLE_ACTIONS[:8] + [REDUCE, REDUCE, REDUCE]
        with pytest.raises(IllegalAction) as info:
            ts.actions_to_ast(actions)
        assert info.value.index == 10

    def test_non_root_constructor_at_root(self, ts):
        with pytest.raises(IllegalAction):
            ts.apply_action(ts.initial_state(), ApplyConstr("VarArg"))

    def test_unknown_constructor(self, ts):
        with pytest.raises(IllegalAction):
            ts.apply_action(ts.initial_state(), ApplyConstr("Loop"))

    def test_unbound_variable_token(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:5]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, GenToken("y"))

    def test_reduce_on_empty_body(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:2]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, REDUCE)

    def test_reduce_mid_arguments(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:6]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, REDUCE)

    def test_wrapper_predicate_inside_body(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:3]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, GenToken("sum"))

    def test_body_predicate_at_root(self, ts):
        state = ts.apply_action(ts.initial_state(), ApplyConstr("Apply"))
        with pytest.raises(IllegalAction):
            ts.apply_action(state, GenToken("has_concept"))

    def test_lambda_inside_body_slot(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:2]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, ApplyConstr("Lambda"))

    def test_time_frame_on_predicate_without_one(self, ts):
        lf = parse_lf("λx.less_than(x, '38C')")
        actions = ts.lf_to_actions(lf)
        state = ts.initial_state()
        for action in actions[:-2]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, ApplyConstr("TimeArg"))

    def test_action_after_completion(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS:
            state = ts.apply_action(state, action)
        assert state.complete
        with pytest.raises(IllegalAction):
            ts.apply_action(state, REDUCE)

    def test_unquoted_token_in_literal_slot(self, ts):
        lf = parse_lf("λx.less_than(x, '38C')")
        actions = ts.lf_to_actions(lf)
        state = ts.initial_state()
        for action in actions[:-3]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, GenToken("38C"))

    def test_not_derivable_unknown_predicate(self, ts):
        lf = Lambda("x", Apply("bogus", (Var("x"), ConceptRef("C1"))))
        with pytest.raises(NotDerivable):
            ts.lf_to_actions(lf)

    def test_apply_action_leaves_input_state_alone(self, ts):
        state = ts.initial_state()
        after = ts.apply_action(state, ApplyConstr("Lambda"))
        assert not state.frames
        assert len(after.frames) == 1


class TestValidActions:
    def test_empty_state_offers_root_constructors(self, ts):
        actions = ts.valid_actions(ts.initial_state())
        assert actions == [ApplyConstr("Lambda"), ApplyConstr("Apply")]

    def test_complete_state_offers_nothing(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS:
            state = ts.apply_action(state, action)
        assert ts.valid_actions(state) == []

    def test_body_predicate_slot_enumerates_registry(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:3]:
            state = ts.apply_action(state, action)
        offered = {a.token for a in ts.valid_actions(state)}
        expected = {
            p.name for p in default_registry() if p.is_body_predicate
        }
        assert offered == expected

    def test_root_predicate_slot_enumerates_wrappers(self, ts):
        state = ts.apply_action(ts.initial_state(), ApplyConstr("Apply"))
        offered = {a.token for a in ts.valid_actions(state)}
        expected = {p.name for p in default_registry() if p.is_wrapper}
        assert offered == expected

    def test_optional_time_frame_slot(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:8]:
            state = ts.apply_action(state, action)
        assert ts.valid_actions(state) == [
            ApplyConstr("TimeArg"), REDUCE,
        ]

    def test_every_offer_is_applicable(self, ts):
        state = ts.initial_state()
        for action in DELTA_ACTIONS:
            for offered in ts.valid_actions(state):
                ts.apply_action(state, offered)
            state = ts.apply_action(state, action)

    def test_offers_exclude_illegal_constructors(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:6]:
            state = ts.apply_action(state, action)
        offered = ts.valid_actions(state)
        assert offered == [ApplyConstr("ConceptArg")]


@pytest.fixture(scope="module")
def sts():
    return TransitionSystem(sketch=True)


class TestSketchMode:
    def test_placeholder_arguments_derive(self, sts):
        lf = parse_lf(
            "count(λx.has_concept(x, @))", allow_placeholders=True
        )
        actions = sts.lf_to_actions(lf)
        assert ApplyConstr("PhArg") in actions
        assert print_lf(sts.ast_to_lf(sts.actions_to_ast(actions))) == (
            "count(λx.has_concept(x, @))"
        )

    def test_value_constructors_are_off(self, sts):
        lf = parse_lf("λx.has_concept(x, @)", allow_placeholders=True)
        actions = sts.lf_to_actions(lf)
        prefix = actions[: actions.index(ApplyConstr("PhArg"))]
        state = sts.initial_state()
        for action in prefix:
            state = sts.apply_action(state, action)
        assert sts.valid_actions(state) == [ApplyConstr("PhArg")]
        with pytest.raises(IllegalAction):
            sts.apply_action(state, ApplyConstr("ConceptArg"))

    def test_placeholder_rejected_outside_sketch_mode(self, ts):
        state = ts.initial_state()
        for action in SIMPLE_ACTIONS[:6]:
            state = ts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            ts.apply_action(state, ApplyConstr("PhArg"))

    def test_concrete_values_rejected_in_sketch_mode(self, sts):
        lf = parse_lf("λx.has_concept(x, @)", allow_placeholders=True)
        actions = sts.lf_to_actions(lf)
        state = sts.initial_state()
        for action in actions[: actions.index(ApplyConstr("PhArg"))]:
            state = sts.apply_action(state, action)
        with pytest.raises(IllegalAction):
            sts.apply_action(state, ApplyConstr("ConceptArg"))


class TestTripleRoundTrip:
    def test_golden_forms(self, ts):
        for text in [
            SIMPLE_LF,
            DELTA_LF,
            "λx.has_concept(x, C2242979, visit)",
            "count(λx.has_concept(x, C2242979))",
        ]:
            lf = parse_lf(text)
            actions = ts.lf_to_actions(lf)
            out = ts.ast_to_lf(ts.actions_to_ast(actions))
            assert print_lf(out) == print_lf(lf)

    def test_random_forms_round_trip_with_valid_prefixes(self):
        rng = random.Random(20413)
        registry = default_registry()
        lfs = [random_lf(rng, registry) for _ in range(300)]
        ts = harvest_system(lfs)
        for lf in lfs:
            validate(lf, registry)
            actions = ts.lf_to_actions(lf)
            state = ts.initial_state()
            for action in actions:
                assert action in ts.valid_actions(state)
                state = ts.apply_action(state, action)
            assert state.complete
            assert print_lf(ts.ast_to_lf(state.root)) == print_lf(lf)

    def test_state_clone_is_independent(self, ts):
        state = ts.initial_state()
        for action in DELTA_ACTIONS[:10]:
            state = ts.apply_action(state, action)
        frames_before = len(state.frames)
        scope_before = state.scope()
        after = ts.apply_action(state, DELTA_ACTIONS[10])
        assert len(state.frames) == frames_before
        assert state.scope() == scope_before
        assert len(after.frames) == frames_before - 1
