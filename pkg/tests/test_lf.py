"""Logical-form parsing, printing, and comparison."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lambdaehr.errors import (
    ArityMismatch,
    LfSyntaxError,
    UnboundVariable,
    UnknownPredicate,
)
from lambdaehr.forge import random_lf
from lambdaehr.lf import (
    And,
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    TimeFrame,
    Var,
    count_predicates,
    exact_match,
    form_depth,
    match_mod_and,
    outermost_label,
    parse_lf,
    print_lf,
    strip_time_frames,
    validate,
)

LAM = "λ"
CONJ = "∧"


class TestParse:
    def test_comparison_example(self):
        lf = parse_lf(f"delta({LAM}x.has_concept(x, C0005903) {CONJ} less_than(x, '38C'))")
        assert lf == Apply(
            "delta",
            (
                Lambda(
                    "x",
                    And(
                        Apply("has_concept", (Var("x"), ConceptRef("C0005903"))),
                        Apply("less_than", (Var("x"), Literal("38C"))),
                    ),
                ),
            ),
        )

    def test_time_frame_example(self):
        lf = parse_lf(f"{LAM}x.has_concept(x, C2242979, visit)")
        assert lf == Lambda(
            "x",
            Apply(
                "has_concept",
                (Var("x"), ConceptRef("C2242979"), TimeFrame("visit")),
            ),
        )

    def test_truncated_input_position_is_byte_offset(self):
        with pytest.raises(LfSyntaxError) as exc:
            parse_lf(f"sum({LAM}x.")
        assert exc.value.position == 8

    def test_ascii_lambda_spelling(self):
        a = parse_lf(f"{LAM}x.has_concept(x, C1)")
        b = parse_lf("lambda x.has_concept(x, C1)")
        assert exact_match(a, b)

    def test_whitespace_insensitive(self):
        text = (
            f"sum( {LAM}x.has_concept( x , C0042036 ) {CONJ} "
            "time_within( x , 'last night' ) )"
        )
        assert print_lf(parse_lf(text)) == (
            f"sum({LAM}x.has_concept(x, C0042036) {CONJ} "
            "time_within(x, 'last night'))"
        )

    def test_unknown_predicate(self):
        with pytest.raises(UnknownPredicate):
            parse_lf(f"{LAM}x.frobnicate(x, C1)")

    def test_arity_mismatch(self):
        with pytest.raises(ArityMismatch):
            parse_lf(f"{LAM}x.has_concept(x)")
        with pytest.raises(ArityMismatch):
            parse_lf(f"{LAM}x.has_concept(x, C1, C2, C3)")

    def test_time_frame_on_wrong_predicate(self):
        with pytest.raises(ArityMismatch):
            parse_lf(f"{LAM}x.less_than(x, '38C', visit)")

    def test_unbound_variable(self):
        with pytest.raises(UnboundVariable):
            parse_lf("has_concept(x, C1)")
        with pytest.raises(UnboundVariable):
            parse_lf(f"{LAM}x.has_concept(y, C1)")

    def test_empty_input(self):
        with pytest.raises(LfSyntaxError):
            parse_lf("")

    def test_unterminated_literal(self):
        with pytest.raises(LfSyntaxError):
            parse_lf(f"{LAM}x.time_within(x, 'oops)")

    def test_trailing_junk(self):
        with pytest.raises(LfSyntaxError):
            parse_lf(f"{LAM}x.has_concept(x, C1))")

    def test_conjunction_outside_lambda_body(self):
        with pytest.raises(LfSyntaxError):
            parse_lf(
                f"sum(count({LAM}x.has_concept(x, C1)) {CONJ} "
                f"count({LAM}x.has_concept(x, C2)))"
            )

    def test_placeholder_rejected_outside_sketches(self):
        with pytest.raises(LfSyntaxError):
            parse_lf(f"{LAM}x.has_concept(x, @)")
        lf = parse_lf(f"{LAM}x.has_concept(x, @)", allow_placeholders=True)
        assert print_lf(lf) == f"{LAM}x.has_concept(x, @)"

    def test_nested_wrapper(self):
        lf = parse_lf(f"is_negative(latest({LAM}x.has_concept(x, C1)))")
        assert outermost_label(lf) == "is_negative"
        assert count_predicates(lf) == 3
        assert form_depth(lf) == 4


class TestPrint:
    def test_direct_rendering(self):
        lf = Lambda("x", Apply("has_concept", (Var("x"), ConceptRef("C0042036"))))
        assert print_lf(lf) == f"{LAM}x.has_concept(x, C0042036)"

    def test_deterministic(self):
        rng = random.Random(11)
        for _ in range(50):
            lf = random_lf(rng)
            assert print_lf(lf) == print_lf(lf)

    def test_conjunct_order_preserved(self):
        a = parse_lf(f"{LAM}x.has_concept(x, C1) {CONJ} time_within(x, 't')")
        b = parse_lf(f"{LAM}x.time_within(x, 't') {CONJ} has_concept(x, C1)")
        assert not exact_match(a, b)
        assert match_mod_and(a, b)


class TestExactMatch:
    def test_reflexive(self):
        lf = parse_lf(f"{LAM}x.has_concept(x, C1)")
        assert exact_match(lf, lf)

    def test_literal_difference(self):
        a = parse_lf(f"{LAM}x.less_than(x, '38C')")
        b = parse_lf(f"{LAM}x.less_than(x, '39C')")
        assert not exact_match(a, b)

    def test_spacing_canonicalized(self):
        a = parse_lf(f"{LAM}x.has_concept(x,C1)")
        b = parse_lf(f"{LAM}x . has_concept ( x , C1 )")
        assert exact_match(a, b)

    def test_equivalence_relation(self):
        rng = random.Random(5)
        forms = [random_lf(rng) for _ in range(30)]
        for a in forms:
            assert exact_match(a, a)
        for a in forms:
            for b in forms:
                assert exact_match(a, b) == exact_match(b, a)
                if exact_match(a, b):
                    for c in forms:
                        if exact_match(b, c):
                            assert exact_match(a, c)


class TestStripTimeFrames:
    def test_worked_example(self):
        lf = parse_lf(f"{LAM}x.has_concept(x, C2242979, visit)")
        assert print_lf(strip_time_frames(lf)) == f"{LAM}x.has_concept(x, C2242979)"

    def test_no_time_frame_unchanged(self):
        lf = parse_lf(f"{LAM}x.has_concept(x, C1)")
        assert strip_time_frames(lf) == lf

    def test_inside_aggregation(self):
        lf = parse_lf(
            f"sum({LAM}x.has_concept(x, C0042036, visit) {CONJ} "
            "time_within(x, 'last night'))"
        )
        assert print_lf(strip_time_frames(lf)) == (
            f"sum({LAM}x.has_concept(x, C0042036) {CONJ} "
            "time_within(x, 'last night'))"
        )

    def test_idempotent_and_label_preserving(self):
        rng = random.Random(23)
        for _ in range(200):
            lf = random_lf(rng)
            stripped = strip_time_frames(lf)
            assert strip_time_frames(stripped) == stripped
            assert outermost_label(stripped) == outermost_label(lf)


class TestOutermostLabel:
    def test_aggregation(self):
        assert outermost_label(parse_lf(f"sum({LAM}x.has_concept(x, C0042036))")) == "sum"

    def test_lambda_root(self):
        assert outermost_label(parse_lf(f"{LAM}x.has_concept(x, C1)")) == f"{LAM}x"

    def test_grouped_is_star(self):
        lf = parse_lf(f"is_negative(latest({LAM}x.has_concept(x, C1)))")
        assert outermost_label(lf) == "is_negative"
        assert outermost_label(lf, grouped=True) == "is_*"


class TestRoundTrip:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_parse_print_identity(self, seed):
        rng = random.Random(seed)
        lf = random_lf(rng)
        text = print_lf(lf)
        again = parse_lf(text)
        assert again == lf
        assert print_lf(again) == text

    def test_batch_round_trip(self):
        rng = random.Random(99)
        for _ in range(2000)        :
            lf = random_lf(rng)
            assert parse_lf(print_lf(lf)) == lf


class TestValidate:
    def test_accepts_generated_forms(self):
        rng = random.Random(3)
        for _ in range(100):
            validate(random_lf(rng))

    def test_rejects_conjunction_at_root(self):
        bad = And(
            Apply("has_concept", (Var("x"), ConceptRef("C1"))),
            Apply("has_concept", (Var("x"), ConceptRef("C2"))),
        )
        with pytest.raises(LfSyntaxError):
            validate(bad)

    def test_rejects_unbound_variable(self):
        bad = Lambda("x", Apply("has_concept", (Var("y"), ConceptRef("C1"))))
        with pytest.raises(UnboundVariable):
            validate(bad)

    def test_rejects_unknown_predicate(self):
        bad = Lambda("x", Apply("nope", (Var("x"), ConceptRef("C1"))))
        with pytest.raises(UnknownPredicate):
            validate(bad)

    def test_rejects_misplaced_time_frame(self):
        bad = Lambda("x", Apply("less_than", (Var("x"), TimeFrame("visit"))))
        with pytest.raises((ArityMismatch, LfSyntaxError)):
            validate(bad)
