"""Entity abstraction and token normalization."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lambdaehr.errors import (
    DataError,
    EntityAlignmentError,
    OverlappingSpans,
    SpanOutOfRange,
)
from lambdaehr.lf import exact_match, parse_lf, print_lf
from lambdaehr.preprocess import (
    EntitySpan,
    PLACEHOLDER_TOKENS,
    abstract_entities,
    abstract_lf,
    abstract_question,
    normalize,
    preprocess_record,
    reattach_lf,
)
from lambdaehr.registry import default_registry

LAM = "λ"
CONJ = "∧"

ICU_QUESTION = "Did her temperature fall below 38C?"
ICU_SPANS = [
    EntitySpan(4, 7, "person", "her"),
    EntitySpan(8, 19, "concept", "C0005903"),
    EntitySpan(31, 34, "measurement", "38C"),
]


class TestAbstractEntities:
    def test_es_golden_row(self):
        es, _ = abstract_entities(ICU_QUESTION, ICU_SPANS)
        assert es == "Did patient concept(C0005903) fall below measurement('38C') ?"

    def test_no_spans_unchanged(self):
        es, ordered = abstract_entities("Hello there?", [])
        assert es == "Hello there?"
        assert ordered == ()

    def test_span_out_of_range(self):
        with pytest.raises(SpanOutOfRange):
            abstract_entities("short", [EntitySpan(0, 99, "concept", "C1")])

    def test_overlapping_spans(self):
        spans = [
            EntitySpan(0, 5, "concept", "C1"),
            EntitySpan(3, 8, "concept", "C2"),
        ]
        with pytest.raises(OverlappingSpans):
            abstract_entities("abcdefghij", spans)

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            EntitySpan(0, 3, "gadget", "x")


class TestNormalize:
    def test_pp_golden_row_icu(self):
        es = "Did patient concept(C0005903) fall below measurement('38C') ?"
        assert list(normalize(es)) == [
            "did", "patient", "concept", "fall", "below", "measur",
        ]

    def test_pp_golden_row_fhir(self):
        es = (
            "How many times were the concept(C0234422) given to patient "
            "temporal_ref('in the past 3 years') ?"
        )
        assert list(normalize(es)) == [
            "how", "mani", "time", "were", "the", "concept",
            "given", "to", "patient", "temporal_ref",
        ]

    def test_empty(self):
        assert normalize("") == ()

    def test_placeholders_survive_byte_identical(self):
        tokens = normalize("patient concept measur temporal_ref")
        assert list(tokens) == ["patient", "concept", "measur", "temporal_ref"]

    def test_idempotent_on_own_output(self):
        examples = [
            "Did patient concept(C0005903) fall below measurement('38C') ?",
            "How many times were the concept(C1) given to patient "
            "temporal_ref('in the past 3 years') ?",
            "Was the wound healed during the visit?",
        ]
        for es in examples:
            once = normalize(es)
            again = normalize(" ".join(once))
            assert once == again

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=60))
    def test_output_is_clean(self, text):
        import unicodedata

        for tok in normalize(text):
            assert tok == tok.lower()
            if tok in PLACEHOLDER_TOKENS:
                continue
            for ch in tok:
                assert ch == "_" or not unicodedata.category(ch).startswith("P")


class TestLfAbstraction:
    def test_abstract_and_reattach(self):
        entities = (
            EntitySpan(4, 7, "person", "her"),
            EntitySpan(8, 19, "concept", "C0005903"),
            EntitySpan(31, 34, "measurement", "38C"),
        )
        lf = parse_lf(
            f"delta({LAM}x.has_concept(x, C0005903) {CONJ} less_than(x, '38C'))"
        )
        abstract = abstract_lf(lf, entities)
        assert print_lf(abstract) == (
            f"delta({LAM}x.has_concept(x, @concept) {CONJ} "
            "less_than(x, '@measurement'))"
        )
        assert exact_match(reattach_lf(abstract, entities), lf)

    def test_unmatched_value_raises(self):
        lf = parse_lf(f"{LAM}x.has_concept(x, C9999999)")
        with pytest.raises(EntityAlignmentError):
            abstract_lf(lf, (EntitySpan(0, 3, "concept", "C0000001"),))

    def test_reattach_without_entities_raises(self):
        lf = parse_lf(f"{LAM}x.has_concept(x, @concept)")
        with pytest.raises(EntityAlignmentError):
            reattach_lf(lf, ())

    def test_reattach_in_question_order(self):
        entities = (
            EntitySpan(0, 1, "concept", "C0000001"),
            EntitySpan(5, 6, "concept", "C0000002"),
        )
        lf = parse_lf(
            f"{LAM}x.has_concept(x, @concept) {CONJ} has_concept(x, @concept)"
        )
        restored = reattach_lf(lf, entities)
        assert print_lf(restored) == (
            f"{LAM}x.has_concept(x, C0000001) {CONJ} has_concept(x, C0000002)"
        )


class TestRecordPipeline:
    def test_end_to_end(self):
        record = {
            "id": "q1",
            "question": ICU_QUESTION,
            "entities": [
                {"start": 4, "end": 7, "kind": "person", "value": "her"},
                {"start": 8, "end": 19, "kind": "concept", "value": "C0005903"},
                {"start": 31, "end": 34, "kind": "measurement", "value": "38C"},
            ],
            "lf": f"delta({LAM}x.has_concept(x, C0005903) {CONJ} less_than(x, '38C'))",
        }
        out = preprocess_record(record, default_registry())
        assert out["tokens"] == ["did", "patient", "concept", "fall", "below", "measur"]
        assert out["lf_stripped"] == record["lf"]
        assert out["lf_abstract"] == (
            f"delta({LAM}x.has_concept(x, @concept) {CONJ} "
            "less_than(x, '@measurement'))"
        )

    def test_strips_time_frames(self):
        record = {
            "id": "q2",
            "question": "What microorganisms have been grown?",
            "entities": [
                {"start": 5, "end": 19, "kind": "concept", "value": "C2242979"},
            ],
            "lf": f"{LAM}x.has_concept(x, C2242979, visit)",
        }
        out = preprocess_record(record, default_registry())
        assert out["lf_stripped"] == f"{LAM}x.has_concept(x, C2242979)"
        assert out["lf_abstract"] == f"{LAM}x.has_concept(x, @concept)"

    def test_misaligned_entities_raise(self):
        record = {
            "id": "q3",
            "question": "Was pneumonia found?",
            "entities": [
                {"start": 4, "end": 13, "kind": "concept", "value": "C0032285"},
            ],
            "lf": f"{LAM}x.has_concept(x, C9999999)",
        }
        with pytest.raises(EntityAlignmentError):
            preprocess_record(record, default_registry())

    def test_abstracted_question_structure(self):
        aq = abstract_question(ICU_QUESTION, ICU_SPANS)
        assert aq.original == ICU_QUESTION
        assert [e.kind for e in aq.entities] == ["person", "concept", "measurement"]
        assert aq.tokens == ("did", "patient", "concept", "fall", "below", "measur")
