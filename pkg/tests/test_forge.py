"""Corpus generation, stats auditing, and recombination augmentation."""

import random

import pytest

from lambdaehr.errors import DataError, InsufficientMaterial, SpecExhausted
from lambdaehr.forge import (
    CorpusStats,
    SynonymRule,
    Trigger,
    audit_stats,
    generate_corpus,
    lexicon_from_spec,
    lexicon_rows_from_spec,
    load_spec,
    load_synonyms,
    random_lf,
    recombine,
    slot_kind,
    template_capacity,
    write_jsonl_text,
)
from lambdaehr.lf import (
    ConceptRef,
    count_predicates,
    iter_nodes,
    parse_lf,
    validate,
)
from lambdaehr.preprocess import preprocess_record
from lambdaehr.registry import default_registry


def toy_spec_dict():
    return {
        "name": "toy",
        "count": 30,
        "seed": 7,
        "predicates": [
            "has_concept",
            "time_within",
            "count",
            "less_than",
            "delta",
        ],
        "pools": {
            "person": ["this patient", "the patient"],
            "concept": [
                {"surface": "emergency visits", "cui": "C0234422"},
                {"surface": "flu shots", "cui": "C0021403"},
                {"surface": "blood pressure", "cui": "C0005823"},
                {"surface": "heart rate", "cui": "C0018810"},
            ],
            "measurement": ["38C", "120mmHg", "60bpm"],
            "temporal_ref": ["in the past 3 years", "last month", "yesterday"],
        },
        "templates": [
            {
                "question": (
                    "how many times did {person} have {concept} "
                    "{temporal_ref}"
                ),
                "lf": (
                    "count(λx.has_concept(x, {concept}) "
                    "∧ time_within(x, '{temporal_ref}'))"
                ),
                "weight": 2.0,
                "triggers": [
                    {"phrase": "how many times", "predicate": "count"},
                ],
            },
            {
                "question": (
                    "did {person} {concept} fall below {measurement} "
                    "{temporal_ref}"
                ),
                "lf": (
                    "delta(λx.has_concept(x, {concept}) "
                    "∧ less_than(x, '{measurement}') "
                    "∧ time_within(x, '{temporal_ref}'))"
                ),
                "triggers": [
                    {
                        "phrase": "fall below {measurement}",
                        "predicate": "less_than",
                        "consumes": "measurement",
                    },
                    {
                        "phrase": "fall below {measurement}",
                        "predicate": "delta",
                    },
                ],
            },
        ],
    }


@pytest.fixture
def toy_spec():
    return load_spec(toy_spec_dict())


@pytest.fixture
def toy_corpus(toy_spec):
    return generate_corpus(toy_spec)


class TestSlotKind:
    def test_bare_kinds(self):
        assert slot_kind("concept") == "concept"
        assert slot_kind("person") == "person"
        assert slot_kind("measurement") == "measurement"
        assert slot_kind("temporal_ref") == "temporal_ref"

    def test_suffixed(self):
        assert slot_kind("concept_2") == "concept"
        assert slot_kind("temporal_ref_start") == "temporal_ref"

    def test_prefix_must_be_a_whole_kind(self):
        with pytest.raises(DataError):
            slot_kind("conceptual")
        with pytest.raises(DataError):
            slot_kind("temporal")


class TestLoadSpec:
    def test_loads(self, toy_spec):
        assert toy_spec.name == "toy"
        assert toy_spec.count == 30
        assert len(toy_spec.templates) == 2
        assert toy_spec.templates[1].triggers[0] == Trigger(
            "fall below {measurement}", "less_than", "measurement"
        )

    def test_from_file(self, tmp_path):
        import json

        path = tmp_path / "spec.json"
        path.write_text(json.dumps(toy_spec_dict()), encoding="utf-8")
        spec = load_spec(str(path))
        assert spec.name == "toy"
        assert spec.path == str(path)

    def test_missing_field(self):
        raw = toy_spec_dict()
        del raw["pools"]
        with pytest.raises(DataError):
            load_spec(raw)

    def test_nonpositive_count(self):
        raw = toy_spec_dict()
        raw["count"] = 0
        with pytest.raises(DataError):
            load_spec(raw)

    def test_no_templates(self):
        raw = toy_spec_dict()
        raw["templates"] = []
        with pytest.raises(DataError):
            load_spec(raw)

    def test_empty_pool(self):
        raw = toy_spec_dict()
        raw["pools"]["concept"] = []
        with pytest.raises(DataError):
            load_spec(raw)

    def test_unknown_pool_kind(self):
        raw = toy_spec_dict()
        raw["pools"]["dosage"] = ["5mg"]
        with pytest.raises(DataError):
            load_spec(raw)

    def test_concept_pool_item_shape(self):
        raw = toy_spec_dict()
        raw["pools"]["concept"][0] = {"surface": "x"}
        with pytest.raises(DataError):
            load_spec(raw)

    def test_quote_in_literal_pool(self):
        raw = toy_spec_dict()
        raw["pools"]["measurement"][0] = "patient's weight"
        with pytest.raises(DataError):
            load_spec(raw)

    def test_unknown_predicate(self):
        raw = toy_spec_dict()
        raw["predicates"].append("not_a_predicate")
        with pytest.raises(DataError):
            load_spec(raw)

    def test_nonpositive_weight(self):
        raw = toy_spec_dict()
        raw["templates"][0]["weight"] = 0
        with pytest.raises(DataError):
            load_spec(raw)

    def test_lf_slot_missing_from_question(self):
        raw = toy_spec_dict()
        raw["templates"][0]["question"] = "how many times did {person} visit"
        with pytest.raises(DataError):
            load_spec(raw)

    def test_trigger_phrase_not_in_question(self):
        raw = toy_spec_dict()
        raw["templates"][0]["triggers"][0]["phrase"] = "not in there"
        with pytest.raises(DataError):
            load_spec(raw)

    def test_trigger_predicate_outside_inventory(self):
        raw = toy_spec_dict()
        raw["templates"][0]["triggers"][0]["predicate"] = "sum"
        with pytest.raises(DataError):
            load_spec(raw)

    def test_inventory_predicate_never_used(self):
        raw = toy_spec_dict()
        raw["predicates"].append("sum")
        with pytest.raises(DataError):
            load_spec(raw)

    def test_template_uses_predicate_outside_inventory(self):
        raw = toy_spec_dict()
        raw["predicates"].remove("delta")
        with pytest.raises(DataError):
            load_spec(raw)

    def test_bad_template_lf(self):
        raw = toy_spec_dict()
        raw["templates"][0]["lf"] = "count(λx.has_concept(x, {concept})"
        with pytest.raises(Exception):
            load_spec(raw)

    def test_person_slot_in_lf(self):
        raw = toy_spec_dict()
        raw["templates"][0]["lf"] = "count(λx.has_concept(x, {person}))"
        with pytest.raises(DataError):
            load_spec(raw)


class TestGenerateCorpus:
    def test_single_template_count_one(self):
        raw = {
            "name": "one",
            "count": 1,
            "seed": 0,
            "predicates": ["has_concept"],
            "pools": {
                "concept": [{"surface": "flu shots", "cui": "C0021403"}]
            },
            "templates": [
                {
                    "question": "any {concept}",
                    "lf": "λx.has_concept(x, {concept})",
                }
            ],
        }
        records = generate_corpus(load_spec(raw))
        assert len(records) == 1
        record = records[0]
        assert record["question"] == "any flu shots"
        assert record["lf"] == "λx.has_concept(x, C0021403)"
        assert record["entities"] == [
            {"start": 4, "end": 13, "kind": "concept", "value": "C0021403"}
        ]

    def test_exact_count_and_no_duplicates(self, toy_corpus):
        assert len(toy_corpus) == 30
        assert len({(r["question"], r["lf"]) for r in toy_corpus}) == 30
        assert len({r["id"] for r in toy_corpus}) == 30

    def test_ids_sequential(self, toy_corpus):
        assert [r["id"] for r in toy_corpus] == [
            f"toy-{i:04d}" for i in range(30)
        ]

    def test_every_template_represented(self, toy_spec, toy_corpus):
        preds = set()
        for record in toy_corpus:
            preds |= {
                n.pred
                for n in iter_nodes(parse_lf(record["lf"]))
                if hasattr(n, "pred")
            }
        assert preds == set(toy_spec.predicates)

    def test_byte_identical_per_seed(self, toy_corpus):
        again = generate_corpus(load_spec(toy_spec_dict()))
        assert write_jsonl_text(toy_corpus) == write_jsonl_text(again)

    def test_different_seed_differs(self, toy_corpus):
        raw = toy_spec_dict()
        raw["seed"] = 8
        other = generate_corpus(load_spec(raw))
        assert write_jsonl_text(toy_corpus) != write_jsonl_text(other)

    def test_count_beyond_capacity(self):
        raw = toy_spec_dict()
        raw["count"] = 10**6
        with pytest.raises(SpecExhausted):
            generate_corpus(load_spec(raw))

    def test_capacity_is_reachable(self, toy_spec):
        capacity = sum(
            template_capacity(t, toy_spec.pools)
            for t in toy_spec.templates
        )
        raw = toy_spec_dict()
        raw["count"] = capacity
        records = generate_corpus(load_spec(raw))
        assert len(records) == capacity
        keys = {(r["question"], r["lf"]) for r in records}
        assert len(keys) == capacity

    def test_records_survive_the_pipeline(self, toy_corpus):
        reg = default_registry()
        for record in toy_corpus:
            validate(parse_lf(record["lf"], reg), reg)
            pre = preprocess_record(record, reg)
            assert pre["tokens"]
        for record in toy_corpus:
            for entity in record["entities"]:
                assert 0 <= entity["start"] < entity["end"]
                assert entity["end"] <= len(record["question"])


class TestAuditStats:
    def test_empty(self):
        assert audit_stats([]) == CorpusStats(0, 0, 0, 0.0, 0.0)

    def test_single_preprocessed_example(self):
        record = {
            "tokens": ["did", "patient", "concept", "fall", "below", "measur"],
            "lf": (
                "delta(λx.has_concept(x, C0005903) ∧ less_than(x, '38C'))"
            ),
        }
        stats = audit_stats([record])
        assert stats.count == 1
        assert stats.unique_tokens == 6
        assert stats.mean_tokens_per_query == 6.0
        assert stats.mean_predicates_per_query == 3.0

    def test_lambda_not_counted_as_predicate(self):
        record = {
            "tokens": ["ani", "concept"],
            "lf": "λx.has_concept(x, C0021403)",
        }
        stats = audit_stats([record])
        assert stats.mean_predicates_per_query == 1.0
        assert stats.unique_predicates == 1

    def test_raw_records_are_tokenized(self, toy_corpus):
        reg = default_registry()
        stats_raw = audit_stats(toy_corpus)
        stats_pre = audit_stats(
            [preprocess_record(r, reg) for r in toy_corpus]
        )
        assert stats_raw == stats_pre
        assert stats_raw.count == 30
        assert stats_raw.unique_predicates == 5


class TestEntityRecombination:
    def test_exact_count_and_reproducible(self, toy_corpus):
        out1 = recombine(toy_corpus, "entity", 20, seed=3)
        out2 = recombine(toy_corpus, "entity", 20, seed=3)
        assert len(out1) == 20
        assert write_jsonl_text(out1) == write_jsonl_text(out2)

    def test_swap_changes_exactly_one_argument(self, toy_corpus):
        by_id = {r["id"]: r for r in toy_corpus}
        for new in recombine(toy_corpus, "entity", 25, seed=1):
            source = by_id[new["id"].rsplit(".", 1)[0]]
            old_lf = parse_lf(source["lf"])
            new_lf = parse_lf(new["lf"])
            old_nodes = list(iter_nodes(old_lf))
            new_nodes = list(iter_nodes(new_lf))
            assert len(old_nodes) == len(new_nodes)
            assert count_predicates(old_lf) == count_predicates(new_lf)

            def leaves(nodes):
                return [
                    n
                    for n in nodes
                    if not hasattr(n, "pred")
                    and not hasattr(n, "body")
                    and not hasattr(n, "left")
                ]

            diffs = [
                (a, b)
                for a, b in zip(leaves(old_nodes), leaves(new_nodes))
                if a != b
            ]
            assert len(diffs) == 1

    def test_concept_swap_example(self):
        records = [
            {
                "id": "a",
                "question": "any emergency visits",
                "entities": [
                    {
                        "start": 4,
                        "end": 20,
                        "kind": "concept",
                        "value": "C0234422",
                    }
                ],
                "lf": "λx.has_concept(x, C0234422)",
            },
            {
                "id": "b",
                "question": "how often low hemoglobin",
                "entities": [
                    {
                        "start": 10,
                        "end": 24,
                        "kind": "concept",
                        "value": "C0005903",
                    }
                ],
                "lf": "count(λx.has_concept(x, C0005903))",
            },
        ]
        out = recombine(records, "entity", 2, seed=0)
        by_source = {r["id"].split(".")[0]: r for r in out}
        from_a = by_source["a"]
        assert from_a["question"] == "any low hemoglobin"
        assert from_a["lf"] == "λx.has_concept(x, C0005903)"
        from_b = by_source["b"]
        assert from_b["question"] == "how often emergency visits"
        assert from_b["lf"] == "count(λx.has_concept(x, C0234422))"
        for new in out:
            lf = parse_lf(new["lf"])
            refs = [n for n in iter_nodes(lf) if isinstance(n, ConceptRef)]
            assert len(refs) == 1
            assert refs[0].cui == new["entities"][0]["value"]
            surface = new["question"][
                new["entities"][0]["start"] : new["entities"][0]["end"]
            ]
            assert surface in ("low hemoglobin", "emergency visits")

    def test_spans_still_slice_the_question(self, toy_corpus):
        for new in recombine(toy_corpus, "entity", 25, seed=2):
            for entity in new["entities"]:
                surface = new["question"][entity["start"] : entity["end"]]
                assert surface.strip() == surface
                assert surface

    def test_augmented_forms_validate(self, toy_corpus):
        reg = default_registry()
        for new in recombine(toy_corpus, "entity", 25, seed=4):
            validate(parse_lf(new["lf"], reg), reg)

    def test_no_duplicates_against_sources(self, toy_corpus):
        existing = {(r["question"], r["lf"]) for r in toy_corpus}
        out = recombine(toy_corpus, "entity", 25, seed=5)
        fresh = {(r["question"], r["lf"]) for r in out}
        assert len(fresh) == 25
        assert not (fresh & existing)

    def test_insufficient_material(self):
        records = [
            {
                "id": "a",
                "question": "any emergency visits",
                "entities": [
                    {
                        "start": 4,
                        "end": 20,
                        "kind": "concept",
                        "value": "C0234422",
                    }
                ],
                "lf": "λx.has_concept(x, C0234422)",
            }
        ]
        with pytest.raises(InsufficientMaterial):
            recombine(records, "entity", 1, seed=0)

    def test_unknown_strategy(self, toy_corpus):
        with pytest.raises(DataError):
            recombine(toy_corpus, "shuffle", 1, seed=0)


class TestPhraseRecombination:
    def synonyms(self):
        return [
            SynonymRule("count", "how many times", "how often"),
            SynonymRule("delta", "fall below", "drop under"),
        ]

    def test_requires_table(self, toy_corpus):
        with pytest.raises(DataError):
            recombine(toy_corpus, "phrase", 1, seed=0)

    def test_lf_unchanged_and_phrase_swapped(self, toy_corpus):
        by_id = {r["id"]: r for r in toy_corpus}
        out = recombine(
            toy_corpus, "phrase", 15, seed=0, synonyms=self.synonyms()
        )
        assert len(out) == 15
        for new in out:
            source = by_id[new["id"].rsplit(".", 1)[0]]
            assert new["lf"] == source["lf"]
            assert new["question"] != source["question"]
            assert (
                "how often" in new["question"]
                or "drop under" in new["question"]
            )

    def test_spans_shifted(self, toy_corpus):
        out = recombine(
            toy_corpus, "phrase", 15, seed=1, synonyms=self.synonyms()
        )
        by_id = {r["id"]: r for r in toy_corpus}
        for new in out:
            source = by_id[new["id"].rsplit(".", 1)[0]]
            old_surfaces = [
                source["question"][e["start"] : e["end"]]
                for e in source["entities"]
            ]
            new_surfaces = [
                new["question"][e["start"] : e["end"]]
                for e in new["entities"]
            ]
            assert new_surfaces == old_surfaces

    def test_rule_gated_by_predicate(self, toy_corpus):
        rules = [SynonymRule("sum", "did", "was")]
        with pytest.raises(InsufficientMaterial):
            recombine(toy_corpus, "phrase", 1, seed=0, synonyms=rules)

    def test_reproducible(self, toy_corpus):
        out1 = recombine(
            toy_corpus, "phrase", 10, seed=9, synonyms=self.synonyms()
        )
        out2 = recombine(
            toy_corpus, "phrase", 10, seed=9, synonyms=self.synonyms()
        )
        assert write_jsonl_text(out1) == write_jsonl_text(out2)


class TestConcatRecombination:
    @pytest.fixture
    def preprocessed(self, toy_corpus):
        reg = default_registry()
        return [preprocess_record(r, reg) for r in toy_corpus]

    def test_requires_preprocessed_records(self, toy_corpus):
        with pytest.raises(DataError):
            recombine(toy_corpus, "concat", 1, seed=0)

    def test_joins_with_separator(self, preprocessed):
        out = recombine(preprocessed, "concat", 12, seed=0)
        assert len(out) == 12
        by_id = {r["id"]: r for r in preprocessed}
        for new in out:
            assert new["concat"] is True
            a, b = new["sources"]
            assert new["id"] == f"{a}+{b}"
            sep = new["tokens"].index("<sep>")
            assert new["tokens"][:sep] == list(by_id[a]["tokens"])
            assert new["tokens"][sep + 1 :] == list(by_id[b]["tokens"])
            assert new["target_tokens"].count("<sep>") == 1

    def test_target_side_round_trips(self, preprocessed):
        out = recombine(preprocessed, "concat", 8, seed=1)
        by_id = {r["id"]: r for r in preprocessed}
        for new in out:
            cut = new["target_tokens"].index("<sep>")
            left = " ".join(new["target_tokens"][:cut])
            right = " ".join(new["target_tokens"][cut + 1 :])
            a, b = new["sources"]
            assert parse_lf(left, allow_placeholders=True) == parse_lf(
                by_id[a]["lf_abstract"], allow_placeholders=True
            )
            assert parse_lf(right, allow_placeholders=True) == parse_lf(
                by_id[b]["lf_abstract"], allow_placeholders=True
            )

    def test_capacity_bound(self, preprocessed):
        few = preprocessed[:3]
        assert len(recombine(few, "concat", 6, seed=0)) == 6
        with pytest.raises(InsufficientMaterial):
            recombine(few, "concat", 7, seed=0)

    def test_reproducible(self, preprocessed):
        out1 = recombine(preprocessed, "concat", 10, seed=2)
        out2 = recombine(preprocessed, "concat", 10, seed=2)
        assert write_jsonl_text(out1) == write_jsonl_text(out2)


class TestLexiconFromSpec:
    def test_rows(self, toy_spec):
        assert lexicon_rows_from_spec(toy_spec) == [
            ("concept", "has_concept", "concept"),
            ("fall below measur", "delta", "-"),
            ("fall below measur", "less_than", "measurement"),
            ("how mani time", "count", "-"),
            ("temporal_ref", "time_within", "temporal_ref"),
        ]

    def test_defaults_require_the_predicates(self, toy_spec):
        raw = toy_spec_dict()
        raw["predicates"] = ["has_concept", "count"]
        raw["pools"].pop("measurement")
        raw["templates"] = [
            {
                "question": "how many times did {person} have {concept}",
                "lf": "count(λx.has_concept(x, {concept}))",
                "triggers": [
                    {"phrase": "how many times", "predicate": "count"}
                ],
            }
        ]
        rows = lexicon_rows_from_spec(load_spec(raw))
        assert ("temporal_ref", "time_within", "temporal_ref") not in rows
        assert ("concept", "has_concept", "concept") in rows

    def test_matches_generated_tokens(self, toy_spec, toy_corpus):
        reg = default_registry()
        lexicon = lexicon_from_spec(toy_spec)
        for record in toy_corpus[:10]:
            pre = preprocess_record(record, reg)
            fired = lexicon.match(tuple(pre["tokens"]))
            assert fired
            gold_preds = {
                n.pred
                for n in iter_nodes(parse_lf(record["lf"]))
                if hasattr(n, "pred")
            }
            assert {f.entry.predicate for f in fired} == gold_preds


class TestLoadSynonyms:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text(
            "# comment\n"
            "count\thow many times\thow often\n"
            "delta\tfall below\tdrop under\n",
            encoding="utf-8",
        )
        rules = load_synonyms(str(path))
        assert rules == [
            SynonymRule("count", "how many times", "how often"),
            SynonymRule("delta", "fall below", "drop under"),
        ]

    def test_bad_column_count(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text("count\thow many times\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_synonyms(str(path))


class TestRandomLf:
    def test_valid_and_deterministic(self):
        reg = default_registry()
        lfs1 = [random_lf(random.Random(i)) for i in range(50)]
        lfs2 = [random_lf(random.Random(i)) for i in range(50)]
        assert lfs1 == lfs2
        for lf in lfs1:
            validate(lf, reg)
