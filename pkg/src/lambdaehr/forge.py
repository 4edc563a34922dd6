"""Synthetic data: random logical forms, template corpora, augmentation.

Nothing here imitates real clinical language; the generator exists so the
toolkit can be exercised and evaluated without private clinical data.

A corpus spec is a JSON document: a name, a target count, a seed, a
predicate inventory, value pools, and weighted question templates. A
template pairs a question pattern containing `{slot}` markers with a
logical-form skeleton over the same slots, plus the trigger phrases that
tie its surface wording to its predicates (the raw material for deriving
a lexicon). Slot names start with their kind (person, concept,
measurement, temporal_ref), optionally suffixed `_<tag>` to distinguish
two slots of one kind.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import random
import re
from dataclasses import dataclass, field
from importlib import resources

from lambdaehr.dataset import dumps_record
from lambdaehr.errors import (
    DataError,
    InsufficientMaterial,
    SpecExhausted,
)
from lambdaehr.lf import (
    And,
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    LogicalForm,
    TimeFrame,
    Var,
    count_predicates,
    iter_nodes,
    lf_surface_tokens,
    parse_lf,
    predicate_names,
    print_lf,
    validate,
)
from lambdaehr.lexicon import Lexicon, LexiconEntry
from lambdaehr.preprocess import (
    KIND_TO_TOKEN,
    abstract_question,
    normalize,
    preprocess_record,
    spans_from_record,
)
from lambdaehr.registry import (
    CUI,
    FORM,
    LITERAL,
    VAR,
    PredicateRegistry,
    default_registry,
)

_LITERAL_WORDS = (
    "last night", "yesterday", "this morning", "38C", "39C", "120mmHg",
    "two days ago", "on admission", "45kg", "7mmol", "overnight",
    "the past week", "98F", "60bpm", "5mg",
)


def random_cui(rng: random.Random) -> str:
    return f"C{rng.randrange(10**7):07d}"


def random_lf(
    rng: random.Random,
    registry: PredicateRegistry | None = None,
    *,
    max_conjuncts: int = 3,
    max_wrap_depth: int = 2,
    allow_time_frames: bool = True,
    var_names: tuple[str, ...] = ("x",),
) -> LogicalForm:
    """One random valid LogicalForm: a lambda core of 1..max_conjuncts
    body conjuncts, wrapped by 0..max_wrap_depth operator applications.
    """
    if registry is None:
        registry = default_registry()
    body_preds = registry.body_predicates()
    wrappers = registry.wrapper_predicates()
    tf_tokens = sorted(registry.time_frame_tokens)
    var = rng.choice(var_names)

    def make_arg(kind: str):
        if kind == VAR:
            return Var(var)
        if kind == CUI:
            return ConceptRef(random_cui(rng))
        if kind == LITERAL:
            return Literal(rng.choice(_LITERAL_WORDS))
        raise ValueError(f"cannot generate a bare {kind} argument")

    conjuncts = []
    for _ in range(rng.randint(1, max_conjuncts)):
        pred = rng.choice(body_preds)
        args = [make_arg(k) for k in pred.arg_kinds]
        if (
            allow_time_frames
            and pred.allows_time_frame
            and tf_tokens
            and rng.random() < 0.3
        ):
            args.append(TimeFrame(rng.choice(tf_tokens)))
        conjuncts.append(Apply(pred.name, tuple(args)))
    body = conjuncts[0]
    for conj in conjuncts[1:]:
        body = And(body, conj)
    form: LogicalForm = Lambda(var, body)

    for _ in range(rng.randint(0, max_wrap_depth)):
        if not wrappers:
            break
        wrapper = rng.choice(wrappers)
        assert wrapper.arg_kinds == (FORM,)
        form = Apply(wrapper.name, (form,))
    return form


# ---------------------------------------------------------------------------
# Corpus specs

SLOT_KINDS = ("person", "concept", "measurement", "temporal_ref")
_SLOT_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")
SEP_TOKEN = "<sep>"


def slot_kind(name: str) -> str:
    for kind in ("temporal_ref", "measurement", "concept", "person"):
        if name == kind or name.startswith(kind + "_"):
            return kind
    raise DataError(f"slot {name!r} does not start with a kind")


@dataclass(frozen=True)
class Trigger:
    """A surface phrase tied to one predicate of the template's form.

    `consumes` names the placeholder kind the predicate's value argument
    comes from, or "-" for wrapper predicates.
    """

    phrase: str
    predicate: str
    consumes: str = "-"


@dataclass(frozen=True)
class Template:
    question: str
    lf: str
    weight: float = 1.0
    triggers: tuple[Trigger, ...] = ()

    @property
    def question_slots(self) -> tuple[str, ...]:
        return tuple(_SLOT_RE.findall(self.question))

    @property
    def lf_slots(self) -> tuple[str, ...]:
        return tuple(_SLOT_RE.findall(self.lf))


@dataclass
class CorpusSpec:
    name: str
    count: int
    seed: int
    predicates: tuple[str, ...]
    pools: dict[str, list]
    templates: list[Template]
    registry_name: str | None = None
    path: str | None = field(default=None, compare=False)


def _pool_surface(kind: str, item) -> str:
    return item["surface"] if kind == "concept" else item


def _pool_value(kind: str, item) -> str:
    if kind == "concept":
        return item["cui"]
    return item


def _validate_pools(pools: dict[str, list]) -> None:
    for kind, items in pools.items():
        if kind not in SLOT_KINDS:
            raise DataError(f"unknown pool kind {kind!r}")
        if not items:
            raise DataError(f"pool {kind!r} is empty")
        for item in items:
            if kind == "concept":
                if (
                    not isinstance(item, dict)
                    or set(item) != {"surface", "cui"}
                ):
                    raise DataError(
                        "concept pool items need surface and cui fields"
                    )
                surface, value = item["surface"], item["cui"]
                if not value or not all(
                    c.isalnum() or c == "_" for c in value
                ):
                    raise DataError(f"bad concept identifier {value!r}")
            else:
                if not isinstance(item, str):
                    raise DataError(f"{kind} pool items must be strings")
                surface = item
            if not surface or "{" in surface or "}" in surface:
                raise DataError(f"bad pool surface {surface!r}")
            if kind in ("measurement", "temporal_ref") and "'" in surface:
                raise DataError(
                    f"{kind} value {surface!r} may not contain a quote"
                )


def _dummy_assignment(
    template: Template, pools: dict[str, list]
) -> dict[str, object]:
    assignment: dict[str, object] = {}
    used: dict[str, int] = {}
    for name in dict.fromkeys(template.question_slots):
        kind = slot_kind(name)
        idx = used.get(kind, 0)
        pool = pools.get(kind, [])
        if idx >= len(pool):
            raise DataError(
                f"pool {kind!r} too small for template "
                f"{template.question!r}"
            )
        assignment[name] = pool[idx]
        used[kind] = idx + 1
    return assignment


def _fill_template(
    template: Template, assignment: dict[str, object]
) -> dict:
    """One raw record (no id) from a template and a slot assignment."""
    question_parts: list[str] = []
    entities: list[dict] = []
    pos = 0
    offset = 0
    for m in _SLOT_RE.finditer(template.question):
        name = m.group(1)
        kind = slot_kind(name)
        item = assignment[name]
        surface = _pool_surface(kind, item)
        question_parts.append(template.question[pos : m.start()])
        offset += m.start() - pos
        entities.append(
            {
                "start": offset,
                "end": offset + len(surface),
                "kind": kind,
                "value": _pool_value(kind, item),
            }
        )
        question_parts.append(surface)
        offset += len(surface)
        pos = m.end()
    question_parts.append(template.question[pos:])
    question = "".join(question_parts)

    def lf_fill(m: re.Match) -> str:
        name = m.group(1)
        kind = slot_kind(name)
        if kind == "person":
            raise DataError("person slots cannot appear in a form")
        return _pool_value(kind, assignment[name])

    lf_text = _SLOT_RE.sub(lf_fill, template.lf)
    return {"question": question, "entities": entities, "lf": lf_text}


def load_spec(
    source, registry: PredicateRegistry | None = None
) -> CorpusSpec:
    """Read and validate a corpus spec from a JSON file path or dict."""
    if isinstance(source, dict):
        raw = source
        path = None
    else:
        path = str(source)
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    try:
        name = raw["name"]
        count = raw["count"]
        seed = raw["seed"]
        predicates = tuple(raw["predicates"])
        pools = raw["pools"]
        template_rows = raw["templates"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"corpus spec is missing field: {exc}") from None
    if not isinstance(count, int) or count < 1:
        raise DataError("count must be a positive integer")
    if not template_rows:
        raise DataError("spec has no templates")
    _validate_pools(pools)

    if registry is None:
        registry_name = raw.get("registry")
        registry = (
            resolve_registry(registry_name)
            if registry_name
            else default_registry()
        )
    for pred in predicates:
        if pred not in registry:
            raise DataError(f"spec predicate {pred!r} not in registry")

    templates = []
    for row in template_rows:
        triggers = tuple(
            Trigger(
                t["phrase"], t["predicate"], t.get("consumes", "-")
            )
            for t in row.get("triggers", [])
        )
        template = Template(
            question=row["question"],
            lf=row["lf"],
            weight=float(row.get("weight", 1.0)),
            triggers=triggers,
        )
        if template.weight <= 0:
            raise DataError("template weights must be positive")
        question_slots = set(template.question_slots)
        for slot in template.lf_slots:
            if slot not in question_slots:
                raise DataError(
                    f"form slot {{{slot}}} missing from question "
                    f"{template.question!r}"
                )
        for trigger in triggers:
            if trigger.phrase not in template.question:
                raise DataError(
                    f"trigger phrase {trigger.phrase!r} not in question "
                    f"{template.question!r}"
                )
            if trigger.predicate not in predicates:
                raise DataError(
                    f"trigger predicate {trigger.predicate!r} not in "
                    "the spec inventory"
                )
        templates.append(template)

    spec = CorpusSpec(
        name=name,
        count=count,
        seed=seed,
        predicates=predicates,
        pools=pools,
        templates=templates,
        registry_name=raw.get("registry"),
        path=path,
    )

    used = set()
    for template in spec.templates:
        record = _fill_template(
            template, _dummy_assignment(template, pools)
        )
        lf = parse_lf(record["lf"], registry)
        validate(lf, registry)
        used |= predicate_names(lf)
        preprocess_record(record | {"id": "spec-check"}, registry)
    missing = set(predicates) - used
    if missing:
        raise DataError(
            f"inventory predicates never used by any template: "
            f"{sorted(missing)}"
        )
    extra = used - set(predicates)
    if extra:
        raise DataError(
            f"templates use predicates outside the inventory: "
            f"{sorted(extra)}"
        )
    return spec


def resolve_registry(name: str) -> PredicateRegistry:
    """A registry from a packaged data file name or a filesystem path."""
    if os.sep not in name:
        resource = resources.files("lambdaehr.data").joinpath(name)
        if resource.is_file():
            with resources.as_file(resource) as real_path:
                return PredicateRegistry.from_file(str(real_path))
    return PredicateRegistry.from_file(name)


def packaged_spec_path(name: str) -> str:
    """Filesystem path of a packaged corpus spec such as fhir_like.json."""
    resource = resources.files("lambdaehr.data").joinpath(name)
    if not resource.is_file():
        raise DataError(f"no packaged data file named {name!r}")
    with resources.as_file(resource) as real_path:
        return str(real_path)


# ---------------------------------------------------------------------------
# Corpus generation


def _template_slot_plan(
    template: Template,
) -> list[tuple[str, list[str]]]:
    by_kind: dict[str, list[str]] = {}
    for name in dict.fromkeys(template.question_slots):
        by_kind.setdefault(slot_kind(name), []).append(name)
    return sorted(by_kind.items())


def template_capacity(template: Template, pools: dict[str, list]) -> int:
    total = 1
    for kind, names in _template_slot_plan(template):
        n = len(pools.get(kind, []))
        m = len(names)
        if n < m:
            return 0
        total *= math.perm(n, m)
    return total


def _sample_assignment(
    template: Template, pools: dict[str, list], rng: random.Random
) -> dict[str, object]:
    assignment: dict[str, object] = {}
    for kind, names in _template_slot_plan(template):
        items = rng.sample(pools[kind], len(names))
        for name, item in zip(names, items):
            assignment[name] = item
    return assignment


def _enumerate_assignments(template: Template, pools: dict[str, list]):
    plan = _template_slot_plan(template)
    index_iters = [
        itertools.permutations(range(len(pools[kind])), len(names))
        for kind, names in plan
    ]
    for combo in itertools.product(*index_iters):
        assignment: dict[str, object] = {}
        for (kind, names), indices in zip(plan, combo):
            for name, idx in zip(names, indices):
                assignment[name] = pools[kind][idx]
        yield assignment


def generate_corpus(
    spec: CorpusSpec, registry: PredicateRegistry | None = None
) -> list[dict]:
    """Exactly spec.count distinct records, deterministic per seed.

    Every template yields at least one record (when count allows), the
    rest are drawn by template weight. No two records share the same
    (question, form) pair.
    """
    reg = registry if registry is not None else (
        resolve_registry(spec.registry_name)
        if spec.registry_name
        else default_registry()
    )
    capacity = sum(
        template_capacity(t, spec.pools) for t in spec.templates
    )
    if spec.count > capacity:
        raise SpecExhausted(
            f"spec {spec.name!r} can yield at most {capacity} distinct "
            f"examples, {spec.count} requested"
        )
    rng = random.Random(spec.seed)
    records: list[dict] = []
    seen: set[tuple[str, str]] = set()

    def try_emit(template: Template, assignment) -> bool:
        record = _fill_template(template, assignment)
        record["lf"] = print_lf(parse_lf(record["lf"], reg))
        key = (record["question"], record["lf"])
        if key in seen:
            return False
        seen.add(key)
        records.append(record)
        return True

    for template in spec.templates:
        if len(records) >= spec.count:
            break
        for _ in range(64):
            if try_emit(
                template, _sample_assignment(template, spec.pools, rng)
            ):
                break

    weights = [t.weight for t in spec.templates]
    stall = 0
    stall_limit = max(1000, 20 * spec.count)
    while len(records) < spec.count and stall < stall_limit:
        template = rng.choices(spec.templates, weights=weights, k=1)[0]
        if try_emit(
            template, _sample_assignment(template, spec.pools, rng)
        ):
            stall = 0
        else:
            stall += 1
    if len(records) < spec.count:
        for template in spec.templates:
            for assignment in _enumerate_assignments(
                template, spec.pools
            ):
                if len(records) >= spec.count:
                    break
                try_emit(template, assignment)
            if len(records) >= spec.count:
                break
    if len(records) < spec.count:
        raise SpecExhausted(
            f"spec {spec.name!r} yielded only {len(records)} distinct "
            f"examples of {spec.count} requested"
        )

    rng.shuffle(records)
    width = max(4, len(str(spec.count - 1)))
    for i, record in enumerate(records):
        record["id"] = f"{spec.name}-{i:0{width}d}"
    return [
        {
            "id": r["id"],
            "question": r["question"],
            "entities": r["entities"],
            "lf": r["lf"],
        }
        for r in records
    ]


# ---------------------------------------------------------------------------
# Stats auditor


@dataclass(frozen=True)
class CorpusStats:
    count: int
    unique_tokens: int
    unique_predicates: int
    mean_tokens_per_query: float
    mean_predicates_per_query: float


def audit_stats(
    records: list[dict], registry: PredicateRegistry | None = None
) -> CorpusStats:
    """Token stats over PP token sequences, predicate stats over forms.

    Accepts raw records (question + entities) and preprocessed ones
    (which already carry their tokens). λ is not a predicate; predicate
    counts are occurrences of predicate applications.
    """
    reg = registry if registry is not None else default_registry()
    if not records:
        return CorpusStats(0, 0, 0, 0.0, 0.0)
    vocabulary: set[str] = set()
    preds: set[str] = set()
    token_total = 0
    pred_total = 0
    for record in records:
        if "tokens" in record:
            tokens = list(record["tokens"])
        else:
            tokens = abstract_question(
                record["question"], spans_from_record(record)
            ).tokens
        vocabulary.update(tokens)
        token_total += len(tokens)
        lf = parse_lf(record["lf"], reg)
        preds.update(predicate_names(lf))
        pred_total += count_predicates(lf)
    n = len(records)
    return CorpusStats(
        count=n,
        unique_tokens=len(vocabulary),
        unique_predicates=len(preds),
        mean_tokens_per_query=token_total / n,
        mean_predicates_per_query=pred_total / n,
    )


# ---------------------------------------------------------------------------
# Recombination augmentation


@dataclass(frozen=True)
class SynonymRule:
    predicate: str
    phrase: str
    synonym: str


def load_synonyms(path: str) -> list[SynonymRule]:
    """TSV `predicate<TAB>phrase<TAB>synonym`; `#` comments."""
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated columns"
                )
            predicate, phrase, synonym = parts
            if not phrase or not synonym:
                raise DataError(f"{path}:{lineno}: empty phrase")
            rules.append(SynonymRule(predicate, phrase, synonym))
    return rules


def packaged_synonyms() -> list[SynonymRule]:
    resource = resources.files("lambdaehr.data").joinpath("synonyms.tsv")
    with resources.as_file(resource) as real_path:
        return load_synonyms(str(real_path))


def _replace_once(
    node: LogicalForm, old: LogicalForm, new: LogicalForm
) -> tuple[LogicalForm, bool]:
    if node == old:
        return new, True
    if isinstance(node, Lambda):
        body, done = _replace_once(node.body, old, new)
        return (Lambda(node.var, body), done)
    if isinstance(node, And):
        left, done = _replace_once(node.left, old, new)
        if done:
            return And(left, node.right), True
        right, done = _replace_once(node.right, old, new)
        return And(node.left, right), done
    if isinstance(node, Apply):
        args = list(node.args)
        for i, arg in enumerate(args):
            replaced, done = _replace_once(arg, old, new)
            if done:
                args[i] = replaced
                return Apply(node.pred, tuple(args)), True
        return node, False
    return node, False


def _entity_moves(records, registry):
    """All legal single-entity swaps: (record index, entity index,
    replacement item). Only entities whose value occurs exactly once in
    the record's entity list and exactly once in its form may move,
    so a swap touches exactly one argument.
    """
    pools: dict[str, list] = {"concept": [], "measurement": [],
                              "temporal_ref": []}
    pool_seen: dict[str, set] = {k: set() for k in pools}
    parsed = []
    for record in records:
        lf = parse_lf(record["lf"], registry)
        parsed.append(lf)
        for entity in record["entities"]:
            kind = entity["kind"]
            if kind == "person":
                continue
            surface = record["question"][entity["start"] : entity["end"]]
            key = (surface, entity["value"])
            if key not in pool_seen[kind]:
                pool_seen[kind].add(key)
                pools[kind].append(key)
    moves = []
    for ri, (record, lf) in enumerate(zip(records, parsed)):
        value_counts: dict[str, int] = {}
        for entity in record["entities"]:
            value_counts[entity["value"]] = (
                value_counts.get(entity["value"], 0) + 1
            )
        for ei, entity in enumerate(record["entities"]):
            kind = entity["kind"]
            if kind == "person":
                continue
            value = entity["value"]
            if value_counts[value] != 1:
                continue
            if kind == "concept":
                occurrences = sum(
                    1
                    for n in iter_nodes(lf)
                    if isinstance(n, ConceptRef) and n.cui == value
                )
            else:
                occurrences = sum(
                    1
                    for n in iter_nodes(lf)
                    if isinstance(n, Literal) and n.value == value
                )
            if occurrences != 1:
                continue
            for item in pools[kind]:
                if item[1] != value:
                    moves.append((ri, ei, item))
    return moves, parsed


def _apply_entity_move(record, lf, entity_idx, item):
    surface, value = item
    entity = record["entities"][entity_idx]
    start, end = entity["start"], entity["end"]
    question = record["question"]
    new_question = question[:start] + surface + question[end:]
    delta = len(surface) - (end - start)
    new_entities = []
    for i, e in enumerate(record["entities"]):
        e = dict(e)
        if i == entity_idx:
            e["end"] = e["start"] + len(surface)
            e["value"] = value
        elif e["start"] >= end:
            e["start"] += delta
            e["end"] += delta
        new_entities.append(e)
    kind = entity["kind"]
    if kind == "concept":
        old_node: LogicalForm = ConceptRef(entity["value"])
        new_node: LogicalForm = ConceptRef(value)
    else:
        old_node = Literal(entity["value"])
        new_node = Literal(value)
    new_lf, done = _replace_once(lf, old_node, new_node)
    assert done
    return {
        "question": new_question,
        "entities": new_entities,
        "lf": print_lf(new_lf),
    }


def _phrase_moves(records, rules, registry):
    """(record index, rule, character offset) for every occurrence of a
    rule's phrase that lies outside entity spans, in a record whose form
    uses the rule's predicate.
    """
    moves = []
    for ri, record in enumerate(records):
        lowered = record["question"].lower()
        spans = [
            (e["start"], e["end"]) for e in record["entities"]
        ]
        preds = None
        for rule in rules:
            at = 0
            while True:
                at = lowered.find(rule.phrase, at)
                if at < 0:
                    break
                end = at + len(rule.phrase)
                overlaps = any(
                    at < s_end and s_start < end for s_start, s_end in spans
                )
                if not overlaps:
                    if preds is None:
                        preds = predicate_names(
                            parse_lf(record["lf"], registry)
                        )
                    if rule.predicate in preds:
                        moves.append((ri, rule, at))
                at = end
    return moves


def _apply_phrase_move(record, rule, at):
    question = record["question"]
    end = at + len(rule.phrase)
    new_question = question[:at] + rule.synonym + question[end:]
    delta = len(rule.synonym) - len(rule.phrase)
    new_entities = []
    for e in record["entities"]:
        e = dict(e)
        if e["start"] >= end:
            e["start"] += delta
            e["end"] += delta
        new_entities.append(e)
    return {
        "question": new_question,
        "entities": new_entities,
        "lf": record["lf"],
    }


def recombine(
    records: list[dict],
    strategy: str,
    count: int,
    seed: int,
    *,
    synonyms: list[SynonymRule] | None = None,
    registry: PredicateRegistry | None = None,
) -> list[dict]:
    """Exactly `count` new examples by one of three strategies.

    entity — swap one entity's value consistently in the question, the
    entity list, and the form, drawing replacements from the values seen
    elsewhere in the dataset. phrase — rewrite one trigger phrase to a
    synonym tied to the same predicate; the form is untouched. concat —
    join two preprocessed examples' PP token sequences and their target
    token sequences with the separator token; the result trains the
    direct decoder only and is marked with "concat": true.
    """
    if count < 1:
        raise DataError("count must be >= 1")
    reg = registry if registry is not None else default_registry()
    rng = random.Random(seed)
    if strategy == "entity":
        moves, parsed = _entity_moves(records, reg)
        tag = "e"
    elif strategy == "phrase":
        if synonyms is None:
            raise DataError(
                "phrase recombination needs a synonym table"
            )
        moves = _phrase_moves(records, synonyms, reg)
        parsed = None
        tag = "p"
    elif strategy == "concat":
        return _recombine_concat(records, count, rng)
    else:
        raise DataError(f"unknown strategy {strategy!r}")

    existing = {(r["question"], r["lf"]) for r in records}
    out: list[dict] = []
    seen: set[tuple[str, str]] = set()
    order = list(range(len(moves)))
    rng.shuffle(order)
    per_source: dict[str, int] = {}
    for idx in order:
        if len(out) >= count:
            break
        move = moves[idx]
        ri = move[0]
        if strategy == "entity":
            candidate = _apply_entity_move(
                records[ri], parsed[ri], move[1], move[2]
            )
        else:
            candidate = _apply_phrase_move(records[ri], move[1], move[2])
        key = (candidate["question"], candidate["lf"])
        if key in existing or key in seen:
            continue
        lf = parse_lf(candidate["lf"], reg)
        validate(lf, reg)
        seen.add(key)
        src_id = records[ri]["id"]
        n = per_source.get(src_id, 0)
        per_source[src_id] = n + 1
        out.append(
            {
                "id": f"{src_id}.{tag}{n}",
                "question": candidate["question"],
                "entities": candidate["entities"],
                "lf": candidate["lf"],
            }
        )
    if len(out) < count:
        raise InsufficientMaterial(
            f"{strategy} recombination can produce only {len(out)} "
            f"distinct new examples of {count} requested"
        )
    return out


def _recombine_concat(
    records: list[dict], count: int, rng: random.Random
) -> list[dict]:
    for record in records:
        if "tokens" not in record or "lf_abstract" not in record:
            raise DataError(
                "concat recombination needs preprocessed records"
            )
    n = len(records)
    capacity = n * (n - 1)
    if count > capacity:
        raise InsufficientMaterial(
            f"concat over {n} examples can produce only {capacity} "
            f"pairs, {count} requested"
        )
    pair_indices = rng.sample(range(capacity), count)
    out = []
    for raw in pair_indices:
        i, j = divmod(raw, n - 1)
        if j >= i:
            j += 1
        a, b = records[i], records[j]
        target_a = lf_surface_tokens(parse_lf(a["lf_abstract"]))
        target_b = lf_surface_tokens(parse_lf(b["lf_abstract"]))
        out.append(
            {
                "id": f"{a['id']}+{b['id']}",
                "concat": True,
                "sources": [a["id"], b["id"]],
                "tokens": list(a["tokens"]) + [SEP_TOKEN] + list(b["tokens"]),
                "target_tokens": target_a + [SEP_TOKEN] + target_b,
            }
        )
    return out


# ---------------------------------------------------------------------------
# Lexicon derivation


def lexicon_rows_from_spec(spec: CorpusSpec) -> list[tuple[str, str, str]]:
    """(phrase in PP form, predicate, arg template) rows implied by the
    spec's triggers plus the placeholder-token defaults.
    """
    rows: list[tuple[str, str, str]] = []
    seen = set()

    def add(phrase_tokens, predicate, template):
        row = (" ".join(phrase_tokens), predicate, template)
        if row not in seen:
            seen.add(row)
            rows.append(row)

    if "has_concept" in spec.predicates:
        add(("concept",), "has_concept", "concept")
    if "time_within" in spec.predicates:
        add(("temporal_ref",), "time_within", "temporal_ref")
    for template in spec.templates:
        for trigger in template.triggers:
            surface = _SLOT_RE.sub(
                lambda m: f" {KIND_TO_TOKEN[slot_kind(m.group(1))]} ",
                trigger.phrase,
            )
            tokens = tuple(normalize(surface))
            if not tokens:
                raise DataError(
                    f"trigger phrase {trigger.phrase!r} normalizes to "
                    "nothing"
                )
            add(tokens, trigger.predicate, trigger.consumes)
    return sorted(rows)


def lexicon_from_spec(
    spec: CorpusSpec, registry: PredicateRegistry | None = None
) -> Lexicon:
    entries = [
        LexiconEntry(tuple(phrase.split()), predicate, template)
        for phrase, predicate, template in lexicon_rows_from_spec(spec)
    ]
    return Lexicon(entries, registry)


def write_jsonl_text(records: list[dict]) -> str:
    """The byte content write_jsonl would produce, for determinism checks."""
    return "".join(dumps_record(r) + "\n" for r in records)
