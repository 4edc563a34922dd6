"""Question preprocessing: entity abstraction and token normalization.

A raw question with pre-annotated entity spans becomes, in order:

  ES text  — entities substituted: person spans by `patient`, concepts by
             `concept(<cui>)`, measurements and temporal references by
             `measurement('<v>')` / `temporal_ref('<v>')`.
  PP tokens — lowercased, payloads collapsed to the bare placeholder
             tokens, punctuation stripped, remaining words Porter-stemmed.

The four placeholder tokens themselves are never stemmed; `measurement`
collapses straight to the canonical PP token `measur` so placeholders
survive repeated normalization byte-identically.

The gold logical form goes through the matching entity abstraction:
concept identifiers and literal values that correspond to question
entities are replaced by abstract argument tokens (`@concept`,
`'@measurement'`, `'@temporal_ref'`) so models never see raw values.
Re-attachment restores concrete values by entity order per kind.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import asdict, dataclass

from lambdaehr.errors import (
    DataError,
    EntityAlignmentError,
    OverlappingSpans,
    SpanOutOfRange,
)
from lambdaehr.lf import (
    And,
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    LogicalForm,
    exact_match,
    parse_lf,
    print_lf,
    strip_time_frames,
)
from lambdaehr.porter import porter_stem
from lambdaehr.registry import PredicateRegistry

ENTITY_KINDS = ("person", "concept", "measurement", "temporal_ref")

# kind -> canonical PP placeholder token
KIND_TO_TOKEN = {
    "person": "patient",
    "concept": "concept",
    "measurement": "measur",
    "temporal_ref": "temporal_ref",
}

PLACEHOLDER_TOKENS = frozenset(KIND_TO_TOKEN.values())

# abstract LF argument tokens, one per value-carrying entity kind
ABSTRACT_CONCEPT = "@concept"
ABSTRACT_MEASUREMENT = "@measurement"
ABSTRACT_TEMPORAL_REF = "@temporal_ref"

_PAYLOAD_PATTERNS = (
    (re.compile(r"concept\([^)]*\)"), " concept "),
    (re.compile(r"measurement\('[^']*'\)"), " measur "),
    (re.compile(r"temporal_ref\('[^']*'\)"), " temporal_ref "),
)


@dataclass(frozen=True)
class EntitySpan:
    """A pre-annotated entity: character offsets (end-exclusive), kind,
    and value (a CUI for concepts, the verbatim string otherwise).
    """

    start: int
    end: int
    kind: str
    value: str

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise DataError(f"unknown entity kind {self.kind!r}")
        if self.start < 0 or self.end <= self.start:
            raise SpanOutOfRange(
                f"bad span [{self.start}, {self.end})"
            )


@dataclass(frozen=True)
class AbstractedQuestion:
    original: str
    es_text: str
    tokens: tuple[str, ...]
    entities: tuple[EntitySpan, ...]


def _es_form(span: EntitySpan) -> str:
    if span.kind == "person":
        return "patient"
    if span.kind == "concept":
        return f"concept({span.value})"
    if span.kind == "measurement":
        return f"measurement('{span.value}')"
    return f"temporal_ref('{span.value}')"


def abstract_entities(
    question: str, spans: list[EntitySpan] | tuple[EntitySpan, ...]
) -> tuple[str, tuple[EntitySpan, ...]]:
    """Replace each span by its kind form, returning the ES text and the
    spans sorted by start offset. A space is inserted where a replacement
    would otherwise fuse with adjacent text.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for span in ordered:
        if span.end > len(question):
            raise SpanOutOfRange(
                f"span [{span.start}, {span.end}) exceeds question "
                f"length {len(question)}"
            )
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise OverlappingSpans(
                f"spans [{a.start}, {a.end}) and [{b.start}, {b.end}) overlap"
            )
    parts = []
    cursor = 0
    for span in ordered:
        parts.append(question[cursor : span.start])
        replacement = _es_form(span)
        if span.start > 0 and not question[span.start - 1].isspace():
            replacement = " " + replacement
        if span.end < len(question) and not question[span.end].isspace():
            replacement = replacement + " "
        parts.append(replacement)
        cursor = span.end
    parts.append(question[cursor:])
    return "".join(parts), tuple(ordered)


def _strip_punct(token: str) -> str:
    kept = []
    for ch in token:
        if ch != "_" and unicodedata.category(ch).startswith("P"):
            continue
        kept.append(ch)
    return "".join(kept)


def normalize(es_text: str) -> tuple[str, ...]:
    """ES text to PP tokens: lowercase, collapse entity payloads to bare
    placeholder tokens, strip punctuation (underscore is kept), Porter-stem
    everything except the placeholder tokens.
    """
    text = es_text.lower()
    for pattern, token in _PAYLOAD_PATTERNS:
        text = pattern.sub(token, text)
    tokens = []
    for raw in text.split():
        tok = raw if raw in PLACEHOLDER_TOKENS else _strip_punct(raw)
        if not tok:
            continue
        if tok in PLACEHOLDER_TOKENS:
            tokens.append(tok)
        else:
            tokens.append(porter_stem(tok))
    return tuple(tokens)


def abstract_question(
    question: str, spans: list[EntitySpan] | tuple[EntitySpan, ...]
) -> AbstractedQuestion:
    es_text, ordered = abstract_entities(question, spans)
    return AbstractedQuestion(question, es_text, normalize(es_text), ordered)


# ---------------------------------------------------------------------------
# LF-side entity abstraction


def abstract_lf(
    lf: LogicalForm, entities: tuple[EntitySpan, ...]
) -> LogicalForm:
    """Replace concept identifiers and literal values that match question
    entities with the abstract argument tokens. Every ConceptRef and
    Literal in the form must correspond to exactly one entity.
    """
    unused = list(entities)

    def take(kinds: tuple[str, ...], value: str) -> EntitySpan:
        for i, ent in enumerate(unused):
            if ent.kind in kinds and ent.value == value:
                return unused.pop(i)
        raise EntityAlignmentError(
            f"form value {value!r} has no matching {'/'.join(kinds)} entity"
        )

    def walk(node):
        if isinstance(node, Lambda):
            return Lambda(node.var, walk(node.body))
        if isinstance(node, And):
            return And(walk(node.left), walk(node.right))
        if isinstance(node, Apply):
            return Apply(node.pred, tuple(walk(a) for a in node.args))
        if isinstance(node, ConceptRef):
            take(("concept",), node.cui)
            return ConceptRef(ABSTRACT_CONCEPT)
        if isinstance(node, Literal):
            ent = take(("measurement", "temporal_ref"), node.value)
            if ent.kind == "measurement":
                return Literal(ABSTRACT_MEASUREMENT)
            return Literal(ABSTRACT_TEMPORAL_REF)
        return node

    return walk(lf)


def reattach_lf(
    lf: LogicalForm, entities: tuple[EntitySpan, ...]
) -> LogicalForm:
    """Replace abstract argument tokens with concrete entity values, taken
    in question order within each kind.
    """
    queues: dict[str, list[str]] = {
        "concept": [],
        "measurement": [],
        "temporal_ref": [],
    }
    for ent in entities:
        if ent.kind in queues:
            queues[ent.kind].append(ent.value)

    def take(kind: str) -> str:
        if not queues[kind]:
            raise EntityAlignmentError(
                f"form needs more {kind} entities than the question has"
            )
        return queues[kind].pop(0)

    def walk(node):
        if isinstance(node, Lambda):
            return Lambda(node.var, walk(node.body))
        if isinstance(node, And):
            return And(walk(node.left), walk(node.right))
        if isinstance(node, Apply):
            return Apply(node.pred, tuple(walk(a) for a in node.args))
        if isinstance(node, ConceptRef) and node.cui == ABSTRACT_CONCEPT:
            return ConceptRef(take("concept"))
        if isinstance(node, Literal) and node.value == ABSTRACT_MEASUREMENT:
            return Literal(take("measurement"))
        if isinstance(node, Literal) and node.value == ABSTRACT_TEMPORAL_REF:
            return Literal(take("temporal_ref"))
        return node

    return walk(lf)


# ---------------------------------------------------------------------------
# Record pipeline


def spans_from_record(record: dict) -> list[EntitySpan]:
    spans = []
    for i, ent in enumerate(record.get("entities", [])):
        try:
            spans.append(
                EntitySpan(
                    int(ent["start"]), int(ent["end"]),
                    ent["kind"], str(ent["value"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(
                f"record {record.get('id')!r}: bad entity #{i}: {exc}"
            ) from None
    return spans


def preprocess_record(record: dict, registry: PredicateRegistry) -> dict:
    """Full pipeline for one dataset record. Adds the ES text, PP tokens,
    the time-frame-stripped gold form, and its entity-abstracted version;
    verifies that re-attachment restores the stripped gold form exactly.
    """
    spans = spans_from_record(record)
    try:
        aq = abstract_question(record["question"], spans)
    except DataError as exc:
        raise type(exc)(f"record {record.get('id')!r}: {exc}") from None
    lf = parse_lf(record["lf"], registry)
    stripped = strip_time_frames(lf)
    try:
        abstract = abstract_lf(stripped, aq.entities)
        restored = reattach_lf(abstract, aq.entities)
    except EntityAlignmentError as exc:
        raise EntityAlignmentError(
            f"record {record.get('id')!r}: {exc}"
        ) from None
    if not exact_match(restored, stripped):
        raise EntityAlignmentError(
            f"record {record.get('id')!r}: entity abstraction does not "
            f"round-trip ({print_lf(restored)} != {print_lf(stripped)})"
        )
    out = dict(record)
    out["entities"] = [asdict(e) for e in aq.entities]
    out["es"] = aq.es_text
    out["tokens"] = list(aq.tokens)
    out["lf_stripped"] = print_lf(stripped)
    out["lf_abstract"] = print_lf(abstract)
    return out
