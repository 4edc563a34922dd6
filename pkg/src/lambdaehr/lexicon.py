"""Lexicon-driven parsing: candidate generation plus a linear ranker.

A lexicon maps normalized phrases (sequences of PP tokens, which may
include the placeholder tokens themselves) to predicates. Candidate
generation fires entries by greedy longest-match over the question
tokens, builds the set-producing core (one conjunct per consumed
placeholder, with has_concept/time_within as the placeholder-token
defaults), and wraps it with every subset and ordering of the fired
wrapper predicates up to a depth limit. A pairwise hinge ranker over
hand-rolled features picks the winner.

Lexicon file format: TSV `phrase<TAB>predicate<TAB>arg_template`, where
arg_template is the placeholder kind the entry consumes (`concept`,
`measurement`, `temporal_ref`) or `-` for wrapper entries. `#` starts a
comment line. Phrases are stored in PP (stemmed) form. One phrase may
map to several predicates; all of them fire on a match.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from lambdaehr.errors import (
    DataError,
    EmptyDataset,
    NoCandidates,
    UnknownPredicate,
)
from lambdaehr.lf import (
    And,
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    LogicalForm,
    Var,
    count_predicates,
    form_depth,
    outermost_label,
    parse_lf,
    print_lf,
    validate,
)
from lambdaehr.preprocess import (
    ABSTRACT_CONCEPT,
    ABSTRACT_MEASUREMENT,
    ABSTRACT_TEMPORAL_REF,
)
from lambdaehr.registry import (
    CUI,
    LITERAL,
    VAR,
    PredicateRegistry,
    default_registry,
)

CONSUMED_KINDS = ("concept", "measurement", "temporal_ref")
NO_TEMPLATE = "-"

_KIND_ARG: dict[str, LogicalForm] = {
    "concept": ConceptRef(ABSTRACT_CONCEPT),
    "measurement": Literal(ABSTRACT_MEASUREMENT.strip("'")),
    "temporal_ref": Literal(ABSTRACT_TEMPORAL_REF.strip("'")),
}
# Core conjuncts are emitted grouped by consumed kind, in this order.
_KIND_RANK = {"concept": 0, "measurement": 1, "temporal_ref": 2}


@dataclass(frozen=True)
class LexiconEntry:
    phrase: tuple[str, ...]
    predicate: str
    arg_template: str

    def __post_init__(self):
        if not self.phrase or any(not t for t in self.phrase):
            raise DataError("lexicon phrases must be non-empty")
        if (
            self.arg_template not in CONSUMED_KINDS
            and self.arg_template != NO_TEMPLATE
        ):
            raise DataError(
                f"bad arg template {self.arg_template!r} for phrase "
                f"{' '.join(self.phrase)!r}"
            )


@dataclass(frozen=True)
class FiredEntry:
    """One lexicon entry matched at a token span [start, end)."""

    entry: LexiconEntry
    start: int
    end: int


class Lexicon:
    def __init__(
        self,
        entries: list[LexiconEntry],
        registry: PredicateRegistry | None = None,
    ):
        registry = registry if registry is not None else default_registry()
        for entry in entries:
            if entry.predicate not in registry:
                raise UnknownPredicate(entry.predicate)
            pred = registry.get(entry.predicate)
            if entry.arg_template == NO_TEMPLATE:
                if not pred.is_wrapper:
                    raise DataError(
                        f"{entry.predicate!r} takes arguments, entry needs "
                        "an arg template"
                    )
            elif pred.arg_kinds[0] != VAR or pred.arity != 2:
                raise DataError(
                    f"{entry.predicate!r} cannot consume a "
                    f"{entry.arg_template} placeholder"
                )
            elif entry.arg_template == "concept":
                if pred.arg_kinds[1] != CUI:
                    raise DataError(
                        f"{entry.predicate!r} does not take a concept"
                    )
            elif pred.arg_kinds[1] != LITERAL:
                raise DataError(
                    f"{entry.predicate!r} does not take a literal"
                )
        self.entries = list(entries)
        self._by_phrase: dict[tuple[str, ...], list[LexiconEntry]] = {}
        for entry in self.entries:
            self._by_phrase.setdefault(entry.phrase, []).append(entry)
        self._max_len = max((len(p) for p in self._by_phrase), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_file(
        cls, path: str, registry: PredicateRegistry | None = None
    ) -> "Lexicon":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(
                        f"{path}:{lineno}: expected 3 tab-separated "
                        f"columns, got {len(parts)}"
                    )
                phrase, predicate, template = parts
                entries.append(
                    LexiconEntry(
                        tuple(phrase.split()), predicate, template
                    )
                )
        return cls(entries, registry)

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# phrase\tpredicate\targ_template\n")
            for entry in self.entries:
                fh.write(
                    f"{' '.join(entry.phrase)}\t{entry.predicate}\t"
                    f"{entry.arg_template}\n"
                )

    def match(self, tokens: list[str]) -> list[FiredEntry]:
        """Greedy longest-match left to right; matched tokens are
        consumed, so shorter entries never refire inside a longer one.
        All entries sharing the winning phrase fire together.
        """
        fired: list[FiredEntry] = []
        i = 0
        n = len(tokens)
        while i < n:
            hit = None
            for length in range(min(self._max_len, n - i), 0, -1):
                phrase = tuple(tokens[i : i + length])
                if phrase in self._by_phrase:
                    hit = (phrase, length)
                    break
            if hit is None:
                i += 1
                continue
            phrase, length = hit
            for entry in self._by_phrase[phrase]:
                fired.append(FiredEntry(entry, i, i + length))
            i += length
        return fired


@dataclass
class Candidate:
    lf: LogicalForm
    text: str
    used: tuple[FiredEntry, ...]


@dataclass
class CandidateSet:
    question_id: str
    candidates: list[Candidate]
    fired: list[FiredEntry]
    no_candidates: bool = field(init=False)

    def __post_init__(self):
        self.no_candidates = not self.candidates


def generate_candidates(
    tokens: list[str],
    lexicon: Lexicon,
    registry: PredicateRegistry | None = None,
    *,
    depth_limit: int = 3,
    question_id: str = "",
) -> CandidateSet:
    """Every type-correct composition of the fired entries.

    The core is one conjunct per consuming entry (concept consumers
    first, then measurement, then temporal, each group in token order);
    around it every subset of the fired wrapper entries is nested in
    every order, with at most depth_limit wrapper layers. Candidates are
    deduplicated by canonical text and each one validates.
    """
    if depth_limit < 1:
        raise DataError("depth limit must be >= 1")
    reg = registry if registry is not None else default_registry()
    fired = lexicon.match(tokens)
    core = [f for f in fired if f.entry.arg_template != NO_TEMPLATE]
    wrappers = [f for f in fired if f.entry.arg_template == NO_TEMPLATE]
    candidates: list[Candidate] = []
    seen: set[str] = set()
    if core:
        core.sort(key=lambda f: (_KIND_RANK[f.entry.arg_template], f.start))
        body: LogicalForm = None
        for f in core:
            conjunct = Apply(
                f.entry.predicate,
                (Var("x"), _KIND_ARG[f.entry.arg_template]),
            )
            body = conjunct if body is None else And(body, conjunct)
        base = Lambda("x", body)
        max_layers = min(len(wrappers), depth_limit)
        for size in range(max_layers + 1):
            for combo in itertools.combinations(wrappers, size):
                for order in itertools.permutations(combo):
                    lf: LogicalForm = base
                    for f in reversed(order):
                        lf = Apply(f.entry.predicate, (lf,))
                    text = print_lf(lf)
                    if text in seen:
                        continue
                    seen.add(text)
                    validate(lf, reg)
                    candidates.append(
                        Candidate(lf, text, tuple(core) + tuple(order))
                    )
    return CandidateSet(question_id, candidates, fired)


class FeatureExtractor:
    """Fixed-order features of a (question, candidate) pair.

    Order: matched-token coverage fraction; fired-entry count; candidate
    predicate count; candidate depth; one indicator per possible
    outermost label (registry wrappers, grouped is_*, and the bare
    lambda); one indicator per unconsumed placeholder kind.
    """

    def __init__(self, registry: PredicateRegistry | None = None):
        reg = registry if registry is not None else default_registry()
        labels = {"λx", "is_*"}
        for pred in reg.wrapper_predicates():
            if not pred.name.startswith("is_"):
                labels.add(pred.name)
        self.outermost_labels = tuple(sorted(labels))
        self._label_index = {
            label: i for i, label in enumerate(self.outermost_labels)
        }

    def names(self) -> list[str]:
        return (
            ["coverage", "fired_count", "predicate_count", "depth"]
            + [f"outer={label}" for label in self.outermost_labels]
            + [f"unconsumed={kind}" for kind in CONSUMED_KINDS]
        )

    def extract(
        self,
        tokens: list[str],
        candidate: Candidate,
        fired: list[FiredEntry],
    ) -> list[float]:
        covered = set()
        for f in candidate.used:
            covered.update(range(f.start, f.end))
        coverage = len(covered) / len(tokens) if tokens else 0.0
        row = [
            coverage,
            float(len(fired)),
            float(count_predicates(candidate.lf)),
            float(form_depth(candidate.lf)),
        ]
        indicators = [0.0] * len(self.outermost_labels)
        label = outermost_label(candidate.lf, grouped=True)
        if label in self._label_index:
            indicators[self._label_index[label]] = 1.0
        row.extend(indicators)
        consumed_kinds = {f.entry.arg_template for f in candidate.used}
        for kind in CONSUMED_KINDS:
            has_kind = _placeholder_token(kind) in tokens
            row.append(1.0 if has_kind and kind not in consumed_kinds else 0.0)
        return row


def _placeholder_token(kind: str) -> str:
    return "measur" if kind == "measurement" else kind


@dataclass
class RankerModel:
    weights: list[float]
    feature_names: list[str]
    depth_limit: int
    oracle_coverage: float
    train_accuracy: float


def score(weights: list[float], features: list[float]) -> float:
    return sum(w * f for w, f in zip(weights, features))


def select(
    candidate_set: CandidateSet,
    weights: list[float],
    extractor: FeatureExtractor,
    tokens: list[str],
) -> Candidate:
    """Highest-scoring candidate; ties break to the one with fewer
    predicates, then lexicographically smaller canonical text.
    """
    if candidate_set.no_candidates:
        raise NoCandidates(
            f"no candidates for question {candidate_set.question_id!r}"
        )
    best = None
    best_key = None
    for cand in candidate_set.candidates:
        s = score(
            weights, extractor.extract(tokens, cand, candidate_set.fired)
        )
        key = (-s, count_predicates(cand.lf), cand.text)
        if best_key is None or key < best_key:
            best = cand
            best_key = key
    return best


def train_ranker(
    records: list[dict],
    lexicon: Lexicon,
    registry: PredicateRegistry | None = None,
    *,
    depth_limit: int = 3,
    epochs: int = 30,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> RankerModel:
    """Pairwise hinge training with margin 1 by subgradient descent.

    Records are preprocessed examples carrying "tokens" and the gold
    abstract form under "lf_abstract". Questions whose candidate set
    misses the gold contribute no pairs but count against the reported
    oracle coverage.
    """
    if not records:
        raise EmptyDataset("ranker training needs at least one example")
    reg = registry if registry is not None else default_registry()
    extractor = FeatureExtractor(reg)
    prepared = []
    covered = 0
    for record in records:
        tokens = list(record["tokens"])
        gold_text = print_lf(parse_lf(record["lf_abstract"], reg))
        cset = generate_candidates(
            tokens, lexicon, reg,
            depth_limit=depth_limit,
            question_id=str(record.get("id", "")),
        )
        rows = [
            extractor.extract(tokens, cand, cset.fired)
            for cand in cset.candidates
        ]
        gold_idx = None
        for i, cand in enumerate(cset.candidates):
            if cand.text == gold_text:
                gold_idx = i
                break
        if gold_idx is not None:
            covered += 1
        prepared.append((tokens, cset, rows, gold_idx))

    dim = len(extractor.names())
    weights = [0.0] * dim
    rng = random.Random(seed)
    order = list(range(len(prepared)))
    for _ in range(epochs):
        rng.shuffle(order)
        for idx in order:
            _, _, rows, gold_idx = prepared[idx]
            if gold_idx is None:
                continue
            gold_row = rows[gold_idx]
            gold_score = score(weights, gold_row)
            for i, row in enumerate(rows):
                if i == gold_idx:
                    continue
                if 1.0 - (gold_score - score(weights, row)) > 0.0:
                    for d in range(dim):
                        weights[d] += learning_rate * (
                            gold_row[d] - row[d]
                        )
                    gold_score = score(weights, gold_row)

    correct = 0
    for tokens, cset, rows, gold_idx in prepared:
        if cset.no_candidates or gold_idx is None:
            continue
        chosen = select(cset, weights, extractor, tokens)
        if chosen.text == cset.candidates[gold_idx].text:
            correct += 1
    return RankerModel(
        weights=weights,
        feature_names=extractor.names(),
        depth_limit=depth_limit,
        oracle_coverage=covered / len(prepared),
        train_accuracy=correct / len(prepared) if prepared else 0.0,
    )
