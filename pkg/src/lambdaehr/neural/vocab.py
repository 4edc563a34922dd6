"""Vocabularies and target-sequence extraction for the three decoding
modes.

Targets live in the entity-abstracted space: the decoders predict the
stripped, placeholder-valued form of a question's meaning, and entity
values are re-attached downstream.
"""

from lambdaehr.errors import DataError
from lambdaehr.grammar import TransitionSystem, action_to_line
from lambdaehr.lf import _tokenize, parse_lf
from lambdaehr.sketch import coarsen, fine_tokens
from lambdaehr.lf import print_lf

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SPECIALS = (BOS, EOS, UNK)

# Source placeholder tokens whose copy lands on a differently spelled
# target token; every other source token copies to itself.
COPY_MAP = {
    "concept": "@concept",
    "measur": "'@measurement'",
    "temporal_ref": "'@temporal_ref'",
}


def copy_target(source_token: str) -> str:
    return COPY_MAP.get(source_token, source_token)


class Vocab:
    """Immutable token <-> dense index mapping with the three specials
    at the front."""

    def __init__(self, tokens):
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")
        for special in SPECIALS:
            if special not in self.index:
                raise DataError(f"vocabulary is missing {special!r}")

    @classmethod
    def build(cls, token_iterables) -> "Vocab":
        """Specials followed by the sorted union of all tokens."""
        seen = set()
        for seq in token_iterables:
            seen.update(seq)
        seen.difference_update(SPECIALS)
        return cls(SPECIALS + tuple(sorted(seen)))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def bos(self) -> int:
        return self.index[BOS]

    @property
    def eos(self) -> int:
        return self.index[EOS]

    @property
    def unk(self) -> int:
        return self.index[UNK]

    def encode(self, tokens) -> list[int]:
        unk = self.index[UNK]
        return [self.index.get(t, unk) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]


def lf_text_tokens(text: str) -> list[str]:
    """Logical-form text as a flat token sequence; joining the tokens
    with spaces yields text that parses back to the same form."""
    out = []
    for tok in _tokenize(text):
        if tok.kind == "END":
            break
        if tok.kind == "QUOTED":
            out.append(f"'{tok.text}'")
        elif tok.kind == "LAMBDA":
            out.append("λ")
        else:
            out.append(tok.text)
    return out


def tokens_to_lf_text(tokens) -> str:
    return " ".join(tokens)


def direct_targets(record: dict) -> list[str]:
    return lf_text_tokens(record["lf_abstract"])


def sketch_fine_targets(record: dict, registry) -> tuple[list[str],
                                                         list[str]]:
    """(sketch tokens, detail tokens) of the record's abstract form."""
    lf = parse_lf(record["lf_abstract"], registry)
    return lf_text_tokens(print_lf(coarsen(lf))), fine_tokens(lf)


def action_targets(record: dict, system: TransitionSystem) -> list[str]:
    lf = parse_lf(record["lf_abstract"], system.registry)
    return [action_to_line(a) for a in system.lf_to_actions(lf)]


def abstract_system(registry) -> TransitionSystem:
    """Transition system over the entity-abstracted token space (the
    space the parsers decode in)."""
    return TransitionSystem(registry=registry)


def build_vocabs(records, mode: str, registry,
                 system: TransitionSystem | None = None) -> dict:
    """Vocabularies for one training set: always "source", plus
    "target" (direct, grammar) or "sketch"/"fine" (sketch mode)."""
    source = Vocab.build([r["tokens"] for r in records])
    if mode == "direct":
        # Pointer-generator over the union of generated and copied
        # tokens, so the output distribution is total.
        copies = [copy_target(t) for t in source.tokens
                  if t not in SPECIALS]
        target = Vocab.build(
            [direct_targets(r) for r in records] + [copies]
        )
        return {"source": source, "target": target}
    if mode == "grammar":
        if system is None:
            system = abstract_system(registry)
        target = Vocab.build(
            [action_targets(r, system) for r in records]
        )
        return {"source": source, "target": target}
    if mode == "sketch":
        pairs = [sketch_fine_targets(r, registry) for r in records]
        return {
            "source": source,
            "sketch": Vocab.build([p[0] for p in pairs]),
            "fine": Vocab.build([p[1] for p in pairs]),
        }
    raise DataError(f"unknown mode {mode!r}")
