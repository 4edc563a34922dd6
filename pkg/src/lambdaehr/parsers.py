"""Uniform parser interface over the neural and lexicon families.

Every parser answers parse(tokens) with canonical logical-form text or
None, and exposes `seen_predicates` (predicates in its training forms)
and `source_tokens` (question tokens it saw in training) so the
cross-dataset harness can flag gaps. Factories are plain picklable
objects: evaluation folds can run in worker processes.
"""

from __future__ import annotations

from lambdaehr.checkpoint import (
    checkpoint_kind,
    load_ranker,
    load_trained,
    save_ranker,
    save_trained,
)
from lambdaehr.errors import LambdaEhrError
from lambdaehr.lexicon import (
    FeatureExtractor,
    Lexicon,
    RankerModel,
    generate_candidates,
    select,
    train_ranker,
)
from lambdaehr.lf import parse_lf, predicate_names
from lambdaehr.neural.decode import decode
from lambdaehr.neural.train import TrainedModel, train


def _training_predicates(records, registry) -> tuple:
    names = set()
    for record in records:
        names |= predicate_names(parse_lf(record["lf_abstract"], registry))
    return tuple(sorted(names))


def _training_tokens(records) -> tuple:
    return tuple(sorted({t for r in records for t in r["tokens"]}))


class NeuralParser:
    """A trained encoder-decoder model behind the common interface."""

    def __init__(self, trained: TrainedModel):
        self.trained = trained
        self.name = trained.config.mode

    @property
    def seen_predicates(self) -> tuple:
        return self.trained.seen_predicates

    @property
    def source_tokens(self) -> tuple:
        return tuple(self.trained.model.vocabs["source"].tokens[3:])

    def parse(self, tokens, *, beam_size=None) -> str | None:
        return decode(self.trained.model, tokens, beam_size=beam_size).text

    def save(self, path: str) -> None:
        save_trained(path, self.trained)


class NeuralFactory:
    """Builds a NeuralParser by training on the given folds."""

    def __init__(self, config, registry, *, embeddings_path=None,
                 dataset_name=None):
        self.config = config
        self.registry = registry
        self.embeddings_path = embeddings_path
        self.dataset_name = dataset_name
        self.name = config.mode

    def __call__(self, train_records, dev_records) -> NeuralParser:
        trained = train(
            train_records,
            dev_records,
            self.config,
            self.registry,
            embeddings_path=self.embeddings_path,
            dataset_name=self.dataset_name,
        )
        return NeuralParser(trained)


class LexiconParser:
    """Lexicon candidate generation plus the trained ranker."""

    def __init__(self, lexicon: Lexicon, ranker: RankerModel, registry,
                 *, seen_predicates=(), source_tokens=(),
                 dataset_name=None):
        self.lexicon = lexicon
        self.ranker = ranker
        self.registry = registry
        self.seen_predicates = tuple(seen_predicates)
        self.source_tokens = tuple(source_tokens)
        self.dataset_name = dataset_name
        self.name = "lexicon"
        self._extractor = FeatureExtractor(registry)

    def __getstate__(self):
        state = dict(self.__dict__)
        del state["_extractor"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._extractor = FeatureExtractor(self.registry)

    def parse(self, tokens) -> str | None:
        tokens = list(tokens)
        candidates = generate_candidates(
            tokens,
            self.lexicon,
            self.registry,
            depth_limit=self.ranker.depth_limit,
        )
        if candidates.no_candidates:
            return None
        best = select(
            candidates, self.ranker.weights, self._extractor, tokens
        )
        return best.text

    def save(self, path: str) -> None:
        save_ranker(
            path,
            self.lexicon,
            self.ranker,
            self.registry,
            seen_predicates=self.seen_predicates,
            source_tokens=self.source_tokens,
            dataset_name=self.dataset_name,
        )

    @property
    def oracle_coverage(self) -> float:
        return self.ranker.oracle_coverage


class LexiconFactory:
    """Trains the candidate ranker on the training fold. The lexicon
    itself is fixed input, not learned, so dev data goes unused."""

    def __init__(self, lexicon: Lexicon, registry, *, depth_limit=3,
                 epochs=30, learning_rate=0.1, seed=0, dataset_name=None):
        self.lexicon = lexicon
        self.registry = registry
        self.depth_limit = depth_limit
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.dataset_name = dataset_name
        self.name = "lexicon"

    def __call__(self, train_records, dev_records) -> LexiconParser:
        ranker = train_ranker(
            train_records,
            self.lexicon,
            self.registry,
            depth_limit=self.depth_limit,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )
        return LexiconParser(
            self.lexicon,
            ranker,
            self.registry,
            seen_predicates=_training_predicates(
                train_records, self.registry
            ),
            source_tokens=_training_tokens(train_records),
            dataset_name=self.dataset_name,
        )


class MemorizingParser:
    """Answers from an exact question-token lookup table. A cheap stand-in
    for harness tests that must not pay neural training costs."""

    name = "memorizing"

    def __init__(self, table: dict, *, seen_predicates=(),
                 source_tokens=()):
        self.table = table
        self.seen_predicates = tuple(seen_predicates)
        self.source_tokens = tuple(source_tokens)

    def parse(self, tokens) -> str | None:
        return self.table.get(tuple(tokens))


class MemorizingFactory:
    name = "memorizing"

    def __call__(self, train_records, dev_records) -> MemorizingParser:
        table = {
            tuple(r["tokens"]): r["lf_abstract"] for r in train_records
        }
        return MemorizingParser(
            table, source_tokens=_training_tokens(train_records)
        )


class ConstantParser:
    """Always predicts one fixed form (or None)."""

    name = "constant"

    def __init__(self, text, *, seen_predicates=(), source_tokens=()):
        self.text = text
        self.seen_predicates = tuple(seen_predicates)
        self.source_tokens = tuple(source_tokens)

    def parse(self, tokens) -> str | None:
        return self.text


class ConstantFactory:
    name = "constant"

    def __init__(self, text):
        self.text = text

    def __call__(self, train_records, dev_records) -> ConstantParser:
        return ConstantParser(self.text)


def load_parser(path: str):
    """Rebuild whichever parser kind the checkpoint holds."""
    if checkpoint_kind(path) == "neural":
        return NeuralParser(load_trained(path))
    payload = load_ranker(path)
    return LexiconParser(
        payload["lexicon"],
        payload["ranker"],
        payload["registry"],
        seen_predicates=payload["seen_predicates"],
        source_tokens=payload.get("source_tokens", ()),
        dataset_name=payload["dataset"],
    )
