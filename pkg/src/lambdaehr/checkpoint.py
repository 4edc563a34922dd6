"""Versioned binary container for trained parsers.

Layout: an 8-byte magic, a big-endian u32 format version, a big-endian
u64 header length, a compact JSON header, then the raw float64 bytes of
every array in the order the header's manifest lists them. Writing the
same trained parser twice produces identical bytes, so checkpoints can
be compared with a plain file hash.

The header embeds everything needed to rebuild the parser, including
the predicate registry, so a checkpoint loads without the original
config files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from lambdaehr.errors import CheckpointError
from lambdaehr.registry import PredicateRegistry

MAGIC = b"LEHRCKPT"
VERSION = 1

_PREFIX = struct.Struct(">8sIQ")


def save_container(path: str, header: dict, arrays: dict) -> None:
    """Write one container. `header` must be JSON-ready; an `arrays`
    manifest entry is added automatically."""
    names = sorted(arrays)
    header = dict(header)
    header["arrays"] = [
        [name, list(arrays[name].shape)] for name in names
    ]
    blob = json.dumps(
        header, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype=np.float64).tobytes())


def load_container(path: str) -> tuple[dict, dict]:
    """Read one container back as (header, arrays)."""
    with open(path, "rb") as fh:
        prefix = fh.read(_PREFIX.size)
        if len(prefix) < _PREFIX.size:
            raise CheckpointError(f"{path}: truncated header")
        magic, version, header_len = _PREFIX.unpack(prefix)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a parser checkpoint")
        if version != VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {version} "
                f"(this build reads version {VERSION})"
            )
        blob = fh.read(header_len)
        if len(blob) < header_len:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from None
        arrays = {}
        for name, shape in header.get("arrays", []):
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = fh.read(count * 8)
            if len(data) < count * 8:
                raise CheckpointError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(data, dtype=np.float64).reshape(shape).copy()
    return header, arrays


# ---------------------------------------------------------------------------
# Neural parsers


def save_trained(path: str, trained) -> None:
    """Persist a TrainedModel (any decoding mode)."""
    model = trained.model
    header = {
        "kind": "neural",
        "config": model.config.to_dict(),
        "vocabs": {
            name: list(vocab.tokens)
            for name, vocab in model.vocabs.items()
        },
        "registry": model.registry.to_dict(),
        "best_dev_accuracy": trained.best_dev_accuracy,
        "best_epoch": trained.best_epoch,
        "epochs_run": trained.epochs_run,
        "history": trained.history,
        "seen_predicates": list(trained.seen_predicates),
        "dataset": trained.dataset_name,
        "embedding_coverage": trained.embedding_coverage,
    }
    save_container(path, header, model.params)


def load_trained(path: str):
    """Rebuild a TrainedModel from `path`. Raises CheckpointError when
    the file is not a neural checkpoint."""
    from lambdaehr.neural.config import TrainingConfig
    from lambdaehr.neural.model import Model
    from lambdaehr.neural.train import TrainedModel
    from lambdaehr.neural.vocab import Vocab

    header, arrays = load_container(path)
    if header.get("kind") != "neural":
        raise CheckpointError(
            f"{path}: holds a {header.get('kind')!r} parser, not a "
            "neural one"
        )
    config = TrainingConfig.from_dict(header["config"])
    vocabs = {
        name: Vocab(tuple(tokens))
        for name, tokens in header["vocabs"].items()
    }
    registry = PredicateRegistry.from_dict(header["registry"])
    model = Model(config, vocabs, registry, params=arrays)
    return TrainedModel(
        model=model,
        best_dev_accuracy=header["best_dev_accuracy"],
        best_epoch=header["best_epoch"],
        epochs_run=header["epochs_run"],
        history=header["history"],
        seen_predicates=tuple(header["seen_predicates"]),
        dataset_name=header["dataset"],
        embedding_coverage=header["embedding_coverage"],
    )


# ---------------------------------------------------------------------------
# Lexicon-and-ranker parsers


def save_ranker(
    path: str,
    lexicon,
    ranker,
    registry: PredicateRegistry,
    *,
    seen_predicates=(),
    source_tokens=(),
    dataset_name=None,
) -> None:
    """Persist a lexicon plus its trained candidate ranker."""
    header = {
        "kind": "lexicon",
        "entries": [
            [list(e.phrase), e.predicate, e.arg_template]
            for e in lexicon.entries
        ],
        "feature_names": list(ranker.feature_names),
        "depth_limit": ranker.depth_limit,
        "oracle_coverage": ranker.oracle_coverage,
        "train_accuracy": ranker.train_accuracy,
        "registry": registry.to_dict(),
        "seen_predicates": list(seen_predicates),
        "source_tokens": list(source_tokens),
        "dataset": dataset_name,
    }
    arrays = {"weights": np.asarray(ranker.weights, dtype=np.float64)}
    save_container(path, header, arrays)


def load_ranker(path: str) -> dict:
    """Read a lexicon checkpoint back as a plain payload dict with keys
    lexicon-entries/ranker/registry/seen_predicates/dataset."""
    from lambdaehr.lexicon import Lexicon, LexiconEntry, RankerModel

    header, arrays = load_container(path)
    if header.get("kind") != "lexicon":
        raise CheckpointError(
            f"{path}: holds a {header.get('kind')!r} parser, not a "
            "lexicon one"
        )
    registry = PredicateRegistry.from_dict(header["registry"])
    entries = [
        LexiconEntry(tuple(phrase), predicate, template)
        for phrase, predicate, template in header["entries"]
    ]
    ranker = RankerModel(
        weights=[float(w) for w in arrays["weights"]],
        feature_names=list(header["feature_names"]),
        depth_limit=header["depth_limit"],
        oracle_coverage=header["oracle_coverage"],
        train_accuracy=header["train_accuracy"],
    )
    return {
        "lexicon": Lexicon(entries, registry),
        "ranker": ranker,
        "registry": registry,
        "seen_predicates": tuple(header["seen_predicates"]),
        "source_tokens": tuple(header.get("source_tokens", ())),
        "dataset": header["dataset"],
    }


def checkpoint_kind(path: str) -> str:
    """Peek at the kind ("neural" or "lexicon") without loading arrays."""
    header, _ = load_container(path)
    kind = header.get("kind")
    if kind not in ("neural", "lexicon"):
        raise CheckpointError(f"{path}: unknown parser kind {kind!r}")
    return kind
