"""Training loop shared by the three neural modes.

Plain SGD over per-example losses, learning rate decayed once per epoch,
gradients clipped by global norm. The dev set is scored by greedy decode
at a configurable epoch interval; the best-scoring parameters are kept
and restored at the end. All randomness (initialisation, shuffling,
dropout) derives from the single configured seed, so a rerun with the
same inputs reproduces the same model byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lambdaehr.errors import EmptyDataset, NonFiniteLoss
from lambdaehr.lf import parse_lf, predicate_names
from lambdaehr.neural.config import TrainingConfig
from lambdaehr.neural.decode import decode
from lambdaehr.neural.embeddings import load_embeddings
from lambdaehr.neural.model import Model
from lambdaehr.neural.vocab import build_vocabs


@dataclass
class TrainedModel:
    """A model plus the training-run facts that evaluation needs."""

    model: Model
    best_dev_accuracy: float
    best_epoch: int
    epochs_run: int
    history: list = field(default_factory=list)
    seen_predicates: tuple = ()
    dataset_name: str | None = None
    embedding_coverage: float | None = None

    @property
    def config(self) -> TrainingConfig:
        return self.model.config

    def parse(self, tokens, *, beam_size=None):
        """Decode one tokenised question to canonical logical-form text
        (None when decoding fails)."""
        return decode(self.model, tokens, beam_size=beam_size).text


def dev_accuracy(model, records, *, beam_size=1) -> float:
    """Exact-match accuracy of decoded text against `lf_abstract`."""
    if not records:
        raise EmptyDataset("no records to score")
    hits = 0
    for record in records:
        result = decode(model, record["tokens"], beam_size=beam_size)
        if result.text == record["lf_abstract"]:
            hits += 1
    return hits / len(records)


def _clip_global_norm(grads: dict, limit: float) -> None:
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = total ** 0.5
    if norm > limit > 0.0:
        scale = limit / norm
        for g in grads.values():
            g *= scale


def _seen_predicates(records, registry) -> tuple:
    names = set()
    for record in records:
        names |= predicate_names(parse_lf(record["lf_abstract"], registry))
    return tuple(sorted(names))


def train(
    train_records,
    dev_records,
    config: TrainingConfig,
    registry,
    *,
    embeddings_path: str | None = None,
    dataset_name: str | None = None,
    log=None,
) -> TrainedModel:
    """Train one parser on preprocessed records.

    `train_records` and `dev_records` are dicts with at least `tokens`
    and `lf_abstract`. `log`, when given, receives one progress line per
    dev evaluation.
    """
    if not train_records:
        raise EmptyDataset("training set is empty")
    if not dev_records:
        raise EmptyDataset("dev set is empty")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng, shuffle_rng, drop_rng = (
        np.random.default_rng(s) for s in seeds
    )

    vocabs = build_vocabs(train_records, config.mode, registry)
    model = Model(config, vocabs, registry, rng=init_rng)

    coverage = None
    if embeddings_path is not None:
        table = load_embeddings(
            embeddings_path, vocabs["source"], config.word_dim,
            seed=config.seed,
        )
        model.params["src_emb"][:] = table.matrix
        coverage = table.coverage
        if log:
            log(f"embeddings: {coverage:.1%} of source vocabulary covered")

    prepared = [model.prepare(r) for r in train_records]
    best_params = model.clone_params()
    best_acc = -1.0
    best_epoch = 0
    evals_since_best = 0
    history = []
    epochs_run = 0

    for epoch in range(config.max_epochs):
        lr = config.learning_rate * config.lr_decay**epoch
        total_loss = 0.0
        for pos, idx in enumerate(shuffle_rng.permutation(len(prepared))):
            loss, grads, _ = model.loss_and_grads(
                prepared[idx], training=True, rng=drop_rng
            )
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch + 1, pos)
            _clip_global_norm(grads, config.clip_norm)
            for name, g in grads.items():
                model.params[name] -= lr * g
            total_loss += loss
        epochs_run = epoch + 1
        last = epochs_run == config.max_epochs
        if epochs_run % config.validate_every and not last:
            continue
        acc = dev_accuracy(model, dev_records)
        history.append(
            {
                "epoch": epochs_run,
                "train_loss": total_loss / len(prepared),
                "dev_accuracy": acc,
            }
        )
        if log:
            log(
                f"epoch {epochs_run}: mean loss "
                f"{total_loss / len(prepared):.4f}, dev accuracy {acc:.4f}"
            )
        if acc > best_acc:
            best_acc = acc
            best_epoch = epochs_run
            best_params = model.clone_params()
            evals_since_best = 0
        else:
            evals_since_best += 1
        if config.stop_at_perfect_dev and acc == 1.0:
            break
        if (
            config.patience is not None
            and evals_since_best >= config.patience
        ):
            break

    model.load_params(best_params)
    return TrainedModel(
        model=model,
        best_dev_accuracy=max(best_acc, 0.0),
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        history=history,
        seen_predicates=_seen_predicates(train_records, registry),
        dataset_name=dataset_name,
        embedding_coverage=coverage,
    )
