"""Exact-match evaluation: k-fold CV, leave-one-out CV, cross-dataset
transfer, and per-variant error analysis.

A "parser factory" is any picklable callable taking (train_records,
dev_records) and returning a parser whose parse(tokens) yields canonical
logical-form text or None. Folds are independent, so CV and LOOV can
fan out across processes with `jobs`.

Accuracy is exact string match between the parser's canonical output
and the record's `lf_abstract`. Reports carry macro (mean over folds)
and micro (pooled) accuracy; the paper-style text tables and the
prediction dump all derive from one prediction list per report.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from lambdaehr.errors import (
    DataError,
    EmptyDataset,
    MismatchedDatasets,
    TooFewExamples,
    VocabularyGap,
)
from lambdaehr.lf import outermost_label, parse_lf
from lambdaehr.registry import default_registry


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint index folds plus the rotation rule: run i tests on fold
    i and holds out fold (i+1) mod k for development."""

    k: int
    seed: int
    folds: tuple

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def test_fold(self, i: int) -> tuple:
        return self.folds[i]

    def dev_fold(self, i: int) -> tuple:
        return self.folds[(i + 1) % self.k]

    def train_indices(self, i: int) -> tuple:
        skip = {i, (i + 1) % self.k}
        out = []
        for j, fold in enumerate(self.folds):
            if j not in skip:
                out.extend(fold)
        return tuple(sorted(out))


def split_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle, then round-robin assignment into k folds. Fold
    sizes differ by at most one."""
    if k < 2:
        raise TooFewExamples(f"need at least 2 folds, got {k}")
    if n < k:
        raise TooFewExamples(
            f"cannot split {n} example(s) into {k} folds"
        )
    order = np.random.default_rng(seed).permutation(n)
    folds = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        folds[pos % k].append(int(idx))
    return FoldPlan(k, seed, tuple(tuple(f) for f in folds))


@dataclass
class EvalReport:
    """One evaluation run. `predictions` is the ground truth for every
    derived number: id, gold text, predicted text (None for decode
    failures), and correctness, in dataset order."""

    model_name: str
    dataset_name: str
    scheme: str
    overall_accuracy: float
    mean_fold_accuracy: float | None
    fold_accuracies: list
    variants: list
    predictions: list
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "dataset": self.dataset_name,
            "scheme": self.scheme,
            "overall_accuracy": self.overall_accuracy,
            "mean_fold_accuracy": self.mean_fold_accuracy,
            "fold_accuracies": self.fold_accuracies,
            "variants": self.variants,
            "predictions": self.predictions,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        try:
            return cls(
                model_name=payload["model"],
                dataset_name=payload["dataset"],
                scheme=payload["scheme"],
                overall_accuracy=payload["overall_accuracy"],
                mean_fold_accuracy=payload["mean_fold_accuracy"],
                fold_accuracies=list(payload["fold_accuracies"]),
                variants=[dict(v) for v in payload["variants"]],
                predictions=[dict(p) for p in payload["predictions"]],
                notes=list(payload.get("notes", [])),
            )
        except KeyError as exc:
            raise DataError(f"report is missing field {exc}") from None


# ---------------------------------------------------------------------------
# Prediction plumbing


def _predict(parser, records) -> list:
    out = []
    for record in records:
        pred = parser.parse(list(record["tokens"]))
        gold = record["lf_abstract"]
        out.append(
            {
                "id": record.get("id", ""),
                "gold": gold,
                "pred": pred,
                "correct": pred == gold,
            }
        )
    return out


def _accuracy(predictions) -> float:
    if not predictions:
        return 0.0
    return sum(p["correct"] for p in predictions) / len(predictions)


def variant_table(records, predictions, registry, *, flag=None) -> list:
    """Per-variant totals and error counts, grouped by the gold form's
    outermost label (is_* collapsed). `flag`, when given, maps a record
    to a list of marker strings for its variant row."""
    rows: dict[str, dict] = {}
    for record, pred in zip(records, predictions):
        lf = parse_lf(record["lf_abstract"], registry)
        label = outermost_label(lf, grouped=True)
        row = rows.setdefault(
            label, {"variant": label, "total": 0, "errors": 0, "flags": []}
        )
        row["total"] += 1
        if not pred["correct"]:
            row["errors"] += 1
        if flag is not None:
            for marker in flag(record):
                if marker not in row["flags"]:
                    row["flags"].append(marker)
    return sorted(rows.values(), key=lambda r: r["variant"])


def _attach_note(exc: BaseException, note: str) -> None:
    """Record context on an in-flight exception. Mirrors the __notes__
    convention that exception tracebacks display from Python 3.11 on."""
    notes = getattr(exc, "__notes__", None)
    if notes is None:
        notes = []
        exc.__notes__ = notes
    notes.append(note)


# Worker state: populated once per process (via the pool initializer,
# or directly for in-process runs) so tasks do not re-pickle the data.
_POOL_STATE: dict = {}


def _pool_init(factory, records, plan) -> None:
    _POOL_STATE["factory"] = factory
    _POOL_STATE["records"] = records
    _POOL_STATE["plan"] = plan


def _cv_fold(i: int):
    factory = _POOL_STATE["factory"]
    records = _POOL_STATE["records"]
    plan = _POOL_STATE["plan"]
    train = [records[j] for j in plan.train_indices(i)]
    dev = [records[j] for j in plan.dev_fold(i)]
    test = [records[j] for j in plan.test_fold(i)]
    try:
        parser = factory(train, dev)
    except Exception as exc:
        _attach_note(exc, f"while training fold {i}")
        raise
    return i, plan.test_fold(i), _predict(parser, test)


def _loov_run(i: int):
    factory = _POOL_STATE["factory"]
    records = _POOL_STATE["records"]
    train = records[:i] + records[i + 1 :]
    try:
        parser = factory(train, train)
    except Exception as exc:
        _attach_note(exc, f"while training leave-one-out run {i}")
        raise
    return i, _predict(parser, [records[i]])[0]


def _fan_out(worker, count: int, factory, records, plan, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_pool_init,
            initargs=(factory, records, plan),
        ) as pool:
            results = list(pool.map(worker, range(count)))
    else:
        _pool_init(factory, records, plan)
        try:
            results = [worker(i) for i in range(count)]
        finally:
            _POOL_STATE.clear()
    results.sort(key=lambda r: r[0])
    return results


def _run_plan(factory, records, plan, jobs: int):
    results = _fan_out(_cv_fold, plan.k, factory, records, plan, jobs)
    fold_accuracies = []
    by_index = {}
    for _, indices, preds in results:
        fold_accuracies.append(_accuracy(preds))
        for idx, pred in zip(indices, preds):
            by_index[idx] = pred
    predictions = [by_index[i] for i in range(len(records))]
    return fold_accuracies, predictions


# ---------------------------------------------------------------------------
# Evaluation schemes


def run_cv(
    factory,
    records,
    plan: FoldPlan,
    *,
    registry=None,
    jobs: int = 1,
    model_name: str | None = None,
    dataset_name: str = "",
) -> EvalReport:
    """Train k independent parsers, testing each example exactly once."""
    if plan.n != len(records):
        raise DataError(
            f"fold plan covers {plan.n} examples, dataset has "
            f"{len(records)}"
        )
    registry = registry if registry is not None else default_registry()
    fold_accuracies, predictions = _run_plan(factory, records, plan, jobs)
    return EvalReport(
        model_name=model_name or getattr(factory, "name", "parser"),
        dataset_name=dataset_name,
        scheme="CV",
        overall_accuracy=_accuracy(predictions),
        mean_fold_accuracy=float(np.mean(fold_accuracies)),
        fold_accuracies=fold_accuracies,
        variants=variant_table(records, predictions, registry),
        predictions=predictions,
    )


def run_loov(
    factory,
    records,
    *,
    registry=None,
    jobs: int = 1,
    model_name: str | None = None,
    dataset_name: str = "",
) -> EvalReport:
    """Leave-one-out: n runs, each testing a single held-out example.

    At this scale there is no spare fold for early stopping, so the dev
    set IS the training set; the report carries a note saying so.
    """
    n = len(records)
    if n < 2:
        raise TooFewExamples(
            f"leave-one-out needs at least 2 examples, got {n}"
        )
    registry = registry if registry is not None else default_registry()
    results = _fan_out(_loov_run, n, factory, list(records), None, jobs)
    predictions = [pred for _, pred in results]
    accuracies = [float(p["correct"]) for p in predictions]
    return EvalReport(
        model_name=model_name or getattr(factory, "name", "parser"),
        dataset_name=dataset_name,
        scheme="LOOV",
        overall_accuracy=_accuracy(predictions),
        mean_fold_accuracy=float(np.mean(accuracies)),
        fold_accuracies=accuracies,
        variants=variant_table(records, predictions, registry),
        predictions=predictions,
        notes=[
            "development set equals the training set: with n-1 training "
            "examples there is no spare fold for early stopping"
        ],
    )


def run_cross_dataset(
    parser,
    records,
    *,
    registry=None,
    model_name: str | None = None,
    dataset_name: str = "",
) -> EvalReport:
    """Evaluate an already-trained parser on a whole foreign dataset.

    No training happens. Variant rows whose questions use predicates the
    parser never saw in training are flagged "unseen-in-training", and a
    VocabularyGap warning lists question tokens outside the parser's
    source vocabulary.
    """
    if not records:
        raise EmptyDataset("cross-dataset target is empty")
    registry = registry if registry is not None else default_registry()

    source_tokens = set(getattr(parser, "source_tokens", ()))
    if source_tokens:
        unseen = sorted(
            {t for r in records for t in r["tokens"]} - source_tokens
        )
        if unseen:
            warnings.warn(
                VocabularyGap(
                    f"{len(unseen)} target token(s) absent from the "
                    f"source training vocabulary: {', '.join(unseen)}"
                )
            )

    seen = set(getattr(parser, "seen_predicates", ()))

    def flag(record):
        # A variant is its gold form's outermost predicate; a root
        # lambda has none and cannot be out of vocabulary.
        gold = parse_lf(record["lf_abstract"], registry)
        label = outermost_label(gold)
        if seen and label != "λx" and label not in seen:
            return ["unseen-in-training"]
        return []

    predictions = _predict(parser, records)
    return EvalReport(
        model_name=model_name or getattr(parser, "name", "parser"),
        dataset_name=dataset_name,
        scheme="CD",
        overall_accuracy=_accuracy(predictions),
        mean_fold_accuracy=None,
        fold_accuracies=[],
        variants=variant_table(
            records, predictions, registry, flag=flag
        ),
        predictions=predictions,
    )


# ---------------------------------------------------------------------------
# Error analysis


@dataclass
class ErrorAnalysis:
    """Per-variant tables recomputed from each report's prediction list,
    plus (for two or more reports on one dataset) the cross-model
    agreement counts keyed by correctness pattern."""

    variant_tables: dict
    agreement: dict | None
    model_names: list
    dataset_name: str


def error_analysis(reports, registry=None) -> ErrorAnalysis:
    """Group each report's errors by gold outermost label and, given at
    least two reports over the same dataset, count questions by which
    models got them right."""
    if not reports:
        raise DataError("error analysis needs at least one report")
    registry = registry if registry is not None else default_registry()

    tables = {}
    for report in reports:
        rows: dict[str, dict] = {}
        for pred in report.predictions:
            label = outermost_label(
                parse_lf(pred["gold"], registry), grouped=True
            )
            row = rows.setdefault(
                label, {"variant": label, "total": 0, "errors": 0}
            )
            row["total"] += 1
            row["errors"] += not pred["correct"]
        tables[report.model_name] = sorted(
            rows.values(), key=lambda r: r["variant"]
        )

    agreement = None
    if len(reports) >= 2:
        datasets = {r.dataset_name for r in reports}
        if len(datasets) > 1:
            raise MismatchedDatasets(
                "agreement table needs reports over one dataset, got "
                + ", ".join(sorted(datasets))
            )
        id_lists = [
            tuple(p["id"] for p in r.predictions) for r in reports
        ]
        if len(set(id_lists)) > 1:
            raise MismatchedDatasets(
                "reports cover different question sets"
            )
        agreement = {}
        for row in zip(*(r.predictions for r in reports)):
            pattern = tuple(bool(p["correct"]) for p in row)
            agreement[pattern] = agreement.get(pattern, 0) + 1

    return ErrorAnalysis(
        variant_tables=tables,
        agreement=agreement,
        model_names=[r.model_name for r in reports],
        dataset_name=reports[0].dataset_name,
    )


# ---------------------------------------------------------------------------
# Rendering


def _rule(widths) -> str:
    return "-" * (sum(widths) + 3 * (len(widths) - 1))


def render_report(report: EvalReport) -> str:
    """Text summary: headline accuracies, then the per-variant table."""
    lines = [
        f"model:   {report.model_name}",
        f"dataset: {report.dataset_name}",
        f"scheme:  {report.scheme}",
        f"overall accuracy (micro): {report.overall_accuracy:.4f}",
    ]
    if report.mean_fold_accuracy is not None:
        lines.append(
            f"mean fold accuracy (macro): {report.mean_fold_accuracy:.4f}"
        )
    if report.fold_accuracies:
        folds = "  ".join(f"{a:.3f}" for a in report.fold_accuracies)
        lines.append(f"fold accuracies: {folds}")
    for note in report.notes:
        lines.append(f"note: {note}")
    lines.append("")
    lines.extend(render_variant_table(report.variants))
    return "\n".join(lines) + "\n"


def render_variant_table(variants) -> list:
    """Rows of variant / count / errors, one line per outermost label."""
    header = ("Variant", "Count", "Errors", "Flags")
    rows = [
        (
            v["variant"],
            str(v["total"]),
            str(v["errors"]),
            " ".join(v.get("flags", [])),
        )
        for v in variants
    ]
    widths = [
        max(len(header[c]), *(len(r[c]) for r in rows)) if rows
        else len(header[c])
        for c in range(4)
    ]
    out = [
        "   ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        _rule(widths),
    ]
    for row in rows:
        out.append(
            "   ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip()
        )
    return out


def render_analysis(analysis: ErrorAnalysis) -> str:
    """Variant tables per model, then the agreement grid when present."""
    lines = [f"dataset: {analysis.dataset_name}", ""]
    for name in analysis.model_names:
        lines.append(f"[{name}]")
        lines.extend(render_variant_table(analysis.variant_tables[name]))
        lines.append("")
    if analysis.agreement is not None:
        lines.append("model agreement (y = correct, n = incorrect):")
        names = "  ".join(analysis.model_names)
        lines.append(f"  pattern over: {names}")
        for pattern in sorted(analysis.agreement, reverse=True):
            marks = " ".join("y" if b else "n" for b in pattern)
            lines.append(
                f"  {marks}   {analysis.agreement[pattern]}"
            )
    return "\n".join(lines) + "\n"


def predictions_jsonl(report: EvalReport) -> str:
    """One JSON object per prediction, in dataset order."""
    return (
        "\n".join(
            json.dumps(
                {
                    "id": p["id"],
                    "gold": p["gold"],
                    "pred": p["pred"],
                    "correct": p["correct"],
                },
                ensure_ascii=False,
            )
            for p in report.predictions
        )
        + "\n"
    )
